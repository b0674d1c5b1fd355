// asdbank command-line driver.
//
//   asdbank gen-synthetic --out data/ --seed 7
//   asdbank validate --dataset data/
//   asdbank eval --dataset data/ --layers 4,5 --ks full --dn transductive --out runs/eval
//   asdbank ablation | layer-sweep | lowshot  (same flags)
//
// Every experiment command accepts --config <file.json>; flags given on the
// command line override the file. On failure a single JSON line
// {"error": <code>, "message": <text>} goes to stderr and the exit code is 1.

#include <charconv>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asdbank/error.hpp"
#include "asdbank/format.hpp"
#include "asdbank/harness.hpp"
#include "asdbank/manifest.hpp"
#include "asdbank/synthetic.hpp"

namespace {

using namespace asdbank;

struct Overrides {
  std::string config_path;
  std::string dataset;
  std::string pooling;
  std::vector<std::uint32_t> layers;
  std::optional<std::size_t> k_n;
  std::string k_s;
  std::optional<double> lambda;
  std::string dn;
  std::string grouping;
  std::optional<double> pauc_p;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::vector<std::string> shots;
};

void add_experiment_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config");
  cmd->add_option("--dataset", o.dataset, "dataset root holding manifest.json");
  cmd->add_option("--pooling", o.pooling, "temporal | spectral | spatial")
      ->check(CLI::IsMember({"temporal", "spectral", "spatial"}));
  cmd->add_option("--layers", o.layers, "layer numbers (1-based)")->delimiter(',');
  cmd->add_option("--kn", o.k_n, "neighbours averaged in the anomaly distance");
  cmd->add_option("--ks", o.k_s, "MemMixup source neighbours: integer | full | off");
  cmd->add_option("--lambda", o.lambda, "MemMixup interpolation weight on the target row");
  cmd->add_option("--dn", o.dn, "off | transductive | train-loo")
      ->check(CLI::IsMember({"off", "transductive", "train-loo"}));
  cmd->add_option("--grouping", o.grouping, "global | by-section (experimental)")
      ->check(CLI::IsMember({"global", "by-section"}));
  cmd->add_option("--pauc-p", o.pauc_p, "max false-positive rate for pAUC");
  cmd->add_option("--seed", o.seeds, "seed(s) for subsampling")->delimiter(',');
  cmd->add_option("--out", o.out, "output directory");
}

std::size_t parse_count(const std::string& s, const char* flag) {
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc{} || ptr != s.data() + s.size() || n == 0) {
    throw Error(ErrorCode::parse, std::string(flag) + " expects a positive integer, got '" + s + "'");
  }
  return n;
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.dataset.empty()) c.dataset_root = o.dataset;
  if (!o.pooling.empty()) c.pooling = parse_pooling(o.pooling);
  if (!o.layers.empty()) c.layers = o.layers;
  if (o.k_n) c.k_n = *o.k_n;
  if (!o.k_s.empty()) {
    if (o.k_s == "off") {
      c.memmixup.reset();
    } else {
      MemMixupSettings s = c.memmixup.value_or(MemMixupSettings{});
      s.k_s = o.k_s == "full" ? 0 : parse_count(o.k_s, "--ks");
      c.memmixup = s;
    }
  }
  if (o.lambda) {
    MemMixupSettings s = c.memmixup.value_or(MemMixupSettings{});
    s.lambda = *o.lambda;
    c.memmixup = s;
  }
  if (!o.dn.empty()) c.domain_norm = parse_dn_mode(o.dn);
  if (!o.grouping.empty()) c.norm_grouping = parse_grouping(o.grouping);
  if (o.pauc_p) c.pauc_p = *o.pauc_p;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.shots.empty()) {
    c.lowshot.shots.clear();
    for (const auto& s : o.shots) c.lowshot.shots.push_back(Shot::parse(s));
  }
  if (c.dataset_root.empty()) {
    throw Error(ErrorCode::invariant, "no dataset given (use --dataset or dataset_root in --config)");
  }
  if (c.k_n == 0) throw Error(ErrorCode::out_of_range, "--kn must be >= 1");
  return c;
}

std::string pct(const std::optional<double>& v) {
  return v ? format_percent(*v) : "n/a";
}

void print_error(std::string_view code, std::string_view message) {
  nlohmann::json line = {{"error", code}, {"message", message}};
  std::cerr << line.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomalous sound detection with kNN memory banks over pretrained embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  std::string validate_root;
  auto* validate = app.add_subcommand("validate", "check a dataset's manifest and EMB1 files");
  validate->add_option("--dataset", validate_root, "dataset root")->required();

  Overrides eval_o, ablation_o, sweep_o, lowshot_o;
  auto* eval = app.add_subcommand("eval", "per-layer evaluation plus oracle-layer composite");
  add_experiment_flags(eval, eval_o);
  auto* ablation = app.add_subcommand("ablation", "DN x MemMixup 2x2 grid");
  add_experiment_flags(ablation, ablation_o);
  auto* sweep = app.add_subcommand("layer-sweep", "score every layer without MemMixup");
  add_experiment_flags(sweep, sweep_o);
  auto* lowshot = app.add_subcommand("lowshot", "subsampled training banks over seeds");
  add_experiment_flags(lowshot, lowshot_o);
  lowshot->add_option("--shots", lowshot_o.shots, "shot counts, 'half' or 'full'")->delimiter(',');

  SyntheticSpec spec;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synthetic", "write a seeded Gaussian EMB1 dataset");
  gen->add_option("--out", synth_out, "dataset root")->required();
  gen->add_option("--machines", spec.machines, "machine types");
  gen->add_option("--source-n", spec.source_n, "source-domain train clips per machine");
  gen->add_option("--target-n", spec.target_n, "target-domain train clips per machine");
  gen->add_option("--test-n", spec.test_n, "test clips per machine, domain and label");
  gen->add_option("--anomaly-offset", spec.anomaly_offset, "distance of anomalies from the normal mean");
  gen->add_option("--target-shift", spec.target_shift, "offset of the target domain from the source");
  gen->add_option("--dim", spec.dim, "feature width");
  gen->add_option("--layers", spec.layers, "layer numbers to write")->delimiter(',');
  gen->add_option("--seed", spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*validate) {
      const auto manifest = load_manifest(std::filesystem::path(validate_root) / "manifest.json");
      const auto report = validate_dataset(manifest, validate_root);
      std::cout << report.to_json();
      if (!report.ok()) {
        print_error("validation_failed",
                    std::to_string(report.problems.size()) + " problem(s) found");
        return 1;
      }
    } else if (*eval) {
      const auto result = run_eval(resolve(eval_o));
      for (const auto& [layer, report] : result.per_layer) {
        std::cout << "layer " << layer << ": official " << pct(report.official_score) << "\n";
      }
      std::cout << "oracle-layer: official " << pct(result.oracle_layer.official_score) << "\n";
    } else if (*ablation) {
      for (const auto& table : run_ablation(resolve(ablation_o))) {
        std::cout << "layer " << table.layer << "\n";
        for (const auto& cell : table.cells) {
          std::cout << "  dn=" << (cell.dn ? "on " : "off") << " memmixup="
                    << (cell.memmixup ? "on " : "off")
                    << " source=" << pct(cell.report.hmean_auc_source)
                    << " target=" << pct(cell.report.hmean_auc_target)
                    << " official=" << pct(cell.report.official_score) << "\n";
        }
      }
    } else if (*sweep) {
      for (const auto& row : run_layer_sweep(resolve(sweep_o))) {
        std::cout << "layer " << row.layer << ": official " << pct(row.report.official_score)
                  << "\n";
      }
    } else if (*lowshot) {
      const auto config = resolve(lowshot_o);
      const auto result = run_lowshot(config.lowshot, config);
      for (const auto& s : result.summary) {
        std::cout << "layer " << s.layer << " shot " << s.shot.label() << " (" << s.runs
                  << " runs): auc " << format_percent(s.mean_auc) << " pauc "
                  << format_percent(s.mean_pauc) << "\n";
      }
    } else if (*gen) {
      const auto manifest = gen_synthetic(spec, synth_out);
      std::cout << "wrote " << manifest.clips.size() << " clips x " << spec.layers.size()
                << " layer(s) to " << synth_out << "\n";
    }
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
