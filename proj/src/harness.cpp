#include "asdbank/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "asdbank/error.hpp"
#include "asdbank/format.hpp"
#include "asdbank/memory_bank.hpp"
#include "asdbank/parallel.hpp"
#include "asdbank/random.hpp"

namespace asdbank {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string Shot::label() const {
  switch (kind) {
    case Kind::count: return std::to_string(n);
    case Kind::half: return "half";
    case Kind::full: return "full";
  }
  return "";
}

Shot Shot::parse(std::string_view s) {
  if (s == "half") return {Kind::half, 0};
  if (s == "full") return {Kind::full, 0};
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc{} || ptr != s.data() + s.size() || n == 0) {
    throw Error(ErrorCode::parse, "bad shot count '" + std::string(s) + "'");
  }
  return {Kind::count, n};
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["toolkit_version"] = kToolkitVersion;
  j["dataset_root"] = c.dataset_root.string();
  j["layers"] = c.layers;
  j["pooling"] = to_string(c.pooling);
  j["k_n"] = c.k_n;
  if (c.memmixup) {
    json mm;
    if (c.memmixup->k_s == 0) {
      mm["k_s"] = "full";
    } else {
      mm["k_s"] = c.memmixup->k_s;
    }
    mm["lambda"] = c.memmixup->lambda;
    j["memmixup"] = std::move(mm);
  } else {
    j["memmixup"] = nullptr;
  }
  j["domain_norm"] = to_string(c.domain_norm);
  j["norm_grouping"] = to_string(c.norm_grouping);
  j["pauc_p"] = c.pauc_p;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  json shots = json::array();
  for (const auto& s : c.lowshot.shots) {
    if (s.kind == Shot::Kind::count) {
      shots.push_back(s.n);
    } else {
      shots.push_back(s.label());
    }
  }
  j["lowshot"] = {{"shots", std::move(shots)}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  if (!doc.is_object()) throw Error(ErrorCode::parse, "config root must be an object");
  try {
    if (doc.contains("dataset_root")) c.dataset_root = doc["dataset_root"].get<std::string>();
    if (doc.contains("layers")) c.layers = doc["layers"].get<std::vector<std::uint32_t>>();
    if (doc.contains("pooling")) c.pooling = parse_pooling(doc["pooling"].get<std::string>());
    if (doc.contains("k_n")) c.k_n = doc["k_n"].get<std::size_t>();
    if (doc.contains("memmixup")) {
      const auto& mm = doc["memmixup"];
      if (mm.is_null()) {
        c.memmixup.reset();
      } else {
        MemMixupSettings s;
        if (mm.contains("k_s")) {
          if (mm["k_s"].is_string()) {
            if (mm["k_s"].get<std::string>() != "full") {
              throw Error(ErrorCode::parse, "memmixup.k_s must be an integer or \"full\"");
            }
            s.k_s = 0;
          } else {
            s.k_s = mm["k_s"].get<std::size_t>();
          }
        }
        if (mm.contains("lambda")) s.lambda = mm["lambda"].get<double>();
        c.memmixup = s;
      }
    }
    if (doc.contains("domain_norm")) {
      c.domain_norm = parse_dn_mode(doc["domain_norm"].get<std::string>());
    }
    if (doc.contains("norm_grouping")) {
      c.norm_grouping = parse_grouping(doc["norm_grouping"].get<std::string>());
    }
    if (doc.contains("pauc_p")) c.pauc_p = doc["pauc_p"].get<double>();
    if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    if (doc.contains("output_dir")) c.output_dir = doc["output_dir"].get<std::string>();
    if (doc.contains("lowshot") && doc["lowshot"].contains("shots")) {
      c.lowshot.shots.clear();
      for (const auto& s : doc["lowshot"]["shots"]) {
        c.lowshot.shots.push_back(s.is_string() ? Shot::parse(s.get<std::string>())
                                                : Shot{Shot::Kind::count, s.get<std::size_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

std::vector<MachineFeatures> group_by_machine(const Manifest& manifest,
                                              std::vector<FeatureVector> pooled) {
  if (pooled.size() != manifest.clips.size()) {
    throw Error(ErrorCode::invariant, "expected one feature per manifest clip");
  }
  std::vector<MachineFeatures> out;
  for (const auto& machine : manifest.machine_types()) {
    out.push_back(MachineFeatures{machine, {}, {}, {}, {}});
  }
  for (std::size_t i = 0; i < manifest.clips.size(); ++i) {
    const auto& clip = manifest.clips[i];
    auto it = std::find_if(out.begin(), out.end(), [&](const MachineFeatures& m) {
      return m.machine_type == clip.machine_type;
    });
    if (clip.split == Split::train) {
      (clip.domain == Domain::source ? it->source_train : it->target_train)
          .push_back(std::move(pooled[i]));
    } else {
      it->test.push_back(std::move(pooled[i]));
      it->test_sections.push_back(clip.section);
    }
  }
  return out;
}

std::vector<MachineFeatures> pool_layer(const Manifest& manifest,
                                        std::span<const EmbeddingTensor> tensors,
                                        PoolingMode pooling) {
  if (tensors.size() != manifest.clips.size()) {
    throw Error(ErrorCode::invariant, "expected one tensor per manifest clip");
  }
  std::vector<FeatureVector> pooled(tensors.size());
  parallel_for(tensors.size(), [&](std::size_t i) {
    if (tensors[i].clip_id != manifest.clips[i].clip_id) {
      throw Error(ErrorCode::invariant, "tensor '" + tensors[i].clip_id +
                                            "' does not match manifest clip '" +
                                            manifest.clips[i].clip_id + "'");
    }
    pooled[i] = pool(tensors[i], pooling);
  });
  return group_by_machine(manifest, std::move(pooled));
}

std::vector<MachineFeatures> load_layer(const Manifest& manifest, const fs::path& root,
                                        std::uint32_t layer, PoolingMode pooling) {
  if (!manifest.has_layer(layer)) {
    throw Error(ErrorCode::missing_layer,
                "layer " + std::to_string(layer) + " is not in the manifest");
  }
  std::vector<FeatureVector> pooled(manifest.clips.size());
  parallel_for(manifest.clips.size(), [&](std::size_t i) {
    const auto& clip = manifest.clips[i];
    auto tensor = read_embedding(embedding_path(root, clip.clip_id, layer));
    if (tensor.layer != layer) {
      throw Error(ErrorCode::invariant, "'" + clip.clip_id + "' layer header says " +
                                            std::to_string(tensor.layer) + ", expected " +
                                            std::to_string(layer));
    }
    pooled[i] = pool(tensor, pooling);
  });
  return group_by_machine(manifest, std::move(pooled));
}

namespace {

struct MachineBanks {
  MemoryBank source;
  MemoryBank target;
  std::optional<MemoryBank> augmented;
};

MachineBanks build_banks(const MachineFeatures& m, const std::optional<MemMixupSettings>& mix) {
  if (m.source_train.empty() || m.target_train.empty()) {
    throw Error(ErrorCode::empty_input, "machine '" + m.machine_type +
                                            "' needs both source and target training clips");
  }
  MachineBanks banks{MemoryBank::build(m.source_train, Domain::source),
                     MemoryBank::build(m.target_train, Domain::target), std::nullopt};
  if (mix) {
    const std::size_t k_s = mix->k_s == 0 ? banks.source.size() : mix->k_s;
    banks.augmented = memmixup(banks.source, banks.target, k_s, mix->lambda);
  }
  return banks;
}

/// Scores one machine and relabels its normalization groups with the machine name.
ScoreTable score_machine(const MachineFeatures& m, const MemoryBank& source,
                         const MemoryBank& target, const ScoreConfig& config) {
  try {
    auto table = score_dataset(source, target, m.test, config, m.test_sections);
    for (auto& [group, params] : table.norm_params) {
      group = config.grouping == NormGrouping::by_section ? m.machine_type + "/" + group
                                                          : m.machine_type;
    }
    return table;
  } catch (const Error& e) {
    throw Error(e.code(), "machine '" + m.machine_type + "': " + e.what());
  }
}

ScoreTable merge_in_manifest_order(const Manifest& manifest, std::vector<ScoreTable> parts,
                                   const ScoreConfig& config) {
  std::map<std::string, ScoreRecord> by_id;
  ScoreTable out;
  out.config = config;
  for (auto& part : parts) {
    for (auto& rec : part.records) by_id.emplace(rec.clip_id, std::move(rec));
    for (auto& np : part.norm_params) out.norm_params.push_back(std::move(np));
  }
  for (const auto& clip : manifest.clips) {
    if (clip.split != Split::test) continue;
    if (auto it = by_id.find(clip.clip_id); it != by_id.end()) {
      out.records.push_back(std::move(it->second));
    }
  }
  return out;
}

ScoreConfig score_config_for(const ExperimentConfig& c, std::uint32_t layer) {
  ScoreConfig sc;
  sc.k_n = c.k_n;
  sc.dn = c.domain_norm;
  sc.grouping = c.norm_grouping;
  sc.pooling = c.pooling;
  sc.layer = layer;
  sc.memmixup = c.memmixup;
  return sc;
}

json report_config(const ExperimentConfig& c, std::string_view command,
                   std::optional<std::uint32_t> layer, const ScoreConfig* sc) {
  json j;
  j["tool"] = "asdbank";
  j["version"] = kToolkitVersion;
  j["command"] = command;
  if (layer) j["layer"] = *layer;
  if (sc) {
    j["dn"] = to_string(sc->dn);
    j["memmixup"] = sc->memmixup ? json{{"k_s", sc->memmixup->k_s == 0
                                                    ? json("full")
                                                    : json(sc->memmixup->k_s)},
                                        {"lambda", sc->memmixup->lambda}}
                                 : json(nullptr);
  }
  j["experiment"] = config_to_json(c);
  return j;
}

std::string layer_dir(std::uint32_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer%02u", layer);
  return buf;
}

void write_run_manifest(const ExperimentConfig& c, std::string_view command,
                        const std::vector<std::string>& outputs) {
  json j;
  j["tool"] = "asdbank";
  j["version"] = kToolkitVersion;
  j["command"] = command;
  j["config"] = config_to_json(c);
  j["outputs"] = outputs;
  write_file_text(c.output_dir / "run.json", j.dump(2) + "\n");
}

Manifest load_dataset_manifest(const ExperimentConfig& c) {
  return load_manifest(c.dataset_root / "manifest.json");
}

void require_layers(const Manifest& manifest, const std::vector<std::uint32_t>& layers) {
  if (layers.empty()) throw Error(ErrorCode::empty_input, "no layers requested");
  std::string missing;
  for (auto l : layers) {
    if (!manifest.has_layer(l)) missing += (missing.empty() ? "" : ", ") + std::to_string(l);
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::missing_layer, "dataset has no embeddings for layer(s) " + missing);
  }
}

}  // namespace

ScoreTable score_layer(const Manifest& manifest, std::span<const MachineFeatures> machines,
                       const ScoreConfig& config) {
  std::vector<ScoreTable> parts;
  for (const auto& m : machines) {
    const auto banks = build_banks(m, config.memmixup);
    const MemoryBank& target = banks.augmented ? *banks.augmented : banks.target;
    parts.push_back(score_machine(m, banks.source, target, config));
  }
  return merge_in_manifest_order(manifest, std::move(parts), config);
}

EvalResult run_eval(const ExperimentConfig& c) {
  const auto manifest = load_dataset_manifest(c);
  require_layers(manifest, c.layers);
  EvalResult result;
  std::vector<std::string> outputs;
  for (auto layer : c.layers) {
    const auto machines = load_layer(manifest, c.dataset_root, layer, c.pooling);
    const ScoreConfig sc = score_config_for(c, layer);
    const auto table = score_layer(manifest, machines, sc);
    auto report = build_report(table, manifest, c.pauc_p);
    report.config = report_config(c, "eval", layer, &sc);

    const fs::path dir = c.output_dir / layer_dir(layer);
    write_file_text(dir / "scores.csv", score_table_csv(table));
    write_file_text(dir / "scores.json", score_table_json(table));
    write_file_text(dir / "metrics.json", report_json(report));
    write_file_text(dir / "metrics.csv", report_csv(report));
    for (const char* name : {"scores.csv", "scores.json", "metrics.json", "metrics.csv"}) {
      outputs.push_back(layer_dir(layer) + "/" + name);
    }
    result.per_layer.emplace_back(layer, std::move(report));
  }
  result.oracle_layer = select_best_layers(result.per_layer);
  result.oracle_layer.config = report_config(c, "eval", std::nullopt, nullptr);
  write_file_text(c.output_dir / "oracle_layer" / "metrics.json", report_json(result.oracle_layer));
  write_file_text(c.output_dir / "oracle_layer" / "metrics.csv", report_csv(result.oracle_layer));
  outputs.push_back("oracle_layer/metrics.json");
  outputs.push_back("oracle_layer/metrics.csv");
  write_run_manifest(c, "eval", outputs);
  return result;
}

AblationTable ablation_layer(const Manifest& manifest, std::span<const MachineFeatures> machines,
                             const ExperimentConfig& c, std::uint32_t layer) {
  const DnMode dn_on = c.domain_norm == DnMode::off ? DnMode::transductive : c.domain_norm;
  const MemMixupSettings mix = c.memmixup.value_or(MemMixupSettings{});
  std::vector<MachineBanks> banks;
  for (const auto& m : machines) banks.push_back(build_banks(m, mix));

  AblationTable table;
  table.layer = layer;
  for (bool dn : {false, true}) {
    for (bool use_mix : {false, true}) {
      ScoreConfig sc = score_config_for(c, layer);
      sc.dn = dn ? dn_on : DnMode::off;
      sc.memmixup = use_mix ? std::optional(mix) : std::nullopt;
      std::vector<ScoreTable> parts;
      for (std::size_t i = 0; i < machines.size(); ++i) {
        const MemoryBank& target = use_mix ? *banks[i].augmented : banks[i].target;
        parts.push_back(score_machine(machines[i], banks[i].source, target, sc));
      }
      const auto scores = merge_in_manifest_order(manifest, std::move(parts), sc);
      auto report = build_report(scores, manifest, c.pauc_p);
      report.config = report_config(c, "ablation", layer, &sc);
      table.cells.push_back({dn, use_mix, std::move(report)});
    }
  }
  return table;
}

std::vector<AblationTable> run_ablation(const ExperimentConfig& c) {
  const auto manifest = load_dataset_manifest(c);
  require_layers(manifest, c.layers);

  std::vector<AblationTable> tables;
  std::vector<std::string> outputs;
  for (auto layer : c.layers) {
    const auto machines = load_layer(manifest, c.dataset_root, layer, c.pooling);
    auto table = ablation_layer(manifest, machines, c, layer);

    std::string csv = "dn,memmixup,auc_source,auc_target,official_score\n";
    json doc = json::array();
    for (const auto& cell : table.cells) {
      const auto& r = cell.report;
      auto pct = [](const std::optional<double>& v) { return v ? format_percent(*v) : ""; };
      csv += std::string(cell.dn ? "on" : "off") + ',' + (cell.memmixup ? "on" : "off") + ',' +
             pct(r.hmean_auc_source) + ',' + pct(r.hmean_auc_target) + ',' +
             pct(r.official_score) + '\n';
      doc.push_back(json::parse(report_json(r)));
    }
    const std::string base = "ablation_" + layer_dir(layer);
    write_file_text(c.output_dir / (base + ".csv"), csv);
    write_file_text(c.output_dir / (base + ".json"), doc.dump(2) + "\n");
    outputs.push_back(base + ".csv");
    outputs.push_back(base + ".json");
    tables.push_back(std::move(table));
  }
  write_run_manifest(c, "ablation", outputs);
  return tables;
}

std::vector<SweepRow> run_layer_sweep(const ExperimentConfig& c) {
  const auto manifest = load_dataset_manifest(c);
  require_layers(manifest, c.layers);
  std::vector<SweepRow> rows;
  for (auto layer : c.layers) {
    const auto machines = load_layer(manifest, c.dataset_root, layer, c.pooling);
    ScoreConfig sc = score_config_for(c, layer);
    sc.memmixup.reset();
    const auto table = score_layer(manifest, machines, sc);
    auto report = build_report(table, manifest, c.pauc_p);
    report.config = report_config(c, "layer-sweep", layer, &sc);
    rows.push_back({layer, std::move(report)});
  }

  std::string csv = "layer,official_score";
  for (const auto& m : rows.front().report.machines) {
    csv += ',' + csv_field(m.machine_type + "_auc_source") + ',' +
           csv_field(m.machine_type + "_auc_target") + ',' + csv_field(m.machine_type + "_pauc");
  }
  csv += '\n';
  std::string plot = "layer,official_score\n";
  auto pct = [](const std::optional<double>& v) { return v ? format_percent(*v) : ""; };
  for (const auto& row : rows) {
    csv += std::to_string(row.layer) + ',' + pct(row.report.official_score);
    for (const auto& m : row.report.machines) {
      csv += ',' + pct(m.auc_source) + ',' + pct(m.auc_target) + ',' + format_percent(m.pauc_mixed);
    }
    csv += '\n';
    plot += std::to_string(row.layer) + ',' + pct(row.report.official_score) + '\n';
  }
  write_file_text(c.output_dir / "layer_sweep.csv", csv);
  write_file_text(c.output_dir / "layer_sweep_plot.csv", plot);
  write_run_manifest(c, "layer-sweep", {"layer_sweep.csv", "layer_sweep_plot.csv"});
  return rows;
}

namespace {

struct LowShotMachine {
  std::vector<FeatureVector> pool;  // all training clips, both domains
  std::vector<FeatureVector> test;
  std::vector<bool> anomalous;
};

std::pair<double, double> lowshot_once(std::span<const LowShotMachine> machines,
                                       const Shot& shot, std::optional<std::uint64_t> seed,
                                       std::size_t k_n, double p) {
  double auc_sum = 0.0, pauc_sum = 0.0;
  for (std::size_t m = 0; m < machines.size(); ++m) {
    const auto& lm = machines[m];
    std::vector<FeatureVector> chosen;
    if (shot.kind == Shot::Kind::full) {
      chosen = lm.pool;
    } else {
      const std::size_t n = shot.kind == Shot::Kind::half ? lm.pool.size() / 2 : shot.n;
      if (n == 0 || n > lm.pool.size()) {
        throw Error(ErrorCode::out_of_range, "shot " + shot.label() + " needs " +
                                                 std::to_string(n) + " clips, machine has " +
                                                 std::to_string(lm.pool.size()));
      }
      const std::uint64_t shot_tag = shot.kind == Shot::Kind::half ? 0xFFFFFFFFull : shot.n;
      Rng rng(mix_seed(*seed, {shot_tag, m}));
      for (auto idx : rng.sample_without_replacement(lm.pool.size(), n)) {
        chosen.push_back(lm.pool[idx]);
      }
    }
    const auto bank = MemoryBank::build(chosen, Domain::source);
    std::vector<double> scores(lm.test.size());
    parallel_for(lm.test.size(),
                 [&](std::size_t i) { scores[i] = anomaly_distance(bank, lm.test[i], k_n); });
    const LabeledScores ls(std::move(scores), lm.anomalous);
    auc_sum += auc(ls);
    pauc_sum += pauc(ls, p);
  }
  const double count = static_cast<double>(machines.size());
  return {auc_sum / count, pauc_sum / count};
}

}  // namespace

LowShotResult lowshot_layer(const Manifest& manifest, std::span<const MachineFeatures> features,
                            const LowShotPlan& plan, const ExperimentConfig& c,
                            std::uint32_t layer) {
  if (plan.shots.empty()) throw Error(ErrorCode::empty_input, "low-shot plan has no shots");
  if (c.seeds.empty()) throw Error(ErrorCode::empty_input, "low-shot needs at least one seed");
  std::vector<LowShotMachine> machines;
  for (const auto& mf : features) {
    LowShotMachine lm;
    lm.pool = mf.source_train;
    lm.pool.insert(lm.pool.end(), mf.target_train.begin(), mf.target_train.end());
    lm.test = mf.test;
    for (const auto& fv : mf.test) {
      const auto* clip = manifest.find(fv.clip_id);
      if (clip->label == Label::unknown) {
        throw Error(ErrorCode::unknown_label, "clip '" + fv.clip_id + "' has label unknown");
      }
      lm.anomalous.push_back(clip->label == Label::anomalous);
    }
    machines.push_back(std::move(lm));
  }

  LowShotResult result;
  for (const auto& shot : plan.shots) {
    LowShotSummary summary{layer, shot, 0, 0.0, 0.0};
    std::vector<std::optional<std::uint64_t>> seeds;
    if (shot.kind == Shot::Kind::full) {
      seeds.emplace_back(std::nullopt);
    } else {
      for (auto s : c.seeds) seeds.emplace_back(s);
    }
    for (const auto& seed : seeds) {
      const auto [a, pa] = lowshot_once(machines, shot, seed, c.k_n, c.pauc_p);
      result.runs.push_back({layer, shot, seed, a, pa});
      summary.mean_auc += a;
      summary.mean_pauc += pa;
      ++summary.runs;
    }
    summary.mean_auc /= static_cast<double>(summary.runs);
    summary.mean_pauc /= static_cast<double>(summary.runs);
    result.summary.push_back(summary);
  }
  return result;
}

LowShotResult run_lowshot(const LowShotPlan& plan, const ExperimentConfig& c) {
  const auto manifest = load_dataset_manifest(c);
  require_layers(manifest, c.layers);

  LowShotResult result;
  for (auto layer : c.layers) {
    const auto features = load_layer(manifest, c.dataset_root, layer, c.pooling);
    auto part = lowshot_layer(manifest, features, plan, c, layer);
    result.runs.insert(result.runs.end(), part.runs.begin(), part.runs.end());
    result.summary.insert(result.summary.end(), part.summary.begin(), part.summary.end());
  }

  std::string runs_csv = "layer,shot,seed,mean_auc,mean_pauc\n";
  for (const auto& r : result.runs) {
    runs_csv += std::to_string(r.layer) + ',' + r.shot.label() + ',' +
                (r.seed ? std::to_string(*r.seed) : "") + ',' + format_number(r.mean_auc) + ',' +
                format_number(r.mean_pauc) + '\n';
  }
  std::string csv = "layer,shot,runs,mean_auc,mean_pauc\n";
  for (const auto& s : result.summary) {
    csv += std::to_string(s.layer) + ',' + s.shot.label() + ',' + std::to_string(s.runs) + ',' +
           format_percent(s.mean_auc) + ',' + format_percent(s.mean_pauc) + '\n';
  }
  write_file_text(c.output_dir / "lowshot_runs.csv", runs_csv);
  write_file_text(c.output_dir / "lowshot.csv", csv);
  write_run_manifest(c, "lowshot", {"lowshot_runs.csv", "lowshot.csv"});
  return result;
}

}  // namespace asdbank
