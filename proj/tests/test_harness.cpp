#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "asdbank/error.hpp"
#include "asdbank/harness.hpp"
#include "asdbank/synthetic.hpp"
#include "expect_error.hpp"
#include "test_util.hpp"

using namespace asdbank;
using testutil::code_of;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.machines = 2;
  s.source_n = 120;
  s.target_n = 6;
  s.test_n = 20;
  s.dim = 8;
  s.seed = 9;
  return s;
}

ExperimentConfig config_for(const fs::path& data, const fs::path& out) {
  ExperimentConfig c;
  c.dataset_root = data;
  c.output_dir = out;
  return c;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.dataset_root = "/data/x";
  c.layers = {4, 5};
  c.pooling = PoolingMode::spatial;
  c.k_n = 3;
  c.memmixup = MemMixupSettings{7, 0.8};
  c.domain_norm = DnMode::train_loo;
  c.pauc_p = 0.2;
  c.seeds = {11, 12};
  c.lowshot.shots = {Shot::parse("4"), Shot::parse("half"), Shot::parse("full")};
  const auto j = config_to_json(c);
  const auto back = config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
  EXPECT_EQ(back.memmixup, c.memmixup);
  EXPECT_EQ(back.lowshot.shots, c.lowshot.shots);

  c.memmixup.reset();
  EXPECT_FALSE(config_from_json(nlohmann::json::parse(config_to_json(c).dump())).memmixup);
}

TEST(Config, DefaultsAndFullSentinel) {
  const auto c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.k_n, 1u);
  EXPECT_EQ(c.domain_norm, DnMode::transductive);
  ASSERT_TRUE(c.memmixup);
  EXPECT_EQ(c.memmixup->k_s, 0u);
  EXPECT_EQ(c.memmixup->lambda, 0.9);
  EXPECT_EQ(c.pauc_p, 0.1);
  EXPECT_EQ(config_to_json(c)["memmixup"]["k_s"], "full");
  EXPECT_EQ(code_of([] { config_from_json(nlohmann::json::parse(R"({"k_n": "many"})")); }),
            ErrorCode::parse);
  EXPECT_EQ(code_of([] { Shot::parse("lots"); }), ErrorCode::parse);
}

TEST(Synthetic, SameSeedSameBytes) {
  testutil::TempDir a, b;
  gen_synthetic(small_spec(), a.path());
  gen_synthetic(small_spec(), b.path());
  EXPECT_EQ(testutil::snapshot_tree(a.path()), testutil::snapshot_tree(b.path()));
  auto other = small_spec();
  other.seed = 10;
  testutil::TempDir c;
  gen_synthetic(other, c.path());
  EXPECT_NE(testutil::snapshot_tree(a.path()), testutil::snapshot_tree(c.path()));
}

TEST(Synthetic, InMemoryDrawMatchesFiles) {
  testutil::TempDir dir;
  auto spec = small_spec();
  spec.layers = {2, 3};
  const auto manifest = gen_synthetic(spec, dir.path());
  const auto data = synthesize(spec);
  EXPECT_EQ(data.manifest, manifest);
  ASSERT_EQ(data.tensors.size(), 2u);
  for (std::size_t li = 0; li < 2; ++li) {
    const auto mem = pool_layer(data.manifest, data.tensors[li], PoolingMode::temporal);
    const auto disk = load_layer(manifest, dir.path(), spec.layers[li], PoolingMode::temporal);
    ASSERT_EQ(mem.size(), disk.size());
    for (std::size_t m = 0; m < mem.size(); ++m) {
      EXPECT_EQ(mem[m].source_train, disk[m].source_train);
      EXPECT_EQ(mem[m].target_train, disk[m].target_train);
      EXPECT_EQ(mem[m].test, disk[m].test);
    }
  }
}

TEST(Synthetic, ManifestCountsAndValidation) {
  testutil::TempDir dir;
  const auto m = gen_synthetic(small_spec(), dir.path());
  const auto report = validate_dataset(load_manifest(dir.path() / "manifest.json"), dir.path());
  EXPECT_TRUE(report.ok());
  const auto machine = m.machine_types().front();
  EXPECT_EQ((report.counts.at({machine, Domain::source, Split::train})), 120u);
  EXPECT_EQ((report.counts.at({machine, Domain::target, Split::train})), 6u);
  EXPECT_EQ((report.counts.at({machine, Domain::target, Split::test})), 40u);
}

TEST(Eval, WritesReportsForEveryLayerPlusComposite) {
  testutil::TempDir data, out;
  auto spec = small_spec();
  spec.layers = {4, 5};
  gen_synthetic(spec, data.path());
  auto c = config_for(data.path(), out.path());
  c.layers = {4, 5};
  const auto result = run_eval(c);
  ASSERT_EQ(result.per_layer.size(), 2u);
  for (const auto* name : {"layer04/scores.csv", "layer04/metrics.json", "layer05/metrics.csv",
                           "layer05/scores.json", "oracle_layer/metrics.json", "run.json"}) {
    EXPECT_TRUE(fs::exists(out.path() / name)) << name;
  }
  for (const auto& [layer, r] : result.per_layer) {
    ASSERT_TRUE(r.official_score);
    EXPECT_GE(*result.oracle_layer.official_score, *r.official_score) << "layer " << layer;
  }
  EXPECT_EQ(result.oracle_layer.selection, "oracle-layer");

  // The report echoes the effective configuration.
  const auto doc = nlohmann::json::parse(read_text(out.path() / "layer04" / "metrics.json"));
  EXPECT_EQ(doc["config"]["layer"], 4);
  EXPECT_EQ(doc["config"]["dn"], "transductive");
  EXPECT_EQ(doc["config"]["memmixup"]["k_s"], "full");
  EXPECT_EQ(doc["config"]["memmixup"]["lambda"], 0.9);
  EXPECT_EQ(doc["config"]["experiment"]["k_n"], 1);
  EXPECT_EQ(doc["pauc_p"], 0.1);

  const auto scores = read_text(out.path() / "layer04" / "scores.csv");
  EXPECT_EQ(line_count(scores), 1u + 2u * 2u * 2u * 20u);
}

TEST(Eval, NormalizationAndMixupBeatPlainFusion) {
  testutil::TempDir data, plain_out, full_out;
  SyntheticSpec spec;  // 990 source / 10 target, shifted target
  spec.machines = 3;
  spec.seed = 1;
  gen_synthetic(spec, data.path());
  auto plain = config_for(data.path(), plain_out.path());
  plain.domain_norm = DnMode::off;
  plain.memmixup.reset();
  const auto full = config_for(data.path(), full_out.path());
  const auto a = run_eval(plain).per_layer[0].second;
  const auto b = run_eval(full).per_layer[0].second;
  EXPECT_GT(*b.official_score, *a.official_score);
}

TEST(Eval, ReportsCarryToolkitVersion) {
  testutil::TempDir data, out;
  gen_synthetic(small_spec(), data.path());
  run_eval(config_for(data.path(), out.path()));
  for (const auto* name : {"layer01/metrics.json", "oracle_layer/metrics.json"}) {
    const auto doc = nlohmann::json::parse(read_text(out.path() / name));
    EXPECT_EQ(doc["config"]["version"], std::string(kToolkitVersion)) << name;
  }
  EXPECT_EQ(nlohmann::json::parse(read_text(out.path() / "run.json"))["version"],
            std::string(kToolkitVersion));
}

TEST(Eval, MissingLayerIsReported) {
  testutil::TempDir data, out;
  gen_synthetic(small_spec(), data.path());
  auto c = config_for(data.path(), out.path());
  c.layers = {1, 7};
  try {
    run_eval(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_layer);
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
}

TEST(Eval, NoAnomalySignalGivesChanceMetrics) {
  testutil::TempDir data, out;
  auto spec = small_spec();
  spec.anomaly_offset = 0.0;
  spec.test_n = 200;
  gen_synthetic(spec, data.path());
  const auto r = run_eval(config_for(data.path(), out.path())).per_layer[0].second;
  for (const auto& m : r.machines) {
    EXPECT_NEAR(*m.auc_source, 0.5, 0.1);
    EXPECT_NEAR(*m.auc_target, 0.5, 0.1);
    EXPECT_NEAR(m.auc_mixed, 0.5, 0.1);
  }
}

TEST(Ablation, FourRowsInFixedOrder) {
  testutil::TempDir data, out;
  gen_synthetic(small_spec(), data.path());
  const auto tables = run_ablation(config_for(data.path(), out.path()));
  ASSERT_EQ(tables.size(), 1u);
  const auto& cells = tables[0].cells;
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_TRUE(!cells[0].dn && !cells[0].memmixup);
  EXPECT_TRUE(!cells[1].dn && cells[1].memmixup);
  EXPECT_TRUE(cells[2].dn && !cells[2].memmixup);
  EXPECT_TRUE(cells[3].dn && cells[3].memmixup);
  const auto csv = read_text(out.path() / "ablation_layer01.csv");
  EXPECT_EQ(line_count(csv), 5u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dn,memmixup,auc_source,auc_target,official_score");
  for (const auto& cell : cells) {
    EXPECT_TRUE(cell.report.hmean_auc_source);
    EXPECT_TRUE(cell.report.hmean_auc_target);
    EXPECT_TRUE(cell.report.official_score);
  }
}

TEST(Ablation, InMemoryCoreMatchesRun) {
  testutil::TempDir data, out;
  const auto spec = small_spec();
  gen_synthetic(spec, data.path());
  const auto run = run_ablation(config_for(data.path(), out.path()));
  const auto mem = synthesize(spec);
  const auto machines = pool_layer(mem.manifest, mem.tensors[0], PoolingMode::temporal);
  const auto core = ablation_layer(mem.manifest, machines, config_for(data.path(), out.path()), 1);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(report_json(core.cells[i].report), report_json(run[0].cells[i].report));
  }
}

TEST(Ablation, NoShiftBalancedCellsAgree) {
  SyntheticSpec spec;
  spec.machines = 3;
  spec.source_n = 300;
  spec.target_n = 300;
  spec.target_shift = 0.0;
  spec.test_n = 100;
  spec.seed = 4;
  const auto data = synthesize(spec);
  const auto machines = pool_layer(data.manifest, data.tensors[0], PoolingMode::temporal);
  const auto table = ablation_layer(data.manifest, machines, ExperimentConfig{}, 1);
  double lo = 1.0, hi = 0.0;
  for (const auto& cell : table.cells) {
    lo = std::min(lo, *cell.report.official_score);
    hi = std::max(hi, *cell.report.official_score);
  }
  EXPECT_LT(hi - lo, 0.02);
}

TEST(LayerSweep, OneRowPerLayer) {
  testutil::TempDir data, out;
  auto spec = small_spec();
  spec.source_n = 40;
  spec.test_n = 10;
  spec.layers.clear();
  for (std::uint32_t l = 1; l <= 12; ++l) spec.layers.push_back(l);
  gen_synthetic(spec, data.path());
  auto c = config_for(data.path(), out.path());
  c.layers = spec.layers;
  const auto rows = run_layer_sweep(c);
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(line_count(read_text(out.path() / "layer_sweep.csv")), 13u);
  const auto plot = read_text(out.path() / "layer_sweep_plot.csv");
  EXPECT_EQ(plot.substr(0, plot.find('\n')), "layer,official_score");
  EXPECT_EQ(line_count(plot), 13u);
  // Every data row is two numbers.
  std::istringstream plot_rows(plot.substr(plot.find('\n') + 1));
  std::string line;
  std::uint32_t expected_layer = 1;
  while (std::getline(plot_rows, line)) {
    const auto comma = line.find(',');
    ASSERT_NE(comma, std::string::npos);
    EXPECT_EQ(std::stoul(line.substr(0, comma)), expected_layer++);
    std::size_t used = 0;
    const double v = std::stod(line.substr(comma + 1), &used);
    EXPECT_EQ(used, line.size() - comma - 1);
    EXPECT_GT(v, 0.0);
  }
}

TEST(LayerSweep, IdenticalLayerFilesGiveIdenticalRows) {
  testutil::TempDir data, out;
  auto m = gen_synthetic(small_spec(), data.path());
  for (const auto& clip : m.clips) {
    fs::copy_file(embedding_path(data.path(), clip.clip_id, 1),
                  embedding_path(data.path(), clip.clip_id, 2));
  }
  // The copied files still say layer 1 in their header, so rewrite them.
  for (const auto& clip : m.clips) {
    auto t = read_embedding(embedding_path(data.path(), clip.clip_id, 2));
    t.layer = 2;
    write_embedding(t, data.path());
  }
  m.layers_available.push_back(2);
  m.embedding_dims.push_back({2, *m.dims_for(1)});
  save_manifest(m, data.path() / "manifest.json");
  auto c = config_for(data.path(), out.path());
  c.layers = {1, 2};
  const auto rows = run_layer_sweep(c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].report.official_score, rows[1].report.official_score);
  const auto csv = read_text(out.path() / "layer_sweep.csv");
  const auto l1 = csv.find("\n1,"), l2 = csv.find("\n2,");
  ASSERT_NE(l1, std::string::npos);
  ASSERT_NE(l2, std::string::npos);
  EXPECT_EQ(csv.substr(l1 + 2, l2 - l1 - 2), csv.substr(l2 + 2, csv.size() - l2 - 3));
}

TEST(LowShot, RunCountsAndDeterminism) {
  testutil::TempDir data, out;
  gen_synthetic(small_spec(), data.path());
  auto c = config_for(data.path(), out.path());
  LowShotPlan plan;
  plan.shots = {Shot::parse("4"), Shot::parse("half"), Shot::parse("full")};
  const auto a = run_lowshot(plan, c);
  ASSERT_EQ(a.summary.size(), 3u);
  EXPECT_EQ(a.summary[0].runs, 5u);
  EXPECT_EQ(a.summary[1].runs, 5u);
  EXPECT_EQ(a.summary[2].runs, 1u);
  EXPECT_EQ(a.runs.size(), 11u);
  const auto b = run_lowshot(plan, c);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].mean_auc, b.runs[i].mean_auc);
    EXPECT_EQ(a.runs[i].mean_pauc, b.runs[i].mean_pauc);
  }
  // Different seeds draw different subsets.
  EXPECT_NE(a.runs[0].mean_auc, a.runs[1].mean_auc);
  EXPECT_EQ(line_count(read_text(out.path() / "lowshot_runs.csv")), 12u);
}

TEST(LowShot, MoreShotsDoNotHurt) {
  SyntheticSpec spec;
  spec.machines = 3;
  spec.seed = 12;
  const auto data = synthesize(spec);
  const auto machines = pool_layer(data.manifest, data.tensors[0], PoolingMode::temporal);
  ExperimentConfig c;
  c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto r = lowshot_layer(data.manifest, machines, LowShotPlan{}, c, 1);
  ASSERT_EQ(r.summary.size(), 9u);
  // Non-decreasing up to the sampling noise of the per-seed runs.
  auto std_error = [&](const LowShotSummary& s) {
    double sum = 0.0, sq = 0.0;
    for (const auto& run : r.runs) {
      if (run.shot == s.shot) {
        sum += run.mean_auc;
        sq += run.mean_auc * run.mean_auc;
      }
    }
    const double n = static_cast<double>(s.runs);
    if (n < 2) return 0.0;
    return std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1)) / n);
  };
  for (std::size_t i = 1; i < r.summary.size(); ++i) {
    const double noise = 3.0 * std::hypot(std_error(r.summary[i]), std_error(r.summary[i - 1]));
    EXPECT_GE(r.summary[i].mean_auc, r.summary[i - 1].mean_auc - noise)
        << r.summary[i].shot.label() << " vs " << r.summary[i - 1].shot.label();
  }
  EXPECT_GT(r.summary.back().mean_auc, r.summary.front().mean_auc);
}

TEST(LowShot, ShotLargerThanPoolIsAnError) {
  testutil::TempDir data, out;
  gen_synthetic(small_spec(), data.path());
  LowShotPlan plan;
  plan.shots = {Shot::parse("1000")};
  EXPECT_EQ(code_of([&] { run_lowshot(plan, config_for(data.path(), out.path())); }),
            ErrorCode::out_of_range);
}
