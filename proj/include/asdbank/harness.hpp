#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asdbank/manifest.hpp"
#include "asdbank/metrics.hpp"
#include "asdbank/pooling.hpp"
#include "asdbank/scoring.hpp"

namespace asdbank {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

/// One entry of a low-shot grid: a fixed count, half of each machine's
/// training pool, or all of it.
struct Shot {
  enum class Kind { count, half, full };
  Kind kind = Kind::count;
  std::size_t n = 0;

  std::string label() const;
  static Shot parse(std::string_view s);
  friend bool operator==(const Shot&, const Shot&) = default;
};

struct LowShotPlan {
  std::vector<Shot> shots{{Shot::Kind::count, 4},   {Shot::Kind::count, 8},
                          {Shot::Kind::count, 16},  {Shot::Kind::count, 32},
                          {Shot::Kind::count, 64},  {Shot::Kind::count, 128},
                          {Shot::Kind::count, 200}, {Shot::Kind::half, 0},
                          {Shot::Kind::full, 0}};
};

/// Defaults are the headline setup: K_n = 1, temporal pooling, MemMixup over
/// the whole source bank with lambda = 0.9, transductive DN, p = 0.1.
struct ExperimentConfig {
  std::filesystem::path dataset_root;
  std::vector<std::uint32_t> layers{1};
  PoolingMode pooling = PoolingMode::temporal;
  std::size_t k_n = 1;
  std::optional<MemMixupSettings> memmixup = MemMixupSettings{};
  DnMode domain_norm = DnMode::transductive;
  NormGrouping norm_grouping = NormGrouping::global;
  double pauc_p = 0.1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path output_dir = "out";
  LowShotPlan lowshot;
};

nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Pooled features of one machine type at one layer.
struct MachineFeatures {
  std::string machine_type;
  std::vector<FeatureVector> source_train;
  std::vector<FeatureVector> target_train;
  std::vector<FeatureVector> test;
  std::vector<std::string> test_sections;
};

/// Pools tensors parallel to manifest.clips and groups them by machine type
/// in manifest order.
std::vector<MachineFeatures> pool_layer(const Manifest& manifest,
                                        std::span<const EmbeddingTensor> tensors,
                                        PoolingMode pooling);

/// Reads and pools every clip of `layer`, grouped by machine type in
/// manifest order.
std::vector<MachineFeatures> load_layer(const Manifest& manifest,
                                        const std::filesystem::path& root, std::uint32_t layer,
                                        PoolingMode pooling);

/// Builds per-machine banks, applies MemMixup when configured, scores every
/// test clip and returns one table in manifest order.
ScoreTable score_layer(const Manifest& manifest, std::span<const MachineFeatures> machines,
                       const ScoreConfig& config);

struct EvalResult {
  std::vector<std::pair<std::uint32_t, MetricsReport>> per_layer;
  MetricsReport oracle_layer;
};

EvalResult run_eval(const ExperimentConfig& config);

struct AblationCell {
  bool dn = false;
  bool memmixup = false;
  MetricsReport report;
};

struct AblationTable {
  std::uint32_t layer = 0;
  std::vector<AblationCell> cells;  // (off,off), (off,on), (on,off), (on,on) as (dn, memmixup)
};

/// The four ablation cells for one layer's features; writes nothing.
AblationTable ablation_layer(const Manifest& manifest, std::span<const MachineFeatures> machines,
                             const ExperimentConfig& config, std::uint32_t layer);

std::vector<AblationTable> run_ablation(const ExperimentConfig& config);

struct SweepRow {
  std::uint32_t layer = 0;
  MetricsReport report;
};

std::vector<SweepRow> run_layer_sweep(const ExperimentConfig& config);

struct LowShotRun {
  std::uint32_t layer = 0;
  Shot shot;
  std::optional<std::uint64_t> seed;  // nullopt for full-shot
  double mean_auc = 0.0;
  double mean_pauc = 0.0;
};

struct LowShotSummary {
  std::uint32_t layer = 0;
  Shot shot;
  std::size_t runs = 0;
  double mean_auc = 0.0;
  double mean_pauc = 0.0;
};

struct LowShotResult {
  std::vector<LowShotRun> runs;
  std::vector<LowShotSummary> summary;
};

/// Single-domain kNN over each machine's pooled training clips (no MemMixup,
/// no DN); subsampled without replacement from (seed, shot, machine).
/// Writes nothing.
LowShotResult lowshot_layer(const Manifest& manifest, std::span<const MachineFeatures> machines,
                            const LowShotPlan& plan, const ExperimentConfig& config,
                            std::uint32_t layer);

/// lowshot_layer over every configured layer, read from disk.
LowShotResult run_lowshot(const LowShotPlan& plan, const ExperimentConfig& config);

}  // namespace asdbank
