#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asdbank/memory_bank.hpp"
#include "asdbank/pooling.hpp"

namespace asdbank {

/// How raw per-domain distances are normalized before min-fusion.
///   off          - fused score is min(raw_d_source, raw_d_target)
///   transductive - Z-score statistics fit on the scored batch's own distances
///   train_loo    - statistics fit on leave-one-out distances of the bank rows
enum class DnMode { off, transductive, train_loo };

std::string_view to_string(DnMode mode);
DnMode parse_dn_mode(std::string_view s);

/// Experimental: by_section fits transductive statistics separately for each
/// section of the test batch.
enum class NormGrouping { global, by_section };

std::string_view to_string(NormGrouping g);
NormGrouping parse_grouping(std::string_view s);

struct ZStats {
  double mu = 0.0;
  double sigma = 1.0;
};

struct DomainNormParams {
  ZStats source;
  ZStats target;
  DnMode fit_mode = DnMode::transductive;
};

/// Arithmetic mean and population standard deviation. Throws Error{degenerate}
/// for fewer than two values or zero variance.
ZStats fit_zstats(std::span<const double> scores);

DomainNormParams fit_domain_norm(std::span<const double> scores_source,
                                 std::span<const double> scores_target, DnMode mode);

struct Fused {
  double z_source = 0.0;
  double z_target = 0.0;
  double score = 0.0;
  Domain attributed = Domain::source;
};

/// score = min(z_s, z_t); attribution is the argmin, source on an exact tie.
Fused fuse(double raw_d_source, double raw_d_target, const DomainNormParams& params);

/// Mean of the k_n smallest squared distances from query to the bank.
double anomaly_distance(const MemoryBank& bank, std::span<const float> query, std::size_t k_n);
double anomaly_distance(const MemoryBank& bank, const FeatureVector& query, std::size_t k_n);

/// Leave-one-out distances of every original row to the rest of its bank.
/// For an augmented target bank the mixup rows derived from the held-out row
/// are excluded together with it.
std::vector<double> loo_distances(const MemoryBank& bank, std::size_t k_n);

struct MemMixupSettings {
  std::size_t k_s = 0;  // 0 = whole source bank
  double lambda = 0.9;

  friend bool operator==(const MemMixupSettings&, const MemMixupSettings&) = default;
};

/// Scoring parameters plus the metadata recorded with every table.
struct ScoreConfig {
  std::size_t k_n = 1;
  DnMode dn = DnMode::transductive;
  NormGrouping grouping = NormGrouping::global;
  PoolingMode pooling = PoolingMode::temporal;
  std::uint32_t layer = 0;
  std::optional<MemMixupSettings> memmixup;
};

struct ScoreRecord {
  std::string clip_id;
  double raw_d_source = 0.0;
  double raw_d_target = 0.0;
  double z_source = 0.0;
  double z_target = 0.0;
  double final_score = 0.0;
  Domain attributed_domain = Domain::source;
};

struct ScoreTable {
  std::vector<ScoreRecord> records;
  ScoreConfig config;
  /// One entry for global grouping, one per section (in first-seen order)
  /// for by_section; empty when DN is off.
  std::vector<std::pair<std::string, DomainNormParams>> norm_params;

  const ScoreRecord* find(std::string_view clip_id) const;
};

/// Scores every test feature against both banks; records keep input order.
/// `sections` is only consulted for by_section grouping and must then be
/// parallel to `tests`.
ScoreTable score_dataset(const MemoryBank& source_bank, const MemoryBank& target_bank,
                         std::span<const FeatureVector> tests, const ScoreConfig& config,
                         std::span<const std::string> sections = {});

std::string score_table_csv(const ScoreTable& table);
std::string score_table_json(const ScoreTable& table);

}  // namespace asdbank
