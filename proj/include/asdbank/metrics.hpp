#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "asdbank/manifest.hpp"
#include "asdbank/scoring.hpp"

namespace asdbank {

/// Parallel score/label arrays; higher score means more anomalous. Both
/// classes must be present.
class LabeledScores {
 public:
  LabeledScores(std::vector<double> scores, std::vector<bool> anomalous);

  std::span<const double> scores() const { return scores_; }
  const std::vector<bool>& anomalous() const { return anomalous_; }
  std::size_t size() const { return scores_.size(); }
  std::size_t positives() const { return positives_; }
  std::size_t negatives() const { return scores_.size() - positives_; }

 private:
  std::vector<double> scores_;
  std::vector<bool> anomalous_;
  std::size_t positives_ = 0;
};

/// Mann-Whitney U / (#pos * #neg); a tied positive/negative pair counts 1/2.
double auc(const LabeledScores& ls);

/// Area under the ROC curve over FPR in [0, p], by trapezoids with linear
/// interpolation at FPR = p. Not standardized; lies in [0, p].
double pauc_raw(const LabeledScores& ls, double p);

/// McClish-standardized partial AUC: 0.5 * (1 + (raw - p^2/2) / (p - p^2/2)).
double pauc(const LabeledScores& ls, double p = 0.1);

/// n / sum(1 / v). Every value must be > 0.
double harmonic_mean(std::span<const double> values);

struct MachineMetrics {
  std::string machine_type;
  std::optional<double> auc_source;  // nullopt when the machine has no such test clips
  std::optional<double> auc_target;
  double pauc_mixed = 0.0;
  double pauc_mixed_raw = 0.0;
  double auc_mixed = 0.0;
  std::optional<std::uint32_t> layer;  // set in oracle-layer composites
};

/// Harmonic mean of {auc_source, auc_target, pauc_mixed} over all machines.
double official_score(std::span<const MachineMetrics> per_machine);

struct MetricsReport {
  std::vector<MachineMetrics> machines;
  double pauc_p = 0.1;
  std::optional<double> official_score;
  std::optional<double> official_score_raw_pauc;
  std::optional<double> hmean_auc_source;
  std::optional<double> hmean_auc_target;
  std::optional<double> hmean_pauc;
  std::optional<double> mean_auc_source;
  std::optional<double> mean_auc_target;
  double mean_auc_mixed = 0.0;
  double mean_pauc = 0.0;
  std::string selection = "single-layer";  // or "oracle-layer"
  nlohmann::ordered_json config;
};

/// Fills the aggregate fields of a report from its machine rows.
void aggregate(MetricsReport& report);

/// Slices the table by (machine_type, domain) for AUCs and by machine_type
/// for the mixed pAUC. Every scored clip must have a known label.
MetricsReport build_report(const ScoreTable& table, const Manifest& manifest, double p = 0.1);

/// Per machine type, keeps the layer whose metrics have the highest harmonic
/// mean. Uses test labels, so the result is tagged "oracle-layer".
MetricsReport select_best_layers(
    std::span<const std::pair<std::uint32_t, MetricsReport>> per_layer);

std::string report_json(const MetricsReport& report);
std::string report_csv(const MetricsReport& report);

}  // namespace asdbank
