#include "asdbank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asdbank/error.hpp"
#include "asdbank/format.hpp"

namespace asdbank {

using json = nlohmann::ordered_json;

LabeledScores::LabeledScores(std::vector<double> scores, std::vector<bool> anomalous)
    : scores_(std::move(scores)), anomalous_(std::move(anomalous)) {
  if (scores_.size() != anomalous_.size()) {
    throw Error(ErrorCode::invariant, "scores and labels differ in length");
  }
  for (double s : scores_) {
    if (std::isnan(s)) throw Error(ErrorCode::non_finite, "score is NaN");
  }
  positives_ = static_cast<std::size_t>(std::count(anomalous_.begin(), anomalous_.end(), true));
  if (positives_ == 0 || positives_ == scores_.size()) {
    throw Error(ErrorCode::single_class,
                "metrics need both normal and anomalous clips (got " + std::to_string(positives_) +
                    " anomalous of " + std::to_string(scores_.size()) + ")");
  }
}

double auc(const LabeledScores& ls) {
  const auto scores = ls.scores();
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the midrank keeps everything in integers.
  std::uint64_t pos_rank_x2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank_x2 = i + 1 + j;  // (i+1) + j == 2 * midrank
    for (std::size_t k = i; k < j; ++k) {
      if (ls.anomalous()[order[k]]) pos_rank_x2 += rank_x2;
    }
    i = j;
  }
  const std::uint64_t n1 = ls.positives();
  const std::uint64_t n0 = ls.negatives();
  const std::uint64_t u_x2 = pos_rank_x2 - n1 * (n1 + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * n1 * n0);
}

double pauc_raw(const LabeledScores& ls, double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::out_of_range, "pAUC max FPR must lie in (0, 1]");
  }
  const auto scores = ls.scores();
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double n1 = static_cast<double>(ls.positives());
  const double n0 = static_cast<double>(ls.negatives());
  std::size_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_tpr = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < n) {
    // Lowering the threshold past a block of tied scores moves to one vertex.
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (ls.anomalous()[order[j]]) ++tp; else ++fp;
      ++j;
    }
    const double fpr = static_cast<double>(fp) / n0;
    const double tpr = static_cast<double>(tp) / n1;
    if (fpr >= p) {
      const double t = fpr > prev_fpr ? (p - prev_fpr) / (fpr - prev_fpr) : 0.0;
      const double tpr_at_p = prev_tpr + t * (tpr - prev_tpr);
      area += (p - prev_fpr) * (prev_tpr + tpr_at_p) / 2.0;
      return area;
    }
    area += (fpr - prev_fpr) * (prev_tpr + tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
    i = j;
  }
  return area;  // unreachable: the last vertex is (1, 1)
}

double pauc(const LabeledScores& ls, double p) {
  const double raw = pauc_raw(ls, p);
  const double min_area = p * p / 2.0;
  const double max_area = p;
  return 0.5 * (1.0 + (raw - min_area) / (max_area - min_area));
}

double harmonic_mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::empty_input, "harmonic mean of nothing");
  double inv = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) {
      throw Error(ErrorCode::out_of_range, "harmonic mean needs strictly positive values, got " +
                                               format_number(v));
    }
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

double official_score(std::span<const MachineMetrics> per_machine) {
  if (per_machine.empty()) throw Error(ErrorCode::empty_input, "no machine metrics");
  std::vector<double> values;
  values.reserve(per_machine.size() * 3);
  for (const auto& m : per_machine) {
    if (!m.auc_source || !m.auc_target) {
      throw Error(ErrorCode::invariant,
                  "machine '" + m.machine_type + "' lacks a source or target AUC");
    }
    values.push_back(*m.auc_source);
    values.push_back(*m.auc_target);
    values.push_back(m.pauc_mixed);
  }
  return harmonic_mean(values);
}

namespace {

bool all_positive(std::span<const double> v) {
  return !v.empty() && std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> hmean_if_defined(std::span<const double> v, std::size_t expected) {
  if (v.size() != expected || !all_positive(v)) return std::nullopt;
  return harmonic_mean(v);
}

}  // namespace

void aggregate(MetricsReport& r) {
  const std::size_t m = r.machines.size();
  std::vector<double> src, tgt, pa, pa_raw, mixed;
  for (const auto& mm : r.machines) {
    if (mm.auc_source) src.push_back(*mm.auc_source);
    if (mm.auc_target) tgt.push_back(*mm.auc_target);
    pa.push_back(mm.pauc_mixed);
    pa_raw.push_back(mm.pauc_mixed_raw);
    mixed.push_back(mm.auc_mixed);
  }
  r.hmean_auc_source = hmean_if_defined(src, m);
  r.hmean_auc_target = hmean_if_defined(tgt, m);
  r.hmean_pauc = hmean_if_defined(pa, m);
  r.mean_auc_source = src.size() == m && m > 0 ? std::optional(mean_of(src)) : std::nullopt;
  r.mean_auc_target = tgt.size() == m && m > 0 ? std::optional(mean_of(tgt)) : std::nullopt;
  r.mean_auc_mixed = m > 0 ? mean_of(mixed) : 0.0;
  r.mean_pauc = m > 0 ? mean_of(pa) : 0.0;

  r.official_score.reset();
  r.official_score_raw_pauc.reset();
  if (m > 0 && src.size() == m && tgt.size() == m) {
    std::vector<double> all, all_raw;
    for (std::size_t i = 0; i < m; ++i) {
      all.insert(all.end(), {src[i], tgt[i], pa[i]});
      all_raw.insert(all_raw.end(), {src[i], tgt[i], pa_raw[i]});
    }
    if (all_positive(all)) r.official_score = harmonic_mean(all);
    if (all_positive(all_raw)) r.official_score_raw_pauc = harmonic_mean(all_raw);
  }
}

MetricsReport build_report(const ScoreTable& table, const Manifest& manifest, double p) {
  struct Slice {
    std::vector<double> scores;
    std::vector<bool> labels;
    void add(double s, bool a) {
      scores.push_back(s);
      labels.push_back(a);
    }
  };
  struct PerMachine {
    Slice source, target, mixed;
  };

  std::vector<std::string> order;
  std::vector<PerMachine> slices;
  for (const auto& rec : table.records) {
    const ClipMeta* clip = manifest.find(rec.clip_id);
    if (!clip) {
      throw Error(ErrorCode::invariant, "scored clip '" + rec.clip_id + "' is not in the manifest");
    }
    if (clip->label == Label::unknown) {
      throw Error(ErrorCode::unknown_label,
                  "clip '" + rec.clip_id + "' has label unknown; metrics need known labels");
    }
    auto it = std::find(order.begin(), order.end(), clip->machine_type);
    const auto idx = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) {
      order.push_back(clip->machine_type);
      slices.emplace_back();
    }
    const bool anomalous = clip->label == Label::anomalous;
    auto& pm = slices[idx];
    (clip->domain == Domain::source ? pm.source : pm.target).add(rec.final_score, anomalous);
    pm.mixed.add(rec.final_score, anomalous);
  }

  // Report machines in manifest order.
  MetricsReport report;
  report.pauc_p = p;
  for (const auto& machine : manifest.machine_types()) {
    auto it = std::find(order.begin(), order.end(), machine);
    if (it == order.end()) continue;
    auto& pm = slices[static_cast<std::size_t>(it - order.begin())];
    auto with_context = [&](auto&& fn) {
      try {
        return fn();
      } catch (const Error& e) {
        throw Error(e.code(), "machine '" + machine + "': " + e.what());
      }
    };
    MachineMetrics mm;
    mm.machine_type = machine;
    with_context([&] {
      if (!pm.source.scores.empty()) {
        mm.auc_source = auc(LabeledScores(pm.source.scores, pm.source.labels));
      }
      if (!pm.target.scores.empty()) {
        mm.auc_target = auc(LabeledScores(pm.target.scores, pm.target.labels));
      }
      const LabeledScores mixed(pm.mixed.scores, pm.mixed.labels);
      mm.auc_mixed = auc(mixed);
      mm.pauc_mixed_raw = pauc_raw(mixed, p);
      mm.pauc_mixed = pauc(mixed, p);
      return 0;
    });
    report.machines.push_back(std::move(mm));
  }
  aggregate(report);
  return report;
}

namespace {

double selection_key(const MachineMetrics& m) {
  std::vector<double> v;
  if (m.auc_source && m.auc_target) {
    v = {*m.auc_source, *m.auc_target, m.pauc_mixed};
  } else {
    v = {m.auc_mixed, m.pauc_mixed};
  }
  return all_positive(v) ? harmonic_mean(v) : 0.0;
}

}  // namespace

MetricsReport select_best_layers(
    std::span<const std::pair<std::uint32_t, MetricsReport>> per_layer) {
  if (per_layer.empty()) throw Error(ErrorCode::empty_input, "no per-layer reports to select from");
  MetricsReport out;
  out.pauc_p = per_layer.front().second.pauc_p;
  out.selection = "oracle-layer";
  out.config = per_layer.front().second.config;
  for (const auto& first : per_layer.front().second.machines) {
    const MachineMetrics* best = nullptr;
    std::uint32_t best_layer = 0;
    double best_key = -1.0;
    for (const auto& [layer, report] : per_layer) {
      auto it = std::find_if(report.machines.begin(), report.machines.end(),
                             [&](const MachineMetrics& m) {
                               return m.machine_type == first.machine_type;
                             });
      if (it == report.machines.end()) continue;
      const double key = selection_key(*it);
      if (key > best_key) {
        best_key = key;
        best = &*it;
        best_layer = layer;
      }
    }
    MachineMetrics chosen = *best;
    chosen.layer = best_layer;
    out.machines.push_back(std::move(chosen));
  }
  aggregate(out);
  return out;
}

namespace {

json opt_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string opt_percent(const std::optional<double>& v) {
  return v ? format_percent(*v) : "";
}

}  // namespace

std::string report_json(const MetricsReport& r) {
  json doc;
  doc["selection"] = r.selection;
  doc["aggregation_unit"] = "machine_type";
  doc["pauc_p"] = r.pauc_p;
  doc["pauc_standardization"] = "mcclish";
  json machines = json::array();
  for (const auto& m : r.machines) {
    json j;
    j["machine_type"] = m.machine_type;
    if (m.layer) j["layer"] = *m.layer;
    j["auc_source"] = opt_number(m.auc_source);
    j["auc_target"] = opt_number(m.auc_target);
    j["pauc_mixed"] = m.pauc_mixed;
    j["pauc_mixed_raw"] = m.pauc_mixed_raw;
    j["auc_mixed"] = m.auc_mixed;
    j["percent"] = {{"auc_source", opt_percent(m.auc_source)},
                    {"auc_target", opt_percent(m.auc_target)},
                    {"pauc", format_percent(m.pauc_mixed)}};
    machines.push_back(std::move(j));
  }
  doc["machines"] = std::move(machines);
  doc["official_score"] = opt_number(r.official_score);
  doc["official_score_raw_pauc"] = opt_number(r.official_score_raw_pauc);
  doc["hmean_auc_source"] = opt_number(r.hmean_auc_source);
  doc["hmean_auc_target"] = opt_number(r.hmean_auc_target);
  doc["hmean_pauc"] = opt_number(r.hmean_pauc);
  doc["mean_auc_source"] = opt_number(r.mean_auc_source);
  doc["mean_auc_target"] = opt_number(r.mean_auc_target);
  doc["mean_auc_mixed"] = r.mean_auc_mixed;
  doc["mean_pauc"] = r.mean_pauc;
  doc["percent"] = {{"official_score", opt_percent(r.official_score)},
                    {"auc_source", opt_percent(r.hmean_auc_source)},
                    {"auc_target", opt_percent(r.hmean_auc_target)},
                    {"pauc", opt_percent(r.hmean_pauc)}};
  doc["config"] = r.config;
  return doc.dump(2) + "\n";
}

std::string report_csv(const MetricsReport& r) {
  std::string out = "machine_type,layer,auc_source,auc_target,pauc,pauc_raw,auc_mixed,official_score\n";
  for (const auto& m : r.machines) {
    std::optional<double> per_machine;
    if (m.auc_source && m.auc_target) {
      const double v[] = {*m.auc_source, *m.auc_target, m.pauc_mixed};
      if (all_positive(v)) per_machine = harmonic_mean(v);
    }
    out += csv_field(m.machine_type) + ',' + (m.layer ? std::to_string(*m.layer) : "") + ',' +
           opt_percent(m.auc_source) + ',' + opt_percent(m.auc_target) + ',' +
           format_percent(m.pauc_mixed) + ',' + format_percent(m.pauc_mixed_raw) + ',' +
           format_percent(m.auc_mixed) + ',' + opt_percent(per_machine) + '\n';
  }
  out += "harmonic_mean,," + opt_percent(r.hmean_auc_source) + ',' +
         opt_percent(r.hmean_auc_target) + ',' + opt_percent(r.hmean_pauc) + ",,," +
         opt_percent(r.official_score) + '\n';
  out += "arithmetic_mean,," + opt_percent(r.mean_auc_source) + ',' +
         opt_percent(r.mean_auc_target) + ',' + format_percent(r.mean_pauc) + ",," +
         format_percent(r.mean_auc_mixed) + ",\n";
  return out;
}

}  // namespace asdbank
