#include "asdbank/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "asdbank/error.hpp"
#include "asdbank/format.hpp"
#include "asdbank/parallel.hpp"

namespace asdbank {

using json = nlohmann::ordered_json;

std::string_view to_string(DnMode mode) {
  switch (mode) {
    case DnMode::off: return "off";
    case DnMode::transductive: return "transductive";
    case DnMode::train_loo: return "train-loo";
  }
  return "off";
}

DnMode parse_dn_mode(std::string_view s) {
  if (s == "off") return DnMode::off;
  if (s == "transductive") return DnMode::transductive;
  if (s == "train-loo" || s == "train_loo") return DnMode::train_loo;
  throw Error(ErrorCode::parse, "unknown domain-normalization mode '" + std::string(s) + "'");
}

std::string_view to_string(NormGrouping g) {
  return g == NormGrouping::global ? "global" : "by-section";
}

NormGrouping parse_grouping(std::string_view s) {
  if (s == "global") return NormGrouping::global;
  if (s == "by-section" || s == "by_section") return NormGrouping::by_section;
  throw Error(ErrorCode::parse, "unknown normalization grouping '" + std::string(s) + "'");
}

ZStats fit_zstats(std::span<const double> scores) {
  if (scores.size() < 2) {
    throw Error(ErrorCode::degenerate, "Z-score fit needs at least 2 scores, got " +
                                           std::to_string(scores.size()));
  }
  double sum = 0.0;
  for (double s : scores) sum += s;
  const double mu = sum / static_cast<double>(scores.size());
  double sq = 0.0;
  for (double s : scores) sq += (s - mu) * (s - mu);
  const double sigma = std::sqrt(sq / static_cast<double>(scores.size()));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::degenerate, "Z-score fit on a constant score distribution");
  }
  return {mu, sigma};
}

DomainNormParams fit_domain_norm(std::span<const double> scores_source,
                                 std::span<const double> scores_target, DnMode mode) {
  if (mode == DnMode::off) {
    throw Error(ErrorCode::invariant, "fit_domain_norm called with DN off");
  }
  return {fit_zstats(scores_source), fit_zstats(scores_target), mode};
}

Fused fuse(double raw_d_source, double raw_d_target, const DomainNormParams& params) {
  Fused out;
  out.z_source = (raw_d_source - params.source.mu) / params.source.sigma;
  out.z_target = (raw_d_target - params.target.mu) / params.target.sigma;
  if (out.z_target < out.z_source) {
    out.score = out.z_target;
    out.attributed = Domain::target;
  } else {
    out.score = out.z_source;
    out.attributed = Domain::source;
  }
  return out;
}

namespace {

double mean_distance(const NeighborList& nbs) {
  double sum = 0.0;
  for (const auto& nb : nbs) sum += nb.distance;
  return sum / static_cast<double>(nbs.size());
}

}  // namespace

double anomaly_distance(const MemoryBank& bank, std::span<const float> query, std::size_t k_n) {
  return mean_distance(knn_query(bank, query, k_n));
}

double anomaly_distance(const MemoryBank& bank, const FeatureVector& query, std::size_t k_n) {
  return anomaly_distance(bank, std::span<const float>(query.values), k_n);
}

std::vector<double> loo_distances(const MemoryBank& bank, std::size_t k_n) {
  std::vector<std::uint32_t> originals;
  std::map<std::uint32_t, std::vector<std::uint32_t>> children;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& p = bank.provenance(i);
    if (!p) {
      originals.push_back(static_cast<std::uint32_t>(i));
    } else {
      children[p->target_index].push_back(static_cast<std::uint32_t>(i));
    }
  }
  std::vector<double> out(originals.size());
  parallel_for(originals.size(), [&](std::size_t j) {
    const auto row = originals[j];
    std::vector<std::uint32_t> excluded{row};
    if (auto it = children.find(row); it != children.end()) {
      excluded.insert(excluded.end(), it->second.begin(), it->second.end());
    }
    out[j] = mean_distance(knn_query_excluding(bank, bank.row(row), k_n, excluded));
  });
  return out;
}

const ScoreRecord* ScoreTable::find(std::string_view clip_id) const {
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const ScoreRecord& r) { return r.clip_id == clip_id; });
  return it == records.end() ? nullptr : &*it;
}

ScoreTable score_dataset(const MemoryBank& source_bank, const MemoryBank& target_bank,
                         std::span<const FeatureVector> tests, const ScoreConfig& config,
                         std::span<const std::string> sections) {
  if (source_bank.dim() != target_bank.dim()) {
    throw Error(ErrorCode::dim_mismatch, "source and target banks differ in dimension");
  }
  ScoreTable table;
  table.config = config;
  table.records.resize(tests.size());

  parallel_for(tests.size(), [&](std::size_t i) {
    auto& rec = table.records[i];
    rec.clip_id = tests[i].clip_id;
    rec.raw_d_source = anomaly_distance(source_bank, tests[i], config.k_n);
    rec.raw_d_target = anomaly_distance(target_bank, tests[i], config.k_n);
  });

  if (config.dn == DnMode::off) {
    for (auto& rec : table.records) {
      rec.z_source = rec.raw_d_source;
      rec.z_target = rec.raw_d_target;
      if (rec.raw_d_target < rec.raw_d_source) {
        rec.final_score = rec.raw_d_target;
        rec.attributed_domain = Domain::target;
      } else {
        rec.final_score = rec.raw_d_source;
        rec.attributed_domain = Domain::source;
      }
    }
    return table;
  }

  // Group index per record; a single group unless fitting per section.
  std::vector<std::size_t> group_of(tests.size(), 0);
  std::vector<std::string> group_names{"all"};
  if (config.grouping == NormGrouping::by_section) {
    if (config.dn != DnMode::transductive) {
      throw Error(ErrorCode::invariant, "by-section grouping requires transductive DN");
    }
    if (sections.size() != tests.size()) {
      throw Error(ErrorCode::invariant, "by-section grouping needs one section per test clip");
    }
    group_names.clear();
    for (std::size_t i = 0; i < tests.size(); ++i) {
      auto it = std::find(group_names.begin(), group_names.end(), sections[i]);
      group_of[i] = static_cast<std::size_t>(it - group_names.begin());
      if (it == group_names.end()) group_names.push_back(sections[i]);
    }
  }

  std::vector<DomainNormParams> params;
  if (config.dn == DnMode::train_loo) {
    const auto src = loo_distances(source_bank, config.k_n);
    const auto tgt = loo_distances(target_bank, config.k_n);
    params.push_back(fit_domain_norm(src, tgt, DnMode::train_loo));
  } else {
    for (std::size_t g = 0; g < group_names.size(); ++g) {
      std::vector<double> src, tgt;
      for (std::size_t i = 0; i < tests.size(); ++i) {
        if (group_of[i] != g) continue;
        src.push_back(table.records[i].raw_d_source);
        tgt.push_back(table.records[i].raw_d_target);
      }
      params.push_back(fit_domain_norm(src, tgt, DnMode::transductive));
    }
  }
  for (std::size_t g = 0; g < params.size(); ++g) {
    table.norm_params.emplace_back(group_names[g], params[g]);
  }

  for (std::size_t i = 0; i < tests.size(); ++i) {
    auto& rec = table.records[i];
    const auto fused = fuse(rec.raw_d_source, rec.raw_d_target, params[group_of[i]]);
    rec.z_source = fused.z_source;
    rec.z_target = fused.z_target;
    rec.final_score = fused.score;
    rec.attributed_domain = fused.attributed;
  }
  return table;
}

std::string score_table_csv(const ScoreTable& table) {
  std::string out =
      "clip_id,raw_d_source,raw_d_target,z_source,z_target,final_score,attributed_domain\n";
  for (const auto& r : table.records) {
    out += csv_field(r.clip_id) + ',' + format_number(r.raw_d_source) + ',' +
           format_number(r.raw_d_target) + ',' + format_number(r.z_source) + ',' +
           format_number(r.z_target) + ',' + format_number(r.final_score) + ',' +
           std::string(to_string(r.attributed_domain)) + '\n';
  }
  return out;
}

namespace {

json config_json(const ScoreConfig& c) {
  json j;
  j["k_n"] = c.k_n;
  j["dn"] = to_string(c.dn);
  j["grouping"] = to_string(c.grouping);
  j["pooling"] = to_string(c.pooling);
  j["layer"] = c.layer;
  if (c.memmixup) {
    j["memmixup"] = {{"k_s", c.memmixup->k_s}, {"lambda", c.memmixup->lambda}};
  } else {
    j["memmixup"] = nullptr;
  }
  return j;
}

}  // namespace

std::string score_table_json(const ScoreTable& table) {
  json doc;
  doc["config"] = config_json(table.config);
  json params = json::array();
  for (const auto& [group, p] : table.norm_params) {
    params.push_back({{"group", group},
                      {"fit_mode", to_string(p.fit_mode)},
                      {"mu_s", p.source.mu},
                      {"sigma_s", p.source.sigma},
                      {"mu_t", p.target.mu},
                      {"sigma_t", p.target.sigma}});
  }
  doc["norm_params"] = std::move(params);
  json records = json::array();
  for (const auto& r : table.records) {
    records.push_back({{"clip_id", r.clip_id},
                       {"raw_d_source", r.raw_d_source},
                       {"raw_d_target", r.raw_d_target},
                       {"z_source", r.z_source},
                       {"z_target", r.z_target},
                       {"final_score", r.final_score},
                       {"attributed_domain", to_string(r.attributed_domain)}});
  }
  doc["records"] = std::move(records);
  return doc.dump(2) + "\n";
}

}  // namespace asdbank
