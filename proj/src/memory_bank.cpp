#include "asdbank/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <queue>

#include <json.hpp>

#include "asdbank/error.hpp"
#include "asdbank/parallel.hpp"

namespace asdbank {

namespace fs = std::filesystem;

MemoryBank::MemoryBank(Domain domain, std::size_t dim, std::vector<float> rows,
                       std::vector<RowProvenance> provenance)
    : domain_(domain), dim_(dim), rows_(std::move(rows)), provenance_(std::move(provenance)) {
  if (provenance_.empty() || dim_ == 0) {
    throw Error(ErrorCode::empty_input, "memory bank needs at least one row of dimension >= 1");
  }
  if (rows_.size() != provenance_.size() * dim_) {
    throw Error(ErrorCode::ragged, "memory bank storage does not match N x D");
  }
  for (float v : rows_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "memory bank row is not finite");
  }
}

MemoryBank MemoryBank::build(std::span<const FeatureVector> features, Domain domain) {
  if (features.empty()) {
    throw Error(ErrorCode::empty_input, "cannot build a memory bank from zero features");
  }
  const std::size_t dim = features.front().dim();
  std::vector<float> rows;
  rows.reserve(features.size() * dim);
  for (const auto& fv : features) {
    if (fv.dim() != dim) {
      throw Error(ErrorCode::ragged, "feature '" + fv.clip_id + "' has dimension " +
                                         std::to_string(fv.dim()) + ", bank expects " +
                                         std::to_string(dim));
    }
    rows.insert(rows.end(), fv.values.begin(), fv.values.end());
  }
  return MemoryBank(domain, dim, std::move(rows),
                    std::vector<RowProvenance>(features.size(), std::nullopt));
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += diff * diff;
  }
  return sum;
}

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

template <typename Skip>
NeighborList select_k(const MemoryBank& bank, std::span<const float> query, std::size_t k,
                      std::size_t available, Skip skip) {
  if (query.size() != bank.dim()) {
    throw Error(ErrorCode::dim_mismatch, "query dimension " + std::to_string(query.size()) +
                                             " != bank dimension " + std::to_string(bank.dim()));
  }
  if (k == 0) throw Error(ErrorCode::out_of_range, "k must be >= 1");
  if (k > available) {
    throw Error(ErrorCode::k_too_large, "k = " + std::to_string(k) + " exceeds the " +
                                            std::to_string(available) + " searchable bank rows");
  }

  const std::size_t n = bank.size();
  if (k == 1) {
    Neighbor best{0, INFINITY};
    bool found = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (skip(i)) continue;
      const double d = squared_distance(bank.row(i), query);
      if (!found || d < best.distance) {
        best = {static_cast<std::uint32_t>(i), d};
        found = true;
      }
    }
    return {best};
  }

  // Max-heap on (distance, index) holding the k best seen so far.
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(&closer)> heap(&closer);
  for (std::size_t i = 0; i < n; ++i) {
    if (skip(i)) continue;
    const Neighbor cand{static_cast<std::uint32_t>(i), squared_distance(bank.row(i), query)};
    if (heap.size() < k) {
      heap.push(cand);
    } else if (closer(cand, heap.top())) {
      heap.pop();
      heap.push(cand);
    }
  }
  NeighborList out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

}  // namespace

NeighborList knn_query(const MemoryBank& bank, std::span<const float> query, std::size_t k) {
  return select_k(bank, query, k, bank.size(), [](std::size_t) { return false; });
}

NeighborList knn_query(const MemoryBank& bank, const FeatureVector& query, std::size_t k) {
  return knn_query(bank, std::span<const float>(query.values), k);
}

NeighborList knn_query_excluding(const MemoryBank& bank, std::span<const float> query,
                                 std::size_t k, std::span<const std::uint32_t> excluded) {
  std::vector<bool> mask(bank.size(), false);
  std::size_t masked = 0;
  for (auto idx : excluded) {
    if (idx < mask.size() && !mask[idx]) {
      mask[idx] = true;
      ++masked;
    }
  }
  return select_k(bank, query, k, bank.size() - masked,
                  [&](std::size_t i) { return static_cast<bool>(mask[i]); });
}

std::vector<NeighborList> knn_query_batch(const MemoryBank& bank,
                                          std::span<const FeatureVector> queries,
                                          std::size_t k) {
  std::vector<NeighborList> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { out[i] = knn_query(bank, queries[i], k); });
  return out;
}

MemoryBank memmixup(const MemoryBank& source, const MemoryBank& target, std::size_t k_s,
                    double lambda) {
  if (source.dim() != target.dim()) {
    throw Error(ErrorCode::dim_mismatch, "source bank dimension " + std::to_string(source.dim()) +
                                             " != target bank dimension " +
                                             std::to_string(target.dim()));
  }
  if (k_s == 0) throw Error(ErrorCode::out_of_range, "K_s must be >= 1");
  if (k_s > source.size()) {
    throw Error(ErrorCode::k_too_large, "K_s = " + std::to_string(k_s) + " exceeds the " +
                                            std::to_string(source.size()) + " source rows");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::out_of_range, "lambda must lie in [0, 1]");
  }

  std::vector<std::uint32_t> originals;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!target.provenance(i).has_value()) originals.push_back(static_cast<std::uint32_t>(i));
  }

  std::vector<NeighborList> neighbors(originals.size());
  parallel_for(originals.size(), [&](std::size_t j) {
    neighbors[j] = knn_query(source, target.row(originals[j]), k_s);
  });

  const std::size_t dim = target.dim();
  const double lam = lambda;
  std::vector<float> rows(target.data().begin(), target.data().end());
  rows.reserve(rows.size() + originals.size() * k_s * dim);
  std::vector<RowProvenance> prov;
  prov.reserve(target.size() + originals.size() * k_s);
  for (std::size_t i = 0; i < target.size(); ++i) prov.push_back(target.provenance(i));

  for (std::size_t j = 0; j < originals.size(); ++j) {
    const auto ft = target.row(originals[j]);
    for (const auto& nb : neighbors[j]) {
      const auto fs_row = source.row(nb.index);
      for (std::size_t d = 0; d < dim; ++d) {
        rows.push_back(static_cast<float>(lam * ft[d] + (1.0 - lam) * fs_row[d]));
      }
      prov.push_back(MixupParents{originals[j], nb.index, lambda});
    }
  }
  return MemoryBank(Domain::target, dim, std::move(rows), std::move(prov));
}

namespace {
constexpr char kBankMagic[4] = {'E', 'M', 'B', 'B'};
constexpr std::size_t kBankHeaderBytes = 4 + 2 + 1 + 1 + 4 + 4;
}  // namespace

void write_bank(const MemoryBank& bank, const fs::path& path) {
  std::vector<std::byte> out;
  out.reserve(kBankHeaderBytes + bank.data().size() * 4);
  for (char ch : kBankMagic) out.push_back(static_cast<std::byte>(ch));
  le::put_u16(out, 1);
  out.push_back(static_cast<std::byte>(emb1::kDtypeFloat32));
  out.push_back(static_cast<std::byte>(bank.domain() == Domain::source ? 0 : 1));
  le::put_u32(out, static_cast<std::uint32_t>(bank.size()));
  le::put_u32(out, static_cast<std::uint32_t>(bank.dim()));
  for (float v : bank.data()) le::put_f32(out, v);

  nlohmann::ordered_json prov = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& p = bank.provenance(i);
    if (!p) {
      prov.push_back({{"kind", "original"}});
    } else {
      prov.push_back({{"kind", "mixup"},
                      {"target_index", p->target_index},
                      {"source_index", p->source_index},
                      {"lambda", p->lambda}});
    }
  }
  const std::string text = prov.dump();
  le::put_u32(out, static_cast<std::uint32_t>(text.size()));
  for (char ch : text) out.push_back(static_cast<std::byte>(ch));
  write_file_bytes(path, out);
}

MemoryBank read_bank(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::span<const std::byte> in(bytes);
  if (in.size() < kBankHeaderBytes || std::memcmp(in.data(), kBankMagic, 4) != 0) {
    throw Error(ErrorCode::bad_magic, "'" + path.string() + "' is not a bank file");
  }
  if (le::get_u16(in, 4) != 1) {
    throw Error(ErrorCode::unsupported_version, "unsupported bank file version");
  }
  if (std::to_integer<std::uint8_t>(in[6]) != emb1::kDtypeFloat32) {
    throw Error(ErrorCode::unsupported_dtype, "unsupported bank dtype");
  }
  const Domain domain = std::to_integer<int>(in[7]) == 0 ? Domain::source : Domain::target;
  const std::size_t n = le::get_u32(in, 8);
  const std::size_t dim = le::get_u32(in, 12);
  const std::size_t payload_end = kBankHeaderBytes + n * dim * 4;
  if (in.size() < payload_end + 4) {
    throw Error(ErrorCode::size_mismatch, "bank file '" + path.string() + "' is truncated");
  }
  std::vector<float> rows(n * dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = le::get_f32(in, kBankHeaderBytes + 4 * i);
  }
  const std::size_t json_len = le::get_u32(in, payload_end);
  if (in.size() != payload_end + 4 + json_len) {
    throw Error(ErrorCode::size_mismatch, "bank file '" + path.string() + "' has a bad trailer");
  }
  const auto* text = reinterpret_cast<const char*>(in.data() + payload_end + 4);
  std::vector<RowProvenance> prov;
  try {
    const auto doc = nlohmann::json::parse(text, text + json_len);
    for (const auto& entry : doc) {
      if (entry.at("kind") == "original") {
        prov.emplace_back(std::nullopt);
      } else {
        prov.emplace_back(MixupParents{entry.at("target_index").get<std::uint32_t>(),
                                       entry.at("source_index").get<std::uint32_t>(),
                                       entry.at("lambda").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bank provenance block: ") + e.what());
  }
  if (prov.size() != n) {
    throw Error(ErrorCode::size_mismatch, "bank provenance has " + std::to_string(prov.size()) +
                                              " entries for " + std::to_string(n) + " rows");
  }
  return MemoryBank(domain, dim, std::move(rows), std::move(prov));
}

}  // namespace asdbank
