#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "asdbank/manifest.hpp"
#include "asdbank/pooling.hpp"

namespace asdbank {

/// Parents of an interpolated row: lambda * target[target_index] +
/// (1 - lambda) * source[source_index].
struct MixupParents {
  std::uint32_t target_index = 0;
  std::uint32_t source_index = 0;
  double lambda = 0.0;

  friend bool operator==(const MixupParents&, const MixupParents&) = default;
};

/// nullopt marks an original row.
using RowProvenance = std::optional<MixupParents>;

/// Immutable N x D set of normal features for one domain. Rows are stored
/// contiguously, row-major.
class MemoryBank {
 public:
  /// Rows keep input order, all tagged original. Throws on empty or ragged
  /// input and on non-finite values.
  static MemoryBank build(std::span<const FeatureVector> features, Domain domain);

  /// Raw constructor used by augmentation and persistence.
  MemoryBank(Domain domain, std::size_t dim, std::vector<float> rows,
             std::vector<RowProvenance> provenance);

  Domain domain() const { return domain_; }
  std::size_t size() const { return provenance_.size(); }
  std::size_t dim() const { return dim_; }

  std::span<const float> row(std::size_t i) const {
    return {rows_.data() + i * dim_, dim_};
  }
  const RowProvenance& provenance(std::size_t i) const { return provenance_[i]; }
  std::span<const float> data() const { return rows_; }

  friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

 private:
  Domain domain_;
  std::size_t dim_;
  std::vector<float> rows_;
  std::vector<RowProvenance> provenance_;
};

struct Neighbor {
  std::uint32_t index = 0;
  double distance = 0.0;  // squared Euclidean

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

using NeighborList = std::vector<Neighbor>;

/// Sum of squared differences, accumulated in double in index order.
double squared_distance(std::span<const float> a, std::span<const float> b);

/// Exact k nearest rows by squared Euclidean distance, ascending; ties go to
/// the lower row index.
NeighborList knn_query(const MemoryBank& bank, std::span<const float> query, std::size_t k);
NeighborList knn_query(const MemoryBank& bank, const FeatureVector& query, std::size_t k);

/// Same as knn_query but rows listed in `excluded` (sorted or not) are skipped.
NeighborList knn_query_excluding(const MemoryBank& bank, std::span<const float> query,
                                 std::size_t k, std::span<const std::uint32_t> excluded);

/// One NeighborList per query, computed in parallel; output order matches input.
std::vector<NeighborList> knn_query_batch(const MemoryBank& bank,
                                          std::span<const FeatureVector> queries,
                                          std::size_t k);

/// Returns a new target bank: every row of `target` in order, then for each
/// original target row t and each of its k_s nearest source rows s (in
/// knn_query order) the row lambda * t + (1 - lambda) * s. Size is
/// N_target * (1 + k_s) when `target` holds only original rows.
MemoryBank memmixup(const MemoryBank& source, const MemoryBank& target, std::size_t k_s,
                    double lambda);

// Bank persistence: "EMBB" | u16 version | u8 dtype | u8 domain | u32 N |
// u32 D | N*D float32 | u32 json_len | provenance JSON array.
void write_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank read_bank(const std::filesystem::path& path);

}  // namespace asdbank
