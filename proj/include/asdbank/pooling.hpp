#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "asdbank/embedding.hpp"

namespace asdbank {

/// Pooled, flattened embedding used for distance computation.
struct FeatureVector {
  std::string clip_id;
  std::uint32_t layer = 0;
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// temporal: mean over T, keeps F x C.
/// spectral: mean over F, keeps T x C.
/// spatial:  mean over T and F, keeps C.
enum class PoolingMode { temporal, spectral, spatial };

std::string_view to_string(PoolingMode mode);
PoolingMode parse_pooling(std::string_view s);

std::size_t pooled_dim(const Dims& dims, PoolingMode mode);

// Sums accumulate in double; output is float. Output is always C-fastest.
FeatureVector pool(const EmbeddingTensor& tensor, PoolingMode mode);

}  // namespace asdbank
