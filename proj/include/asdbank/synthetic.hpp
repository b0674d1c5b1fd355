#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asdbank/embedding.hpp"
#include "asdbank/manifest.hpp"

namespace asdbank {

/// Parameters of the seeded Gaussian stand-in dataset.
///
/// Per machine type m (independently seeded):
///   source normal   ~ N(0, I)
///   target normal   ~ N(target_shift * v_m, I), v_m a random unit vector
///   anomalous clips  = normal draw + anomaly_offset * a_{m,domain}, a fixed
///                      random unit direction per machine and domain
/// Every clip is stored as a T=1, F=1, C=dim tensor for each requested layer;
/// each layer is an independent draw with the same parameters.
struct SyntheticSpec {
  std::size_t machines = 7;
  std::size_t source_n = 990;  // train clips per machine, source domain
  std::size_t target_n = 10;   // train clips per machine, target domain; 0 = single-domain
  std::size_t test_n = 50;     // test clips per machine x domain x label
  double anomaly_offset = 3.0;
  double target_shift = 3.0;
  std::size_t dim = 8;
  std::vector<std::uint32_t> layers{1};
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Manifest manifest;
  /// tensors[l][i] is clip i of the manifest at layer spec.layers[l].
  std::vector<std::vector<EmbeddingTensor>> tensors;
};

/// Draws the whole dataset in memory.
SyntheticData synthesize(const SyntheticSpec& spec);

/// Writes root/manifest.json and every EMB1 file of synthesize(spec); returns
/// the manifest.
Manifest gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root);

}  // namespace asdbank
