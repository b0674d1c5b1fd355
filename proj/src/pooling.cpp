#include "asdbank/pooling.hpp"

#include "asdbank/error.hpp"

namespace asdbank {

std::string_view to_string(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::temporal: return "temporal";
    case PoolingMode::spectral: return "spectral";
    case PoolingMode::spatial: return "spatial";
  }
  return "temporal";
}

PoolingMode parse_pooling(std::string_view s) {
  if (s == "temporal") return PoolingMode::temporal;
  if (s == "spectral") return PoolingMode::spectral;
  if (s == "spatial") return PoolingMode::spatial;
  throw Error(ErrorCode::parse, "unknown pooling mode '" + std::string(s) + "'");
}

std::size_t pooled_dim(const Dims& dims, PoolingMode mode) {
  switch (mode) {
    case PoolingMode::temporal: return static_cast<std::size_t>(dims.f) * dims.c;
    case PoolingMode::spectral: return static_cast<std::size_t>(dims.t) * dims.c;
    case PoolingMode::spatial: return dims.c;
  }
  return 0;
}

FeatureVector pool(const EmbeddingTensor& tensor, PoolingMode mode) {
  check_tensor(tensor);
  const std::size_t T = tensor.dims.t;
  const std::size_t F = tensor.dims.f;
  const std::size_t C = tensor.dims.c;

  std::vector<double> acc(pooled_dim(tensor.dims, mode), 0.0);
  double count = 1.0;
  const float* x = tensor.data.data();
  switch (mode) {
    case PoolingMode::temporal:
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < F * C; ++i) acc[i] += x[t * F * C + i];
      }
      count = static_cast<double>(T);
      break;
    case PoolingMode::spectral:
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
          for (std::size_t c = 0; c < C; ++c) acc[t * C + c] += x[(t * F + f) * C + c];
        }
      }
      count = static_cast<double>(F);
      break;
    case PoolingMode::spatial:
      for (std::size_t tf = 0; tf < T * F; ++tf) {
        for (std::size_t c = 0; c < C; ++c) acc[c] += x[tf * C + c];
      }
      count = static_cast<double>(T * F);
      break;
  }

  FeatureVector out;
  out.clip_id = tensor.clip_id;
  out.layer = tensor.layer;
  out.values.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.values[i] = static_cast<float>(acc[i] / count);
  }
  return out;
}

}  // namespace asdbank
