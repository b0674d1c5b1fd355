#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "asdbank/error.hpp"
#include "asdbank/pooling.hpp"
#include "expect_error.hpp"
#include "test_util.hpp"

using namespace asdbank;
using testutil::code_of;

namespace {

EmbeddingTensor random_tensor(std::mt19937_64& gen, Dims dims) {
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  EmbeddingTensor t{"r", 1, dims, std::vector<float>(dims.count())};
  for (auto& v : t.data) v = u(gen);
  return t;
}

}  // namespace

TEST(Pooling, TemporalMeanOfTwoFrames) {
  // T=2, F=1, C=2: frames [1,2] and [3,4]
  EmbeddingTensor t{"a", 3, {2, 1, 2}, {1, 2, 3, 4}};
  const auto f = pool(t, PoolingMode::temporal);
  EXPECT_EQ(f.values, (std::vector<float>{2, 3}));
  EXPECT_EQ(f.clip_id, "a");
  EXPECT_EQ(f.layer, 3u);
}

TEST(Pooling, OutputDims) {
  const Dims d{496, 8, 768};
  EXPECT_EQ(pooled_dim(d, PoolingMode::temporal), 8u * 768u);
  EXPECT_EQ(pooled_dim(d, PoolingMode::spectral), 496u * 768u);
  EXPECT_EQ(pooled_dim(d, PoolingMode::spatial), 768u);
}

TEST(Pooling, ModeLayouts) {
  // T=2, F=3, C=1; value = 10*t + f
  EmbeddingTensor t{"a", 1, {2, 3, 1}, {0, 1, 2, 10, 11, 12}};
  EXPECT_EQ(pool(t, PoolingMode::temporal).values, (std::vector<float>{5, 6, 7}));
  EXPECT_EQ(pool(t, PoolingMode::spectral).values, (std::vector<float>{1, 11}));
  EXPECT_EQ(pool(t, PoolingMode::spatial).values, (std::vector<float>{6}));
}

TEST(Pooling, ConstantTensorStaysConstant) {
  EmbeddingTensor t{"c", 1, {37, 5, 11}, std::vector<float>(37 * 5 * 11, 7.5f)};
  for (auto mode : {PoolingMode::temporal, PoolingMode::spectral, PoolingMode::spatial}) {
    for (float v : pool(t, mode).values) EXPECT_EQ(v, 7.5f);
  }
}

TEST(Pooling, SingleFrameTemporalIsReshape) {
  std::mt19937_64 gen(3);
  const auto t = random_tensor(gen, {1, 4, 6});
  EXPECT_EQ(pool(t, PoolingMode::temporal).values, t.data);
}

TEST(Pooling, SingleBandTemporalEqualsSpatial) {
  std::mt19937_64 gen(4);
  const auto t = random_tensor(gen, {9, 1, 5});
  EXPECT_EQ(pool(t, PoolingMode::temporal).values, pool(t, PoolingMode::spatial).values);
}

TEST(Pooling, InvariantToFramePermutation) {
  std::mt19937_64 gen(5);
  const Dims d{12, 3, 4};
  const auto t = random_tensor(gen, d);
  std::vector<std::size_t> order(d.t);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  auto shuffled = t;
  const std::size_t frame = d.f * d.c;
  for (std::size_t i = 0; i < d.t; ++i) {
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(order[i] * frame), frame,
                shuffled.data.begin() + static_cast<std::ptrdiff_t>(i * frame));
  }
  const auto a = pool(t, PoolingMode::temporal).values;
  const auto b = pool(shuffled, PoolingMode::temporal).values;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Pooling, Linear) {
  std::mt19937_64 gen(6);
  const Dims d{7, 2, 3};
  const auto x = random_tensor(gen, d);
  const auto y = random_tensor(gen, d);
  const float a = 1.7f, b = -0.3f;
  auto combo = x;
  for (std::size_t i = 0; i < combo.data.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
  for (auto mode : {PoolingMode::temporal, PoolingMode::spectral, PoolingMode::spatial}) {
    const auto px = pool(x, mode).values, py = pool(y, mode).values, pc = pool(combo, mode).values;
    for (std::size_t i = 0; i < pc.size(); ++i) EXPECT_NEAR(pc[i], a * px[i] + b * py[i], 1e-5);
  }
}

TEST(Pooling, ParseNames) {
  EXPECT_EQ(parse_pooling("spectral"), PoolingMode::spectral);
  EXPECT_EQ(to_string(PoolingMode::spatial), "spatial");
  EXPECT_EQ(code_of([] { parse_pooling("median"); }), ErrorCode::parse);
}
