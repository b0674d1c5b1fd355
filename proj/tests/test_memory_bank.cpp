#include <gtest/gtest.h>

#include <random>

#include "asdbank/error.hpp"
#include "asdbank/memory_bank.hpp"
#include "oracles.hpp"
#include "expect_error.hpp"
#include "test_util.hpp"

using namespace asdbank;
using testutil::code_of;

namespace {

std::vector<FeatureVector> features(const std::vector<std::vector<float>>& rows) {
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({"c" + std::to_string(i), 1, rows[i]});
  return out;
}

MemoryBank bank_from(const std::vector<float>& flat, std::size_t dim, Domain domain) {
  return MemoryBank(domain, dim, flat, std::vector<RowProvenance>(flat.size() / dim));
}

}  // namespace

TEST(MemoryBank, BuildKeepsOrder) {
  const auto bank = MemoryBank::build(features({{1, 2}, {3, 4}, {5, 6}}), Domain::target);
  EXPECT_EQ(bank.size(), 3u);
  EXPECT_EQ(bank.dim(), 2u);
  EXPECT_EQ(bank.domain(), Domain::target);
  EXPECT_EQ(bank.row(1)[0], 3.0f);
  EXPECT_FALSE(bank.provenance(2).has_value());
}

TEST(MemoryBank, BuildRejectsBadInput) {
  EXPECT_EQ(code_of([] { MemoryBank::build({}, Domain::source); }), ErrorCode::empty_input);
  EXPECT_EQ(code_of([] { MemoryBank::build(features({{1, 2}, {3}}), Domain::source); }),
            ErrorCode::ragged);
  EXPECT_EQ(code_of([] {
              MemoryBank::build(features({{1, std::numeric_limits<float>::infinity()}}),
                                Domain::source);
            }),
            ErrorCode::non_finite);
}

TEST(Knn, HandExample) {
  const auto bank = MemoryBank::build(features({{0, 0}, {3, 0}, {0, 1}}), Domain::source);
  const std::vector<float> q{0, 0};
  EXPECT_EQ(knn_query(bank, q, 2), (NeighborList{{0, 0.0}, {2, 1.0}}));
}

TEST(Knn, TiesGoToLowerIndex) {
  const auto bank = MemoryBank::build(features({{1, 0}, {0, 1}, {-1, 0}, {0, -1}}), Domain::source);
  const std::vector<float> q{0, 0};
  EXPECT_EQ(knn_query(bank, q, 1), (NeighborList{{0, 1.0}}));
  EXPECT_EQ(knn_query(bank, q, 3), (NeighborList{{0, 1.0}, {1, 1.0}, {2, 1.0}}));
}

TEST(Knn, MatchesFullSortOracle) {
  std::mt19937_64 gen(11);
  const std::size_t n = 500, dim = 64, k = 7;
  const auto rows = oracle::random_rows(gen, n, dim);
  const auto bank = bank_from(rows, dim, Domain::source);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = oracle::random_rows(gen, 1, dim);
    const auto got = knn_query(bank, q, k);
    const auto want = oracle::knn(rows, dim, q, k);
    ASSERT_EQ(got.size(), k);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_EQ(got[i].index, want[i].index);
      EXPECT_EQ(got[i].distance, want[i].distance);
    }
  }
}

TEST(Knn, DuplicateRowsResolveByIndex) {
  std::mt19937_64 gen(12);
  auto rows = oracle::random_rows(gen, 40, 3);
  for (std::size_t i = 20; i < 40; ++i) {
    for (std::size_t d = 0; d < 3; ++d) rows[i * 3 + d] = rows[(i - 20) * 3 + d];
  }
  const auto bank = bank_from(rows, 3, Domain::source);
  for (std::size_t k : {1u, 2u, 5u, 40u}) {
    const auto q = oracle::random_rows(gen, 1, 3);
    const auto got = knn_query(bank, q, k);
    const auto want = oracle::knn(rows, 3, q, k);
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(got[i].index, want[i].index);
  }
}

TEST(Knn, Errors) {
  const auto bank = MemoryBank::build(features({{0, 0}, {1, 1}}), Domain::source);
  const std::vector<float> q2{0, 0}, q3{0, 0, 0};
  EXPECT_EQ(code_of([&] { knn_query(bank, q2, 3); }), ErrorCode::k_too_large);
  EXPECT_EQ(code_of([&] { knn_query(bank, q2, 0); }), ErrorCode::out_of_range);
  EXPECT_EQ(code_of([&] { knn_query(bank, q3, 1); }), ErrorCode::dim_mismatch);
}

TEST(Knn, ExcludingSkipsRows) {
  const auto bank = MemoryBank::build(features({{0}, {1}, {2}, {3}}), Domain::source);
  const std::vector<float> q{0};
  const std::vector<std::uint32_t> ex{0, 1};
  EXPECT_EQ(knn_query_excluding(bank, q, 1, ex), (NeighborList{{2, 4.0}}));
  EXPECT_EQ(code_of([&] { knn_query_excluding(bank, q, 3, ex); }), ErrorCode::k_too_large);
}

TEST(Knn, BatchMatchesSingleQueries) {
  std::mt19937_64 gen(13);
  const auto rows = oracle::random_rows(gen, 100, 8);
  const auto bank = bank_from(rows, 8, Domain::source);
  std::vector<FeatureVector> qs;
  for (int i = 0; i < 50; ++i) qs.push_back({"q", 1, oracle::random_rows(gen, 1, 8)});
  const auto batch = knn_query_batch(bank, qs, 4);
  ASSERT_EQ(batch.size(), qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) EXPECT_EQ(batch[i], knn_query(bank, qs[i], 4));
}

TEST(MemMixup, SinglePairExample) {
  const auto s = MemoryBank::build(features({{0, 0}}), Domain::source);
  const auto t = MemoryBank::build(features({{1, 1}}), Domain::target);
  const auto aug = memmixup(s, t, 1, 0.9);
  ASSERT_EQ(aug.size(), 2u);
  EXPECT_EQ(aug.row(0)[0], 1.0f);
  EXPECT_FLOAT_EQ(aug.row(1)[0], 0.9f);
  EXPECT_FLOAT_EQ(aug.row(1)[1], 0.9f);
  EXPECT_EQ(aug.provenance(1), (MixupParents{0, 0, 0.9}));
  EXPECT_EQ(aug.domain(), Domain::target);
}

TEST(MemMixup, LambdaOneCopiesTargetExactly) {
  std::mt19937_64 gen(21);
  const auto s = bank_from(oracle::random_rows(gen, 30, 5), 5, Domain::source);
  const auto t = bank_from(oracle::random_rows(gen, 4, 5), 5, Domain::target);
  const auto aug = memmixup(s, t, 3, 1.0);
  for (std::size_t i = 4; i < aug.size(); ++i) {
    const auto& p = *aug.provenance(i);
    for (std::size_t d = 0; d < 5; ++d) EXPECT_EQ(aug.row(i)[d], t.row(p.target_index)[d]);
  }
}

TEST(MemMixup, SizeAndSegments) {
  std::mt19937_64 gen(22);
  const std::size_t ns = 990, nt = 10, dim = 6;
  const auto s_rows = oracle::random_rows(gen, ns, dim);
  const auto t_rows = oracle::random_rows(gen, nt, dim);
  const auto s = bank_from(s_rows, dim, Domain::source);
  const auto t = bank_from(t_rows, dim, Domain::target);
  const auto aug = memmixup(s, t, ns, 0.9);
  ASSERT_EQ(aug.size(), nt * (1 + ns));
  EXPECT_EQ(aug.size(), 9910u);
  for (std::size_t i = 0; i < nt; ++i) {
    EXPECT_FALSE(aug.provenance(i).has_value());
    for (std::size_t d = 0; d < dim; ++d) EXPECT_EQ(aug.row(i)[d], t.row(i)[d]);
  }
  // Each mixup row sits on the segment from its source parent to its target
  // parent, at lambda of the way from source.
  for (std::size_t i = nt; i < aug.size(); ++i) {
    const auto& p = *aug.provenance(i);
    EXPECT_EQ(p.target_index, (i - nt) / ns);
    for (std::size_t d = 0; d < dim; ++d) {
      const double want = 0.9 * t.row(p.target_index)[d] + 0.1 * s.row(p.source_index)[d];
      EXPECT_NEAR(aug.row(i)[d], want, 1e-6);
    }
  }
}

TEST(MemMixup, UsesNearestSourceRowsInOrder) {
  std::mt19937_64 gen(23);
  const auto s_rows = oracle::random_rows(gen, 50, 4);
  const auto s = bank_from(s_rows, 4, Domain::source);
  const auto t = bank_from(oracle::random_rows(gen, 3, 4), 4, Domain::target);
  const auto aug = memmixup(s, t, 5, 0.7);
  ASSERT_EQ(aug.size(), 18u);
  for (std::size_t ti = 0; ti < 3; ++ti) {
    const auto want = oracle::knn(s_rows, 4, t.row(ti), 5);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(aug.provenance(3 + ti * 5 + j)->source_index, want[j].index);
    }
  }
}

TEST(MemMixup, DeterministicAndValidated) {
  std::mt19937_64 gen(24);
  const auto s = bank_from(oracle::random_rows(gen, 20, 3), 3, Domain::source);
  const auto t = bank_from(oracle::random_rows(gen, 2, 3), 3, Domain::target);
  EXPECT_EQ(memmixup(s, t, 4, 0.9), memmixup(s, t, 4, 0.9));
  EXPECT_EQ(code_of([&] { memmixup(s, t, 21, 0.9); }), ErrorCode::k_too_large);
  EXPECT_EQ(code_of([&] { memmixup(s, t, 2, 1.5); }), ErrorCode::out_of_range);
  const auto other = bank_from(oracle::random_rows(gen, 2, 4), 4, Domain::target);
  EXPECT_EQ(code_of([&] { memmixup(s, other, 2, 0.9); }), ErrorCode::dim_mismatch);
}

TEST(BankFile, RoundTripKeepsProvenance) {
  testutil::TempDir dir;
  std::mt19937_64 gen(25);
  const auto s = bank_from(oracle::random_rows(gen, 20, 3), 3, Domain::source);
  const auto t = bank_from(oracle::random_rows(gen, 2, 3), 3, Domain::target);
  const auto aug = memmixup(s, t, 4, 0.9);
  write_bank(aug, dir.path() / "bank.embb");
  EXPECT_EQ(read_bank(dir.path() / "bank.embb"), aug);
  write_bank(s, dir.path() / "s.embb");
  EXPECT_EQ(read_bank(dir.path() / "s.embb"), s);
}

TEST(BankFile, RejectsForeignFile) {
  testutil::TempDir dir;
  write_file_text(dir.path() / "x", "EMB1 not a bank");
  EXPECT_EQ(code_of([&] { read_bank(dir.path() / "x"); }), ErrorCode::bad_magic);
}
