#include "tzsh/hash_loss.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "tzsh/errors.hpp"

namespace tzsh {
namespace {

using testing::max_rel_error;
using testing::numeric_gradient;
using testing::random_tensor;

HashBatch batch_of(std::vector<std::vector<double>> rows, std::vector<RowOrigin> origin) {
  return {Tensor2::from_rows(rows), std::move(origin)};
}

TEST(SignHamming, ZeroCountsAsPositive) {
  EXPECT_EQ(sign_hamming(std::vector<double>{0.0, -0.0, 1.0}, std::vector<double>{1.0, 2.0, 3.0}), 0u);
  EXPECT_EQ(sign_hamming(std::vector<double>{0.0, -1.0}, std::vector<double>{-1.0, 1.0}), 2u);
}

TEST(PairLabels, SourceRowsFollowClassEquality) {
  const auto b = batch_of({{1, 1}, {-1, -1}, {1, -1}},
                          {RowOrigin::source(3), RowOrigin::source(3), RowOrigin::source(4)});
  const auto p = pair_labels(b, 0, 1);
  EXPECT_EQ(p(0, 1), PairLabel::similar);
  EXPECT_EQ(p(0, 2), PairLabel::dissimilar);
  EXPECT_EQ(p(1, 2), PairLabel::dissimilar);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p(i, i), PairLabel::excluded);
}

TEST(PairLabels, SourceTargetAlwaysDissimilar) {
  // Identical codes and matching class ids still count as dissimilar across origins.
  const auto b = batch_of({{1, 1}, {1, 1}}, {RowOrigin::source(2), RowOrigin::mined(2)});
  const auto p = pair_labels(b, 2, 2);
  EXPECT_EQ(p(0, 1), PairLabel::dissimilar);
  EXPECT_EQ(p(1, 0), PairLabel::dissimilar);
}

// Independent restatement of the target/target rule used as the oracle.
PairLabel expected_target_label(bool same_class, std::size_t d, std::size_t tau_sim,
                                std::size_t tau_dis) {
  if (same_class) return d <= tau_sim ? PairLabel::similar : PairLabel::excluded;
  return d >= tau_dis ? PairLabel::dissimilar : PairLabel::excluded;
}

TEST(PairLabels, TargetRuleTableEnumeration) {
  const std::size_t l = 6;
  for (std::size_t tau_sim = 0; tau_sim <= l; ++tau_sim) {
    for (std::size_t tau_dis = tau_sim; tau_dis <= l; ++tau_dis) {
      for (std::size_t d = 0; d <= l; ++d) {
        for (bool same : {true, false}) {
          std::vector<double> a(l, 1.0), c(l, 1.0);
          for (std::size_t i = 0; i < d; ++i) c[i] = -0.5;
          const auto b = batch_of({a, c}, {RowOrigin::mined(10), RowOrigin::mined(same ? 10 : 11)});
          EXPECT_EQ(pair_labels(b, tau_sim, tau_dis)(0, 1),
                    expected_target_label(same, d, tau_sim, tau_dis))
              << "tau_sim=" << tau_sim << " tau_dis=" << tau_dis << " d=" << d << " same=" << same;
        }
      }
    }
  }
}

TEST(PairLabels, SameClassExamples) {
  const auto close = batch_of({{1, 1, 1, 1}, {2, 1, 3, 1}}, {RowOrigin::mined(0), RowOrigin::mined(0)});
  EXPECT_EQ(pair_labels(close, 1, 2)(0, 1), PairLabel::similar);
  const auto far = batch_of({{1, 1, 1, 1}, {-1, -1, 1, 1}}, {RowOrigin::mined(0), RowOrigin::mined(0)});
  EXPECT_EQ(pair_labels(far, 1, 2)(0, 1), PairLabel::excluded);
}

TEST(PairLabels, InvalidThresholdsRejected) {
  const auto b = batch_of({{1, 1}}, {RowOrigin::source(0)});
  EXPECT_THROW(pair_labels(b, 2, 1), ConfigError);
  EXPECT_THROW(pair_labels(b, 0, 3), ConfigError);
}

TEST(PairLabels, InvariantUnderClassRelabeling) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 30; ++trial) {
    HashBatch b;
    b.h = random_tensor(12, 8, rng);
    for (std::size_t i = 0; i < 12; ++i) {
      b.origin.push_back(i < 9 ? RowOrigin::source(cls(rng)) : RowOrigin::mined(10 + cls(rng) % 2));
    }
    HashBatch permuted = b;
    const int perm[4] = {2, 0, 3, 1};
    for (auto& o : permuted.origin) {
      o.class_id = o.target ? 21 - o.class_id : perm[o.class_id];
    }
    EXPECT_EQ(pair_labels(b, 2, 4), pair_labels(permuted, 2, 4));
  }
}

TEST(Contrastive, IdenticalSimilarRowsGiveZero) {
  const auto b = batch_of({{0.3, -1}, {0.3, -1}, {0.3, -1}},
                          {RowOrigin::source(1), RowOrigin::source(1), RowOrigin::source(1)});
  const auto r = contrastive_loss(b, pair_labels(b, 0, 0), 4.0);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.active_pairs, 6u);
}

TEST(Contrastive, SimilarPairCountedForBothOrders) {
  const auto b = batch_of({{1, 1}, {-1, 1}}, {RowOrigin::source(0), RowOrigin::source(0)});
  const auto r = contrastive_loss(b, pair_labels(b, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.loss, 8.0);
  EXPECT_EQ(r.active_pairs, 2u);
}

TEST(Contrastive, DissimilarPairBeyondMarginIsFree) {
  const auto b = batch_of({{1, 1}, {-1, 1}}, {RowOrigin::source(0), RowOrigin::source(1)});
  EXPECT_EQ(contrastive_loss(b, pair_labels(b, 0, 0), 4.0).loss, 0.0);  // exactly at the kink
  EXPECT_EQ(contrastive_loss(b, pair_labels(b, 0, 0), 3.0).loss, 0.0);
  const auto inside = contrastive_loss(b, pair_labels(b, 0, 0), 5.0);
  EXPECT_DOUBLE_EQ(inside.loss, 2.0);
  // Kink: subgradient 0.
  EXPECT_EQ(contrastive_loss(b, pair_labels(b, 0, 0), 4.0).grad_h, Tensor2(2, 2));
}

TEST(Contrastive, ExcludedPairsContributeNothing) {
  const auto b = batch_of({{1, 1}, {-1, -1}}, {RowOrigin::mined(0), RowOrigin::mined(0)});
  const auto labels = pair_labels(b, 0, 2);
  ASSERT_EQ(labels(0, 1), PairLabel::excluded);
  const auto r = contrastive_loss(b, labels, 10.0);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.active_pairs, 0u);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  HashBatch b;
  b.h = random_tensor(9, 6, rng);
  for (int i = 0; i < 7; ++i) b.origin.push_back(RowOrigin::source(i % 3));
  b.origin.push_back(RowOrigin::mined(5));
  b.origin.push_back(RowOrigin::mined(5));
  const auto labels = pair_labels(b, 3, 3);
  const double eps = 12.0;
  const auto r = contrastive_loss(b, labels, eps);
  auto loss = [&] { return contrastive_loss(b, labels, eps).loss; };
  EXPECT_LT(max_rel_error(r.grad_h, numeric_gradient(loss, b.h)), 1e-6);
}

TEST(Contrastive, PairGradientsCancelAcrossBatch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    HashBatch b;
    b.h = random_tensor(10, 5, rng);
    for (int i = 0; i < 10; ++i) b.origin.push_back(RowOrigin::source(i % 4));
    const auto r = contrastive_loss(b, pair_labels(b, 1, 3), 10.0);
    EXPECT_GE(r.loss, 0.0);
    for (std::size_t c = 0; c < 5; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < 10; ++i) s += r.grad_h(i, c);
      EXPECT_NEAR(s, 0.0, 1e-10);
    }
  }
}

TEST(Contrastive, SimilarPairGradientIsAntisymmetric) {
  const auto b = batch_of({{0.5, -2, 1}, {1.5, 0.25, -1}}, {RowOrigin::source(0), RowOrigin::source(0)});
  const auto r = contrastive_loss(b, pair_labels(b, 0, 0), 1.0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(r.grad_h(0, c), -r.grad_h(1, c));
}

TEST(Contrastive, NonPositiveMarginRejected) {
  const auto b = batch_of({{1}}, {RowOrigin::source(0)});
  EXPECT_THROW(contrastive_loss(b, pair_labels(b, 0, 0), 0.0), ConfigError);
}

}  // namespace
}  // namespace tzsh
