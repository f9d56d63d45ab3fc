#include "tzsh/fine_miner.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "tzsh/errors.hpp"

namespace tzsh {
namespace {

using testing::max_rel_error;
using testing::numeric_gradient;
using testing::random_tensor;

ClassVocabulary make_vocab(std::vector<std::vector<double>> seen,
                           std::vector<std::vector<double>> novel) {
  std::vector<ClassEntry> c;
  for (std::size_t i = 0; i < seen.size(); ++i) c.push_back({"s" + std::to_string(i), false, seen[i]});
  for (std::size_t i = 0; i < novel.size(); ++i) c.push_back({"n" + std::to_string(i), true, novel[i]});
  return ClassVocabulary(std::move(c));
}

TEST(CosineSim, HandValues) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_NEAR(cosine_sim(a, a), 1.0, 1e-15);
  EXPECT_EQ(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(cosine_sim(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 1.0 / std::sqrt(2.0),
              1e-15);
  EXPECT_NEAR(cosine_sim(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.7071, 1e-4);
}

TEST(CosineSim, ZeroVectorIsVocabularyError) {
  EXPECT_THROW(cosine_sim(std::vector<double>{0, 0}, std::vector<double>{1, 0}), VocabularyError);
}

TEST(CosineSim, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor2 v = random_tensor(2, 7, rng);
    const double base = cosine_sim(v.row(0), v.row(1));
    EXPECT_NEAR(base, cosine_sim(v.row(1), v.row(0)), 1e-15);
    Tensor2 w = v;
    const double a = scale(rng), b = scale(rng);
    for (double& x : w.row(0)) x *= a;
    for (double& x : w.row(1)) x *= b;
    EXPECT_NEAR(cosine_sim(w.row(0), w.row(1)), base, 1e-12);
  }
}

TEST(SoftLabels, IdenticalAndOrthogonalNovelClasses) {
  const auto vocab = make_vocab({{1, 0, 0}}, {{1, 0, 0}, {0, 1, 0}});
  const Tensor2 s = soft_labels(std::vector<int>{0}, vocab);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
}

TEST(SoftLabels, EquallySimilarClassesSplitEvenly) {
  const auto vocab = make_vocab({{1, 0, 0}}, {{1, 1, 0}, {1, 0, 1}});
  const Tensor2 s = soft_labels(std::vector<int>{0}, vocab);
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(SoftLabels, NormalizesRawSimilarities) {
  // Raw cosines 0.6 and 0.2.
  const auto vocab = make_vocab({{1, 0, 0}}, {{0.6, 0.8, 0}, {0.2, 0, std::sqrt(0.96)}});
  const Tensor2 s = soft_labels(std::vector<int>{0}, vocab);
  EXPECT_NEAR(s(0, 0), 0.75, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.25, 1e-12);
}

TEST(SoftLabels, NegativeSimilaritiesClampedToZero) {
  const auto vocab = make_vocab({{1, 0}}, {{1, 1}, {-1, 0.2}});
  const Tensor2 s = soft_labels(std::vector<int>{0}, vocab);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
}

TEST(SoftLabels, AllNonPositiveRowFallsBackToUniform) {
  const auto vocab = make_vocab({{1, 0, 0}, {0, 0, 1}}, {{-1, 1, 0}, {0, 1, 0}, {-1, -1, 0}});
  const SoftLabelTable t = soft_label_table(vocab);
  ASSERT_EQ(t.fallback, (std::vector<std::size_t>{0, 1}));
  const Tensor2 s = soft_labels(std::vector<int>{0, 1}, t);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(SoftLabels, RowsAreDistributionsForRandomVocabularies) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n_seen = 2 + trial % 5, n_novel = 1 + trial % 4, d = 3 + trial % 6;
    const Tensor2 z = random_tensor(n_seen + n_novel, d, rng);
    std::vector<std::vector<double>> seen, novel;
    for (std::size_t i = 0; i < n_seen; ++i) seen.emplace_back(z.row(i).begin(), z.row(i).end());
    for (std::size_t i = n_seen; i < n_seen + n_novel; ++i) {
      novel.emplace_back(z.row(i).begin(), z.row(i).end());
    }
    const auto vocab = make_vocab(seen, novel);
    std::vector<int> labels;
    for (std::size_t i = 0; i < n_seen; ++i) labels.push_back(static_cast<int>(i));
    const Tensor2 s = soft_labels(labels, vocab);
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double sum = 0.0;
      for (double v : s.row(i)) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(SoftLabels, NovelLabelRejected) {
  const auto vocab = make_vocab({{1, 0}}, {{0, 1}});
  EXPECT_THROW(soft_labels(std::vector<int>{1}, vocab), VocabularyError);
  EXPECT_THROW(soft_labels(std::vector<int>{5}, vocab), VocabularyError);
}

TEST(Assign, IdentityLikeMatrix) {
  EXPECT_EQ(assign(Tensor2::from_rows({{0.9, 0.1}, {0.2, 0.8}})), (std::vector<std::size_t>{0, 1}));
}

TEST(Assign, DominantRowMayWinEveryClass) {
  EXPECT_EQ(assign(Tensor2::from_rows({{0.6, 0.4}, {0.55, 0.3}, {0.1, 0.2}})),
            (std::vector<std::size_t>{0, 0}));
}

TEST(Assign, UniformTiesGoToFirstRow) {
  EXPECT_EQ(assign(Tensor2(5, 3, 1.0 / 3.0)), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Assign, InvariantUnderColumnwiseMonotoneMaps) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor2 p = softmax_rows(random_tensor(12, 4, rng));
    Tensor2 q = p;
    for (std::size_t j = 0; j < q.rows(); ++j) {
      for (std::size_t k = 0; k < q.cols(); ++k) {
        q(j, k) = std::log(p(j, k)) * static_cast<double>(k + 1) + std::pow(p(j, k), 3);
      }
    }
    EXPECT_EQ(assign(q), assign(p));
  }
}

TEST(FineLoss, PerfectPredictionsGiveZero) {
  const Tensor2 soft = Tensor2::from_rows({{1, 0}, {0, 1}});
  const Tensor2 p_u = Tensor2::from_rows({{0, 1}, {1, 0}});
  const auto r = fine_loss(soft, p_u, assign(p_u), soft);
  EXPECT_DOUBLE_EQ(r.loss, 0.0);
}

TEST(FineLoss, HalfProbabilitiesGiveTwoLnTwo) {
  const Tensor2 half = Tensor2::from_rows({{0.5, 0.5}});
  const auto r = fine_loss(half, half, std::vector<std::size_t>{0, 0}, half);
  EXPECT_NEAR(r.loss, 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(r.source_term, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.target_term, std::log(2.0), 1e-15);
}

TEST(FineLoss, GradientOnlyOnAssignedRows) {
  std::mt19937_64 rng(4);
  const Tensor2 p_s = softmax_rows(random_tensor(6, 3, rng));
  const Tensor2 p_u = softmax_rows(random_tensor(8, 3, rng));
  const Tensor2 soft = softmax_rows(random_tensor(6, 3, rng));
  const auto a = assign(p_u);
  const auto r = fine_loss(p_s, p_u, a, soft);
  for (std::size_t j = 0; j < 8; ++j) {
    const bool assigned = std::find(a.begin(), a.end(), j) != a.end();
    for (double g : r.grad_logits_u.row(j)) {
      if (!assigned) EXPECT_EQ(g, 0.0);
    }
  }
}

TEST(FineLoss, LogitGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  Tensor2 z_s = random_tensor(5, 3, rng);
  Tensor2 z_u = random_tensor(7, 3, rng);
  const Tensor2 soft = softmax_rows(random_tensor(5, 3, rng));
  const auto a = assign(softmax_rows(z_u));
  auto loss = [&] { return fine_loss(softmax_rows(z_s), softmax_rows(z_u), a, soft).loss; };
  const auto r = fine_loss(softmax_rows(z_s), softmax_rows(z_u), a, soft);
  EXPECT_LT(max_rel_error(r.grad_logits_s, numeric_gradient(loss, z_s)), 1e-6);
  EXPECT_LT(max_rel_error(r.grad_logits_u, numeric_gradient(loss, z_u)), 1e-6);
}

TEST(Vocabulary, PartitionAndColumns) {
  const auto vocab = make_vocab({{1, 0}, {0, 1}}, {{1, 1}});
  EXPECT_EQ(vocab.seen_ids(), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(vocab.novel_ids(), (std::vector<std::size_t>{2}));
  EXPECT_EQ(vocab.novel_column(2), 0);
  EXPECT_EQ(vocab.novel_column(0), -1);
  EXPECT_TRUE(vocab.is_seen(1));
  EXPECT_FALSE(vocab.is_seen(2));
}

TEST(Vocabulary, InvalidContentsRejected) {
  EXPECT_THROW(make_vocab({{1, 0}}, {{0, 0}}), VocabularyError);
  EXPECT_THROW(make_vocab({{1, 0}}, {{0, 1, 2}}), VocabularyError);
  EXPECT_THROW(make_vocab({{1, 0}}, {}), VocabularyError);
  EXPECT_THROW(ClassVocabulary({{"a", false, {1.0}}, {"a", true, {2.0}}}), VocabularyError);
}

TEST(Vocabulary, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "tzsh_vocab_roundtrip.txt";
  const auto vocab = make_vocab({{0.1, 0.2, 0.3}, {1.0 / 3.0, -2.5, 7}}, {{1e-3, 4, 5}});
  vocab.save(path);
  const auto back = ClassVocabulary::load(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.at(i).name, vocab.at(i).name);
    EXPECT_EQ(back.at(i).novel, vocab.at(i).novel);
    EXPECT_EQ(back.at(i).vector, vocab.at(i).vector);
  }
  std::filesystem::remove(path);
}

TEST(Vocabulary, ParseErrorsNameTheLine) {
  const auto path = std::filesystem::temp_directory_path() / "tzsh_vocab_bad.txt";
  {
    std::ofstream out(path);
    out << "cat seen 1 0\n";
    out << "dog unknown 0 1\n";
  }
  try {
    ClassVocabulary::load(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(ClassVocabulary::load(path), DataError);
}

}  // namespace
}  // namespace tzsh
