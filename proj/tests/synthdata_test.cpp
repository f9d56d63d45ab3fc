#include "tzsh/synthdata.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tzsh/errors.hpp"

namespace tzsh {
namespace {

namespace fs = std::filesystem;

SynthSpec small_spec() {
  SynthSpec s;
  s.n_seen = 4;
  s.n_novel = 2;
  s.feature_dim = 8;
  s.word_dim = 12;
  s.n_source = 40;
  s.n_unlabeled = 60;
  s.n_queries = 10;
  s.seed = 11;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Synth, SameSeedGivesIdenticalFiles) {
  const auto a = fresh_dir("tzsh_synth_a");
  const auto b = fresh_dir("tzsh_synth_b");
  save_dataset(generate(small_spec()), a);
  save_dataset(generate(small_spec()), b);
  for (const char* f : {kSourceFile, kUnlabeledFile, kQueriesFile, kTruthFile, kVocabFile}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_FALSE(slurp(a / f).empty()) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synth, DifferentSeedChangesData) {
  SynthSpec s = small_spec();
  const Dataset d1 = generate(s);
  s.seed = 12;
  EXPECT_FALSE(d1.source.features() == generate(s).source.features());
}

TEST(Synth, ShapesAndClassIds) {
  const SynthSpec s = small_spec();
  const Dataset d = generate(s);
  EXPECT_EQ(d.source.size(), s.n_source);
  EXPECT_EQ(d.unlabeled.size(), s.n_unlabeled);
  EXPECT_FALSE(d.unlabeled.has_labels());
  EXPECT_EQ(d.eval.queries.size(), s.n_queries);
  EXPECT_EQ(d.vocab.size(), s.n_seen + s.n_novel);
  for (int y : d.source.labels()) {
    EXPECT_GE(y, 0);
    EXPECT_LT(y, static_cast<int>(s.n_seen));
  }
  for (int y : d.eval.queries.labels()) {
    EXPECT_GE(y, static_cast<int>(s.n_seen));
    EXPECT_LT(y, static_cast<int>(s.n_seen + s.n_novel));
  }
  std::size_t novel_rows = 0;
  for (int y : d.eval.unlabeled_truth.reveal_for_evaluation()) {
    novel_rows += y >= static_cast<int>(s.n_seen);
  }
  EXPECT_EQ(novel_rows, 30u);
  const auto db = d.eval.database_labels(d.source);
  EXPECT_EQ(db.size(), s.n_source + s.n_unlabeled);
}

TEST(Synth, WordVectorCosinesHitTargets) {
  SynthSpec s = small_spec();
  s.rho = {0.3, 0.8};
  const Dataset d = generate(s);
  for (std::size_t k = 0; k < s.n_novel; ++k) {
    const auto& z = d.vocab.at(s.n_seen + k).vector;
    for (std::size_t i = 0; i < s.n_seen; ++i) {
      const double target = i == s.paired_seen(k) ? s.rho_for(k) : 0.0;
      EXPECT_NEAR(cosine_sim(z, d.vocab.at(i).vector), target, 1e-6);
    }
  }
}

TEST(Synth, RhoOneGivesOneHotSoftLabels) {
  SynthSpec s = small_spec();
  s.rho = {1.0};
  const Dataset d = generate(s);
  const auto table = soft_label_table(d.vocab);
  for (std::size_t i = 0; i < s.n_seen; ++i) {
    const auto row = table.rows.row(i);
    double sum = 0.0;
    for (double v : row) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t k = 0; k < s.n_novel; ++k) {
      if (i == s.paired_seen(k)) EXPECT_NEAR(row[k], 1.0, 1e-9);
    }
  }
}

/// Logistic-regression probe for seen vs novel, trained on half of the
/// unlabeled rows and scored on the other half.
double linear_probe_accuracy(const Dataset& d, std::size_t n_seen) {
  const Tensor2& x = d.unlabeled.features();
  const auto& y = d.eval.unlabeled_truth.reveal_for_evaluation();
  const std::size_t n = x.rows(), dim = x.cols(), half = n / 2;
  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (std::size_t r = 0; r < half; ++r)
    for (std::size_t c = 0; c < dim; ++c) mean[c] += x(r, c) / static_cast<double>(half);
  for (std::size_t r = 0; r < half; ++r)
    for (std::size_t c = 0; c < dim; ++c)
      scale[c] += std::pow(x(r, c) - mean[c], 2) / static_cast<double>(half);
  for (double& v : scale) v = std::sqrt(v) + 1e-12;
  auto z = [&](std::size_t r, std::size_t c) { return (x(r, c) - mean[c]) / scale[c]; };

  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> gw(dim, 0.0);
    double gb = 0.0;
    for (std::size_t r = 0; r < half; ++r) {
      double s = b;
      for (std::size_t c = 0; c < dim; ++c) s += w[c] * z(r, c);
      const double t = y[r] >= static_cast<int>(n_seen) ? 1.0 : 0.0;
      const double err = 1.0 / (1.0 + std::exp(-s)) - t;
      for (std::size_t c = 0; c < dim; ++c) gw[c] += err * z(r, c);
      gb += err;
    }
    for (std::size_t c = 0; c < dim; ++c) w[c] -= 0.5 * gw[c] / static_cast<double>(half);
    b -= 0.5 * gb / static_cast<double>(half);
  }
  std::size_t correct = 0;
  for (std::size_t r = half; r < n; ++r) {
    double s = b;
    for (std::size_t c = 0; c < dim; ++c) s += w[c] * z(r, c);
    correct += (s > 0.0) == (y[r] >= static_cast<int>(n_seen));
  }
  return static_cast<double>(correct) / static_cast<double>(n - half);
}

TEST(Synth, SeparatedClustersAreLinearlySeparableSeenVsNovel) {
  SynthSpec s;
  s.sigma_between = 10.0;
  s.sigma_within = 0.5;
  s.n_unlabeled = 800;
  EXPECT_GT(linear_probe_accuracy(generate(s), s.n_seen), 0.95);
}

TEST(Synth, PairedSeenSpreadsNovelClasses) {
  SynthSpec s;
  s.n_seen = 8;
  s.n_novel = 2;
  EXPECT_EQ(s.paired_seen(0), 0u);
  EXPECT_EQ(s.paired_seen(1), 4u);
}

TEST(SynthSpec, ValidationRejectsDegenerateSpecs) {
  auto expect_bad = [](auto mutate) {
    SynthSpec s = small_spec();
    mutate(s);
    EXPECT_THROW(generate(s), ConfigError);
  };
  expect_bad([](SynthSpec& s) { s.sigma_within = 0.0; });
  expect_bad([](SynthSpec& s) { s.sigma_within = -1.0; });
  expect_bad([](SynthSpec& s) { s.n_seen = 1; });
  expect_bad([](SynthSpec& s) { s.n_novel = 0; });
  expect_bad([](SynthSpec& s) { s.word_dim = 3; });
  expect_bad([](SynthSpec& s) { s.rho = {1.5}; });
  expect_bad([](SynthSpec& s) { s.rho = {0.1, 0.2, 0.3}; });
  expect_bad([](SynthSpec& s) { s.novel_fraction = 1.2; });
}

TEST(SynthSpec, ParsesKeyValueText) {
  const auto kv = KeyValueFile::parse("n_seen = 3\nrho = 0.2, 0.4\nn_novel=2\nword_dim=6\n", "t");
  const SynthSpec s = SynthSpec::from_file(kv);
  EXPECT_EQ(s.n_seen, 3u);
  EXPECT_DOUBLE_EQ(s.rho_for(1), 0.4);
  EXPECT_THROW(SynthSpec::from_file(KeyValueFile::parse("bogus=1\n", "t")), ParseError);
}

TEST(FeatureFile, RoundTripIsExact) {
  const Dataset d = generate(small_spec());
  const auto dir = fresh_dir("tzsh_feat_rt");
  save_features(d.source, dir / "s.feat");
  save_features(d.unlabeled, dir / "u.feat");
  const FeatureBatch s = load_features(dir / "s.feat");
  const FeatureBatch u = load_features(dir / "u.feat");
  EXPECT_EQ(s.features(), d.source.features());
  EXPECT_EQ(s.labels(), d.source.labels());
  EXPECT_FALSE(u.has_labels());
  EXPECT_EQ(u.features(), d.unlabeled.features());
  fs::remove_all(dir);
}

TEST(FeatureFile, ErrorsNameTheLine) {
  const auto dir = fresh_dir("tzsh_feat_bad");
  const auto write = [&](const std::string& text) {
    std::ofstream(dir / "f.feat") << text;
    return dir / "f.feat";
  };
  try {
    load_features(write("2 3\n0 1 2\n1 3 4\n0 5\n"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_THROW(load_features(write("2 2\n0 1 2\n? 3 4\n")), DataError);
  EXPECT_THROW(load_features(write("2 2\n0 1 2\n")), DataError);
  EXPECT_THROW(load_features(write("2 1\n0 1 nan\n")), DataError);
  EXPECT_THROW(load_labeled_features(write("1 1\n? 1\n")), DataError);
  EXPECT_THROW(load_features(dir / "missing.feat"), DataError);
  fs::remove_all(dir);
}

TEST(Dataset, TrainingLoadDoesNotNeedTruth) {
  const auto dir = fresh_dir("tzsh_ds");
  const Dataset d = generate(small_spec());
  save_dataset(d, dir);
  fs::remove(dir / kTruthFile);
  const Dataset back = load_training_data(dir);
  EXPECT_EQ(back.unlabeled.features(), d.unlabeled.features());
  EXPECT_EQ(back.eval.unlabeled_truth.size(), 0u);
  EXPECT_THROW(load_evaluation_set(dir), DataError);
  fs::remove_all(dir);
}

TEST(Dataset, MissingVocabularyNamesThePath) {
  const auto dir = fresh_dir("tzsh_ds_novocab");
  save_dataset(generate(small_spec()), dir);
  fs::remove(dir / kVocabFile);
  try {
    load_training_data(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(kVocabFile), std::string::npos);
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace tzsh
