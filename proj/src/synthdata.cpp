#include "tzsh/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "tzsh/errors.hpp"

namespace tzsh {

// ---------------------------------------------------------------------------
// SynthSpec

void SynthSpec::validate() const {
  if (n_seen < 2) throw ConfigError("synth: n_seen must be >= 2 (hashing needs two seen classes)");
  if (n_novel < 1) throw ConfigError("synth: n_novel must be >= 1");
  if (feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
  if (!(sigma_within > 0.0)) throw ConfigError("synth: sigma_within must be > 0");
  if (!(sigma_between >= 0.0)) throw ConfigError("synth: sigma_between must be >= 0");
  if (word_dim < n_seen + n_novel) {
    throw ConfigError("synth: word_dim must be >= n_seen + n_novel for exact cosines");
  }
  if (rho.size() != 1 && rho.size() != n_novel) {
    throw ConfigError("synth: rho needs 1 or n_novel values");
  }
  for (double r : rho) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("synth: rho must lie in [0, 1]");
  }
  if (!(novel_fraction >= 0.0 && novel_fraction <= 1.0)) {
    throw ConfigError("synth: novel_fraction must lie in [0, 1]");
  }
  if (n_source == 0 || n_unlabeled == 0 || n_queries == 0) {
    throw ConfigError("synth: set sizes must be >= 1");
  }
}

double SynthSpec::rho_for(std::size_t novel_index) const {
  return rho.size() == 1 ? rho.front() : rho.at(novel_index);
}

std::size_t SynthSpec::paired_seen(std::size_t novel_index) const {
  if (n_novel <= n_seen) return novel_index * n_seen / n_novel;
  return novel_index % n_seen;
}

SynthSpec SynthSpec::from_file(const KeyValueFile& kv) {
  kv.check_keys({"n_seen", "n_novel", "feature_dim", "sigma_between", "sigma_within", "word_dim",
                 "rho", "n_source", "n_unlabeled", "n_queries", "novel_fraction", "seed"});
  SynthSpec s;
  s.n_seen = kv.get_count("n_seen", s.n_seen);
  s.n_novel = kv.get_count("n_novel", s.n_novel);
  s.feature_dim = kv.get_count("feature_dim", s.feature_dim);
  s.sigma_between = kv.get_double("sigma_between", s.sigma_between);
  s.sigma_within = kv.get_double("sigma_within", s.sigma_within);
  s.word_dim = kv.get_count("word_dim", s.word_dim);
  s.rho = kv.get_doubles("rho", s.rho);
  s.n_source = kv.get_count("n_source", s.n_source);
  s.n_unlabeled = kv.get_count("n_unlabeled", s.n_unlabeled);
  s.n_queries = kv.get_count("n_queries", s.n_queries);
  s.novel_fraction = kv.get_double("novel_fraction", s.novel_fraction);
  s.seed = kv.get_count("seed", s.seed);
  s.validate();
  return s;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
  return from_file(KeyValueFile::load(path));
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::vector<double> gaussian_vector(std::size_t n, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

/// Orthonormal rows obtained by modified Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> orthonormal_basis(std::size_t count, std::size_t dim,
                                                   std::mt19937_64& rng) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    auto v = gaussian_vector(dim, 1.0, rng);
    for (const auto& e : basis) {
      const double proj = std::inner_product(v.begin(), v.end(), e.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * e[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

/// Draws one row per entry of `classes` around the class means.
Tensor2 sample_rows(const std::vector<int>& classes, const std::vector<std::vector<double>>& means,
                    double sigma, std::mt19937_64& rng) {
  const std::size_t d = means.front().size();
  Tensor2 x(classes.size(), d);
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t r = 0; r < classes.size(); ++r) {
    const auto& mu = means[static_cast<std::size_t>(classes[r])];
    for (std::size_t c = 0; c < d; ++c) x(r, c) = mu[c] + noise(rng);
  }
  return x;
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t n_classes = spec.n_seen + spec.n_novel;

  // Class means: novel means sit between their paired seen mean and a fresh point.
  std::vector<std::vector<double>> means;
  for (std::size_t i = 0; i < spec.n_seen; ++i) {
    means.push_back(gaussian_vector(spec.feature_dim, spec.sigma_between, rng));
  }
  for (std::size_t k = 0; k < spec.n_novel; ++k) {
    const double rho = spec.rho_for(k);
    const auto& anchor = means[spec.paired_seen(k)];
    auto fresh = gaussian_vector(spec.feature_dim, spec.sigma_between, rng);
    std::vector<double> mu(spec.feature_dim);
    for (std::size_t c = 0; c < spec.feature_dim; ++c) {
      mu[c] = rho * anchor[c] + (1.0 - rho) * fresh[c];
    }
    means.push_back(std::move(mu));
  }

  // Word vectors: seen class i is basis vector e_i; novel class k is
  // rho_k e_pair + sqrt(1 - rho_k^2) e_{n_seen + k}.
  const auto basis = orthonormal_basis(n_classes, spec.word_dim, rng);
  std::vector<ClassEntry> classes;
  for (std::size_t i = 0; i < spec.n_seen; ++i) {
    classes.push_back({"seen_" + std::to_string(i), false, basis[i]});
  }
  for (std::size_t k = 0; k < spec.n_novel; ++k) {
    const double rho = spec.rho_for(k);
    const double ortho = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    std::vector<double> z(spec.word_dim);
    for (std::size_t c = 0; c < spec.word_dim; ++c) {
      z[c] = rho * basis[spec.paired_seen(k)][c] + ortho * basis[spec.n_seen + k][c];
    }
    classes.push_back({"novel_" + std::to_string(k), true, std::move(z)});
  }

  auto shuffled_labels = [&](std::size_t n_seen_rows, std::size_t n_novel_rows) {
    std::vector<int> labels;
    labels.reserve(n_seen_rows + n_novel_rows);
    for (std::size_t r = 0; r < n_seen_rows; ++r) labels.push_back(static_cast<int>(r % spec.n_seen));
    for (std::size_t r = 0; r < n_novel_rows; ++r) {
      labels.push_back(static_cast<int>(spec.n_seen + r % spec.n_novel));
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    return labels;
  };

  Dataset data;
  {
    auto labels = shuffled_labels(spec.n_source, 0);
    Tensor2 x = sample_rows(labels, means, spec.sigma_within, rng);
    data.source = FeatureBatch::source(std::move(x), std::move(labels));
  }
  {
    const auto n_novel_rows = static_cast<std::size_t>(
        std::llround(spec.novel_fraction * static_cast<double>(spec.n_unlabeled)));
    auto labels = shuffled_labels(spec.n_unlabeled - n_novel_rows, n_novel_rows);
    Tensor2 x = sample_rows(labels, means, spec.sigma_within, rng);
    data.unlabeled = FeatureBatch::unlabeled(std::move(x));
    data.eval.unlabeled_truth = HiddenLabels(std::move(labels));
  }
  {
    auto labels = shuffled_labels(0, spec.n_queries);
    Tensor2 x = sample_rows(labels, means, spec.sigma_within, rng);
    data.eval.queries = FeatureBatch::source(std::move(x), std::move(labels));
  }
  data.vocab = ClassVocabulary(std::move(classes));
  return data;
}

Tensor2 EvaluationSet::database_features(const FeatureBatch& source,
                                         const FeatureBatch& unlabeled) const {
  if (unlabeled.size() != unlabeled_truth.size()) {
    throw DataError("evaluation: unlabeled set and hidden labels differ in size");
  }
  return vstack(source.features(), unlabeled.features());
}

std::vector<int> EvaluationSet::database_labels(const FeatureBatch& source) const {
  std::vector<int> labels = source.labels();
  const auto& truth = unlabeled_truth.reveal_for_evaluation();
  labels.insert(labels.end(), truth.begin(), truth.end());
  return labels;
}

// ---------------------------------------------------------------------------
// Files

FeatureBatch load_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  const std::string src = path.string();
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(src, lineno, "missing header");
  std::size_t d = 0, n = 0;
  {
    std::istringstream ss(line);
    std::string extra;
    if (!(ss >> d >> n) || (ss >> extra) || d == 0) {
      throw ParseError(src, lineno, "header must be '<d_in> <n>'");
    }
  }
  Tensor2 x(n, d);
  std::vector<int> labels(n, -1);
  std::size_t n_labeled = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!next_line()) throw ParseError(src, lineno, "expected " + std::to_string(n) + " rows");
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok != "?") {
      int label = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), label);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || label < 0) {
        throw ParseError(src, lineno, "bad label '" + tok + "'");
      }
      labels[r] = label;
      ++n_labeled;
    }
    std::size_t c = 0;
    while (ss >> tok) {
      if (c == d) throw ParseError(src, lineno, "row has more than " + std::to_string(d) + " values");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError(src, lineno, "bad value '" + tok + "'");
      }
      x(r, c++) = v;
    }
    if (c != d) {
      throw ParseError(src, lineno, "row has " + std::to_string(c) + " values, expected " +
                                        std::to_string(d));
    }
  }
  if (next_line()) throw ParseError(src, lineno, "more rows than the header declares");
  if (n_labeled == 0) return FeatureBatch::unlabeled(std::move(x));
  if (n_labeled != n) throw DataError(src + ": mixes labeled and unlabeled rows");
  return FeatureBatch::source(std::move(x), std::move(labels));
}

FeatureBatch load_labeled_features(const std::filesystem::path& path) {
  FeatureBatch b = load_features(path);
  if (!b.has_labels()) throw DataError(path.string() + ": expected labeled rows");
  return b;
}

void save_features(const FeatureBatch& batch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write feature file " + path.string());
  out << std::setprecision(17);
  out << batch.dim() << ' ' << batch.size() << '\n';
  for (std::size_t r = 0; r < batch.size(); ++r) {
    if (batch.has_labels()) {
      out << batch.labels()[r];
    } else {
      out << '?';
    }
    for (double v : batch.features().row(r)) out << ' ' << v;
    out << '\n';
  }
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_features(data.source, dir / kSourceFile);
  save_features(data.unlabeled, dir / kUnlabeledFile);
  save_features(data.eval.queries, dir / kQueriesFile);
  data.vocab.save(dir / kVocabFile);
  std::ofstream truth(dir / kTruthFile, std::ios::trunc);
  if (!truth) throw DataError("cannot write " + (dir / kTruthFile).string());
  for (int l : data.eval.unlabeled_truth.reveal_for_evaluation()) truth << l << '\n';
}

Dataset load_training_data(const std::filesystem::path& dir) {
  Dataset data;
  data.vocab = ClassVocabulary::load(dir / kVocabFile);
  data.source = load_labeled_features(dir / kSourceFile);
  data.unlabeled = load_features(dir / kUnlabeledFile);
  if (data.unlabeled.has_labels()) {
    throw DataError((dir / kUnlabeledFile).string() + ": unlabeled stream must use '?' labels");
  }
  if (data.source.dim() != data.unlabeled.dim()) {
    throw DataError("source and unlabeled feature widths differ");
  }
  for (int l : data.source.labels()) {
    if (!data.vocab.is_seen(l)) {
      throw DataError("source label " + std::to_string(l) + " is not a seen class in the vocabulary");
    }
  }
  return data;
}

EvaluationSet load_evaluation_set(const std::filesystem::path& dir) {
  EvaluationSet eval;
  eval.queries = load_labeled_features(dir / kQueriesFile);
  std::ifstream in(dir / kTruthFile);
  if (!in) throw DataError("cannot open " + (dir / kTruthFile).string());
  std::vector<int> truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || v < 0 || line.find_first_not_of(" \t\r", ptr - line.data()) != std::string::npos) {
      throw ParseError((dir / kTruthFile).string(), lineno, "bad label");
    }
    truth.push_back(v);
  }
  eval.unlabeled_truth = HiddenLabels(std::move(truth));
  return eval;
}

}  // namespace tzsh
