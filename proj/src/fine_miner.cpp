#include "tzsh/fine_miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "tzsh/errors.hpp"

namespace tzsh {

ClassVocabulary::ClassVocabulary(std::vector<ClassEntry> classes) : classes_(std::move(classes)) {
  if (classes_.empty()) throw VocabularyError("vocabulary is empty");
  const std::size_t d = classes_.front().vector.size();
  if (d == 0) throw VocabularyError("word vectors must have dimension >= 1");
  std::unordered_set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    if (!names.insert(c.name).second) throw VocabularyError("duplicate class name: " + c.name);
    if (c.vector.size() != d) {
      throw VocabularyError("class " + c.name + ": word vector has dimension " +
                            std::to_string(c.vector.size()) + ", expected " + std::to_string(d));
    }
    double norm2 = 0.0;
    for (double v : c.vector) {
      if (!std::isfinite(v)) throw VocabularyError("class " + c.name + ": non-finite word vector");
      norm2 += v * v;
    }
    if (norm2 == 0.0) throw VocabularyError("class " + c.name + ": zero-norm word vector");
    (c.novel ? novel_ : seen_).push_back(i);
  }
  if (novel_.empty()) throw VocabularyError("vocabulary has no novel classes");
  if (seen_.empty()) throw VocabularyError("vocabulary has no seen classes");
}

ClassVocabulary ClassVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<ClassEntry> classes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    ClassEntry e;
    std::string kind;
    if (!(ss >> e.name >> kind)) throw ParseError(path.string(), lineno, "expected <name> <seen|novel>");
    if (kind == "seen") {
      e.novel = false;
    } else if (kind == "novel") {
      e.novel = true;
    } else {
      throw ParseError(path.string(), lineno, "unknown partition '" + kind + "'");
    }
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        e.vector.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "bad number '" + tok + "'");
      }
    }
    if (!classes.empty() && e.vector.size() != classes.front().vector.size()) {
      throw ParseError(path.string(), lineno, "word vector dimension mismatch");
    }
    classes.push_back(std::move(e));
  }
  return ClassVocabulary(std::move(classes));
}

void ClassVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  out << std::setprecision(17);
  for (const auto& c : classes_) {
    out << c.name << ' ' << (c.novel ? "novel" : "seen");
    for (double v : c.vector) out << ' ' << v;
    out << '\n';
  }
}

bool ClassVocabulary::is_seen(int id) const {
  return id >= 0 && static_cast<std::size_t>(id) < classes_.size() && !classes_[id].novel;
}

int ClassVocabulary::novel_column(int id) const {
  auto it = std::find(novel_.begin(), novel_.end(), static_cast<std::size_t>(id));
  return it == novel_.end() ? -1 : static_cast<int>(it - novel_.begin());
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_sim: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw VocabularyError("cosine_sim: zero-norm vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

SoftLabelTable soft_label_table(const ClassVocabulary& vocab) {
  const auto& seen = vocab.seen_ids();
  const auto& novel = vocab.novel_ids();
  SoftLabelTable t;
  t.rows = Tensor2(seen.size(), novel.size());
  t.row_of_class.assign(vocab.size(), -1);
  for (std::size_t r = 0; r < seen.size(); ++r) {
    t.row_of_class[seen[r]] = static_cast<int>(r);
    auto row = t.rows.row(r);
    double sum = 0.0;
    for (std::size_t k = 0; k < novel.size(); ++k) {
      // Negative similarities carry no "looks like" evidence; round-off noise
      // around zero is not evidence either.
      const double s = cosine_sim(vocab.at(seen[r]).vector, vocab.at(novel[k]).vector);
      row[k] = s > kSimilarityTolerance ? s : 0.0;
      sum += row[k];
    }
    if (sum > 0.0) {
      for (double& v : row) v /= sum;
    } else {
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(novel.size()));
      t.fallback.push_back(seen[r]);
    }
  }
  if (!t.fallback.empty()) {
    std::cerr << "warning: " << t.fallback.size()
              << " seen class(es) have no positive similarity to any novel class; "
                 "using uniform soft labels for:";
    for (std::size_t id : t.fallback) std::cerr << ' ' << vocab.at(id).name;
    std::cerr << '\n';
  }
  return t;
}

Tensor2 soft_labels(std::span<const int> source_labels, const SoftLabelTable& table) {
  Tensor2 out(source_labels.size(), table.rows.cols());
  for (std::size_t i = 0; i < source_labels.size(); ++i) {
    const int id = source_labels[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table.row_of_class.size() ||
        table.row_of_class[id] < 0) {
      throw VocabularyError("source label " + std::to_string(id) + " is not a seen class");
    }
    auto src = table.rows.row(static_cast<std::size_t>(table.row_of_class[id]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor2 soft_labels(std::span<const int> source_labels, const ClassVocabulary& vocab) {
  return soft_labels(source_labels, soft_label_table(vocab));
}

std::vector<std::size_t> assign(const Tensor2& p_u) {
  if (p_u.rows() == 0) throw ConfigError("assign: no candidate rows");
  std::vector<std::size_t> out(p_u.cols(), 0);
  for (std::size_t k = 0; k < p_u.cols(); ++k) {
    for (std::size_t j = 1; j < p_u.rows(); ++j) {
      if (p_u(j, k) > p_u(out[k], k)) out[k] = j;
    }
  }
  return out;
}

FineLossResult fine_loss(const Tensor2& p_s, const Tensor2& p_u,
                         std::span<const std::size_t> assignment, const Tensor2& soft) {
  const std::size_t rs = p_s.rows();
  const std::size_t ny = p_s.cols();
  if (!soft.same_shape(p_s)) {
    throw DimensionError("fine loss: soft labels " + soft.shape_string() + " vs p_s " +
                         p_s.shape_string());
  }
  if (p_u.cols() != ny || assignment.size() != ny) {
    throw DimensionError("fine loss: p_u " + p_u.shape_string() + " with " +
                         std::to_string(assignment.size()) + " assignments, n_y=" +
                         std::to_string(ny));
  }
  if (rs == 0 || ny == 0) throw ConfigError("fine loss: empty batch");
  FineLossResult r;
  r.grad_logits_s = Tensor2(rs, ny);
  r.grad_logits_u = Tensor2(p_u.rows(), ny);

  const double ws = 1.0 / static_cast<double>(rs);
  for (std::size_t i = 0; i < rs; ++i) {
    for (std::size_t k = 0; k < ny; ++k) {
      const double t = soft(i, k);
      if (t == 0.0) continue;
      r.source_term -= ws * t * std::log(std::max(p_s(i, k), kProbabilityFloor));
      accumulate_nll_grad(p_s.row(i), k, ws * t, r.grad_logits_s.row(i));
    }
  }
  const double wu = 1.0 / static_cast<double>(ny);
  for (std::size_t k = 0; k < ny; ++k) {
    const std::size_t j = assignment[k];
    if (j >= p_u.rows()) throw DimensionError("fine loss: assignment out of range");
    r.target_term -= wu * std::log(std::max(p_u(j, k), kProbabilityFloor));
    accumulate_nll_grad(p_u.row(j), k, wu, r.grad_logits_u.row(j));
  }
  r.loss = r.source_term + r.target_term;
  return r;
}

void FineHead::init(ParamStore& params, std::size_t embed_dim, std::size_t n_novel,
                    std::mt19937_64& rng) const {
  layer_.init(params, embed_dim, n_novel, rng);
}

Tensor2 FineHead::logits(const Tensor2& f, const ParamStore& params) const {
  return layer_.forward(params, f);
}

Tensor2 FineHead::backward(const Tensor2& f, const Tensor2& dlogits, ParamStore& params) const {
  return layer_.backward(params, f, dlogits);
}

}  // namespace tzsh
