#pragma once

// Per-novel-class head, word-vector soft labels, and greedy class assignment.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tzsh/diffcore.hpp"

namespace tzsh {

struct ClassEntry {
  std::string name;
  bool novel = false;
  std::vector<double> vector;
};

/// Class names with word vectors. A class id is its position in the
/// vocabulary; seen and novel classes may be interleaved.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<ClassEntry> classes);

  static ClassVocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return classes_.size(); }
  std::size_t dim() const { return classes_.empty() ? 0 : classes_.front().vector.size(); }
  const ClassEntry& at(std::size_t id) const { return classes_.at(id); }
  const std::vector<ClassEntry>& classes() const { return classes_; }

  const std::vector<std::size_t>& seen_ids() const { return seen_; }
  /// Novel class ids in vocabulary order; column k of the fine head is novel_ids()[k].
  const std::vector<std::size_t>& novel_ids() const { return novel_; }
  std::size_t num_novel() const { return novel_.size(); }

  bool is_seen(int id) const;
  /// Column of a novel class id in the fine head, or -1.
  int novel_column(int id) const;

 private:
  std::vector<ClassEntry> classes_;
  std::vector<std::size_t> seen_;
  std::vector<std::size_t> novel_;
};

/// Similarities at or below this count as zero when building soft labels.
inline constexpr double kSimilarityTolerance = 1e-9;

/// Z_i·Z_j / (‖Z_i‖‖Z_j‖). Throws VocabularyError on a zero-norm vector.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Soft-label rows per seen class: clamped, normalized cosine similarities to
/// every novel class.
struct SoftLabelTable {
  Tensor2 rows;                       // |seen| × n_y, ordered like seen_ids()
  std::vector<int> row_of_class;      // class id → row, -1 for novel classes
  std::vector<std::size_t> fallback;  // seen ids whose row fell back to uniform
};

SoftLabelTable soft_label_table(const ClassVocabulary& vocab);

/// Soft labels for each source label (r^s × n_y). Every label must be a seen class.
Tensor2 soft_labels(std::span<const int> source_labels, const ClassVocabulary& vocab);
Tensor2 soft_labels(std::span<const int> source_labels, const SoftLabelTable& table);

/// j_k = argmax_j p_u[j, k] for each column k, lowest row index on ties.
/// A row may win several columns.
std::vector<std::size_t> assign(const Tensor2& p_u);

struct FineLossResult {
  double loss = 0.0;
  double source_term = 0.0;
  double target_term = 0.0;
  Tensor2 grad_logits_s;  // r^s × n_y
  Tensor2 grad_logits_u;  // m × n_y, nonzero only on assigned rows
};

/// −(1/r^s) Σ_i Σ_k soft[i,k] log p_s[i,k] − (1/n_y) Σ_k log p_u[j_k, k].
FineLossResult fine_loss(const Tensor2& p_s, const Tensor2& p_u,
                         std::span<const std::size_t> assignment, const Tensor2& soft);

/// n_y-way head applied to source embeddings and the coarse-selected
/// unlabeled embeddings ("fine.W", "fine.b").
class FineHead {
 public:
  void init(ParamStore& params, std::size_t embed_dim, std::size_t n_novel,
            std::mt19937_64& rng) const;
  Tensor2 logits(const Tensor2& f, const ParamStore& params) const;
  Tensor2 backward(const Tensor2& f, const Tensor2& dlogits, ParamStore& params) const;

 private:
  LinearLayer layer_{"fine"};
};

}  // namespace tzsh
