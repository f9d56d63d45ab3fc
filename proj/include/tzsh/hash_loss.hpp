#pragma once

// Pair labels over source and mined target rows, and the contrastive
// similarity-preserving loss on relaxed codes.

#include <cstdint>
#include <vector>

#include "tzsh/diffcore.hpp"

namespace tzsh {

enum class PairLabel : std::uint8_t { excluded, similar, dissimilar };

struct RowOrigin {
  bool target = false;  // false: labeled source row
  int class_id = 0;     // source label, or the predicted novel class for target rows

  static RowOrigin source(int label) { return {false, label}; }
  static RowOrigin mined(int novel_class) { return {true, novel_class}; }
};

struct HashBatch {
  Tensor2 h;  // (r^s + n_y) × l relaxed codes
  std::vector<RowOrigin> origin;

  std::size_t size() const { return h.rows(); }
  std::size_t bits() const { return h.cols(); }
};

/// Symmetric n×n label matrix; the diagonal is always excluded.
class PairLabels {
 public:
  explicit PairLabels(std::size_t n = 0) : n_(n), labels_(n * n, PairLabel::excluded) {}

  std::size_t size() const { return n_; }
  PairLabel operator()(std::size_t i, std::size_t k) const { return labels_[i * n_ + k]; }
  void set(std::size_t i, std::size_t k, PairLabel v) {
    labels_[i * n_ + k] = v;
    labels_[k * n_ + i] = v;
  }
  std::size_t count(PairLabel v) const;

  friend bool operator==(const PairLabels&, const PairLabels&) = default;

 private:
  std::size_t n_;
  std::vector<PairLabel> labels_;
};

/// Hamming distance between sign(a) and sign(b), with sign(0) = +1.
std::size_t sign_hamming(std::span<const double> a, std::span<const double> b);

/// Source/source: similar iff equal labels. Source/target: dissimilar.
/// Target/target: similar if same class and Hamming ≤ tau_sim; dissimilar if
/// different class and Hamming ≥ tau_dis; excluded otherwise.
PairLabels pair_labels(const HashBatch& batch, std::size_t tau_sim, std::size_t tau_dis);

struct ContrastiveResult {
  double loss = 0.0;             // sum over ordered pairs
  std::size_t active_pairs = 0;  // ordered non-excluded pairs with i ≠ k
  Tensor2 grad_h;
};

/// Σ_{i,k} ŝ‖h_i − h_k‖² + (1 − ŝ) max(0, eps − ‖h_i − h_k‖²) over ordered
/// pairs. Excluded pairs contribute nothing; the hinge subgradient at the
/// kink is 0.
ContrastiveResult contrastive_loss(const HashBatch& batch, const PairLabels& labels, double eps);

/// l-dimensional hash head ("hash.W", "hash.b").
class HashHead {
 public:
  void init(ParamStore& params, std::size_t embed_dim, std::size_t bits,
            std::mt19937_64& rng) const;
  Tensor2 codes(const Tensor2& f, const ParamStore& params) const;
  Tensor2 backward(const Tensor2& f, const Tensor2& dh, ParamStore& params) const;
  std::size_t bits(const ParamStore& params) const { return layer_.out_dim(params); }

 private:
  LinearLayer layer_{"hash"};
};

}  // namespace tzsh
