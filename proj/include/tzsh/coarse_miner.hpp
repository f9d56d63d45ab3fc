#pragma once

// Seen-vs-novel head and the cross-images selection layer.

#include <vector>

#include "tzsh/diffcore.hpp"

namespace tzsh {

/// Probability columns of the binary head.
inline constexpr std::size_t kSeenColumn = 0;
inline constexpr std::size_t kNovelColumn = 1;

struct CoarseScores {
  Tensor2 logits_u;  // r^u × 2
  Tensor2 logits_s;  // r^s × 2
  Tensor2 c_u;       // softmax of logits_u
  Tensor2 c_s;       // softmax of logits_s
};

/// One unlabeled row index per contiguous group of `group_size` rows.
struct CoarseSelection {
  std::vector<std::size_t> indices;
  std::size_t group_size = 0;

  std::size_t m() const { return indices.size(); }
};

struct CoarseLossResult {
  double loss = 0.0;
  double unlabeled_term = 0.0;
  double source_term = 0.0;
  Tensor2 grad_logits_u;  // nonzero only on selected rows
  Tensor2 grad_logits_s;
};

/// Binary head shared by both streams ("coarse.W", "coarse.b").
class CoarseHead {
 public:
  void init(ParamStore& params, std::size_t embed_dim, std::mt19937_64& rng) const;
  CoarseScores score(const Tensor2& f_u, const Tensor2& f_s, const ParamStore& params) const;
  /// Accumulates head gradients; returns (dL/df_u, dL/df_s).
  std::pair<Tensor2, Tensor2> backward(const Tensor2& f_u, const Tensor2& f_s,
                                       const CoarseLossResult& grads, double weight,
                                       ParamStore& params) const;

 private:
  LinearLayer layer_{"coarse"};
};

/// Per-group argmax of the novel-probability column over contiguous groups
/// of r' = r^u / m rows. Ties go to the lowest index.
CoarseSelection select_novel(const Tensor2& c_u, std::size_t m);

/// −(1/m) Σ_i log c^u[j_i, novel] − (1/r^s) Σ_i log c^s[i, seen], with
/// gradients w.r.t. the head logits. Unselected unlabeled rows get exactly 0.
CoarseLossResult coarse_loss(const CoarseScores& scores, const CoarseSelection& selection);

}  // namespace tzsh
