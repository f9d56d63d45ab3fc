#include "tzsh/coarse_miner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tzsh/errors.hpp"

namespace tzsh {

void CoarseHead::init(ParamStore& params, std::size_t embed_dim, std::mt19937_64& rng) const {
  layer_.init(params, embed_dim, 2, rng);
}

CoarseScores CoarseHead::score(const Tensor2& f_u, const Tensor2& f_s,
                               const ParamStore& params) const {
  CoarseScores s;
  s.logits_u = layer_.forward(params, f_u);
  s.logits_s = layer_.forward(params, f_s);
  s.c_u = softmax_rows(s.logits_u);
  s.c_s = softmax_rows(s.logits_s);
  return s;
}

std::pair<Tensor2, Tensor2> CoarseHead::backward(const Tensor2& f_u, const Tensor2& f_s,
                                                 const CoarseLossResult& grads, double weight,
                                                 ParamStore& params) const {
  Tensor2 gu = grads.grad_logits_u;
  Tensor2 gs = grads.grad_logits_s;
  gu *= weight;
  gs *= weight;
  return {layer_.backward(params, f_u, gu), layer_.backward(params, f_s, gs)};
}

CoarseSelection select_novel(const Tensor2& c_u, std::size_t m) {
  if (m == 0) throw ConfigError("coarse selection: m must be >= 1");
  if (c_u.cols() != 2) throw DimensionError("coarse selection: expected 2 probability columns");
  if (c_u.rows() % m != 0) {
    throw ConfigError("coarse selection: r^u=" + std::to_string(c_u.rows()) +
                      " is not divisible by m=" + std::to_string(m));
  }
  CoarseSelection sel;
  sel.group_size = c_u.rows() / m;
  sel.indices.reserve(m);
  for (std::size_t g = 0; g < m; ++g) {
    const std::size_t begin = g * sel.group_size;
    std::size_t best = begin;
    for (std::size_t j = begin + 1; j < begin + sel.group_size; ++j) {
      if (c_u(j, kNovelColumn) > c_u(best, kNovelColumn)) best = j;
    }
    sel.indices.push_back(best);
  }
  return sel;
}

CoarseLossResult coarse_loss(const CoarseScores& scores, const CoarseSelection& selection) {
  const std::size_t m = selection.m();
  const std::size_t rs = scores.c_s.rows();
  if (m == 0 || rs == 0) throw ConfigError("coarse loss: empty selection or source batch");
  CoarseLossResult r;
  r.grad_logits_u = Tensor2(scores.c_u.rows(), 2);
  r.grad_logits_s = Tensor2(rs, 2);

  const double wu = 1.0 / static_cast<double>(m);
  for (std::size_t j : selection.indices) {
    if (j >= scores.c_u.rows()) throw DimensionError("coarse loss: selection out of range");
    const double p = std::max(scores.c_u(j, kNovelColumn), kProbabilityFloor);
    r.unlabeled_term -= wu * std::log(p);
    accumulate_nll_grad(scores.c_u.row(j), kNovelColumn, wu, r.grad_logits_u.row(j));
  }
  const double ws = 1.0 / static_cast<double>(rs);
  for (std::size_t i = 0; i < rs; ++i) {
    const double p = std::max(scores.c_s(i, kSeenColumn), kProbabilityFloor);
    r.source_term -= ws * std::log(p);
    accumulate_nll_grad(scores.c_s.row(i), kSeenColumn, ws, r.grad_logits_s.row(i));
  }
  r.loss = r.unlabeled_term + r.source_term;
  return r;
}

}  // namespace tzsh
