#include "tzsh/hash_loss.hpp"

#include <algorithm>
#include <string>

#include "tzsh/errors.hpp"

namespace tzsh {

std::size_t PairLabels::count(PairLabel v) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), v));
}

std::size_t sign_hamming(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("sign_hamming: length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] >= 0.0) != (b[i] >= 0.0);
  return d;
}

PairLabels pair_labels(const HashBatch& batch, std::size_t tau_sim, std::size_t tau_dis) {
  const std::size_t n = batch.size();
  if (batch.origin.size() != n) throw DimensionError("pair_labels: origin count mismatch");
  if (tau_sim > tau_dis || tau_dis > batch.bits()) {
    throw ConfigError("pair_labels: need 0 <= tau_sim <= tau_dis <= l, got tau_sim=" +
                      std::to_string(tau_sim) + " tau_dis=" + std::to_string(tau_dis));
  }
  PairLabels labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RowOrigin& a = batch.origin[i];
    for (std::size_t k = i + 1; k < n; ++k) {
      const RowOrigin& b = batch.origin[k];
      PairLabel v = PairLabel::excluded;
      if (!a.target && !b.target) {
        v = a.class_id == b.class_id ? PairLabel::similar : PairLabel::dissimilar;
      } else if (a.target != b.target) {
        v = PairLabel::dissimilar;
      } else {
        const std::size_t d = sign_hamming(batch.h.row(i), batch.h.row(k));
        if (a.class_id == b.class_id && d <= tau_sim) {
          v = PairLabel::similar;
        } else if (a.class_id != b.class_id && d >= tau_dis) {
          v = PairLabel::dissimilar;
        }
      }
      labels.set(i, k, v);
    }
  }
  return labels;
}

ContrastiveResult contrastive_loss(const HashBatch& batch, const PairLabels& labels, double eps) {
  if (!(eps > 0.0)) throw ConfigError("contrastive loss: margin must be positive");
  const std::size_t n = batch.size();
  if (labels.size() != n) throw DimensionError("contrastive loss: label matrix size mismatch");
  const std::size_t l = batch.bits();
  ContrastiveResult r;
  r.grad_h = Tensor2(n, l);
  for (std::size_t i = 0; i < n; ++i) {
    auto hi = batch.h.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      if (i == k) continue;
      const PairLabel v = labels(i, k);
      if (v == PairLabel::excluded) continue;
      ++r.active_pairs;
      auto hk = batch.h.row(k);
      const double d2 = squared_distance(hi, hk);
      double coef = 0.0;  // dL/d(d2) for this ordered pair
      if (v == PairLabel::similar) {
        r.loss += d2;
        coef = 1.0;
      } else if (d2 < eps) {
        r.loss += eps - d2;
        coef = -1.0;
      }
      if (coef == 0.0) continue;
      auto gi = r.grad_h.row(i);
      auto gk = r.grad_h.row(k);
      for (std::size_t c = 0; c < l; ++c) {
        const double g = 2.0 * coef * (hi[c] - hk[c]);
        gi[c] += g;
        gk[c] -= g;
      }
    }
  }
  return r;
}

void HashHead::init(ParamStore& params, std::size_t embed_dim, std::size_t bits,
                    std::mt19937_64& rng) const {
  layer_.init(params, embed_dim, bits, rng);
}

Tensor2 HashHead::codes(const Tensor2& f, const ParamStore& params) const {
  return layer_.forward(params, f);
}

Tensor2 HashHead::backward(const Tensor2& f, const Tensor2& dh, ParamStore& params) const {
  return layer_.backward(params, f, dh);
}

}  // namespace tzsh
