#pragma once

#include <numeric>

#include "tzsh/pipeline.hpp"

namespace tzsh::testing {

/// A few hundred rows, quick enough to train in well under a second.
inline SynthSpec tiny_spec(std::uint64_t seed = 3) {
  SynthSpec s;
  s.n_seen = 4;
  s.n_novel = 2;
  s.feature_dim = 10;
  s.word_dim = 12;
  s.n_source = 96;
  s.n_unlabeled = 128;
  s.n_queries = 20;
  s.seed = seed;
  return s;
}

inline TrainConfig tiny_config() {
  TrainConfig c;
  c.rs = 16;
  c.ru = 32;
  c.m = 8;
  c.l = 12;
  c.epochs = 3;
  c.lr = 0.05;
  c.backbone_widths = {12, 8};
  c.seed = 5;
  return c;
}

inline Model tiny_model(const Dataset& d, const TrainConfig& c) {
  BackboneConfig bc;
  bc.input_dim = d.source.dim();
  bc.widths = c.backbone_widths;
  return Model(bc, d.vocab.num_novel(), c.l, c.seed);
}

/// First rows of each stream as one training batch.
inline FeatureBatch head_rows(const FeatureBatch& b, std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return b.subset(rows);
}

}  // namespace tzsh::testing
