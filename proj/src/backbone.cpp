#include "tzsh/backbone.hpp"

#include <string>

#include "tzsh/errors.hpp"

namespace tzsh {

FeatureBatch FeatureBatch::source(Tensor2 features, std::vector<int> labels) {
  if (labels.size() != features.rows()) {
    throw DimensionError("source batch: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
  }
  return {std::move(features), std::move(labels), Stream::source};
}

FeatureBatch FeatureBatch::unlabeled(Tensor2 features) {
  return {std::move(features), std::nullopt, Stream::unlabeled};
}

const std::vector<int>& FeatureBatch::labels() const {
  if (!labels_) throw ConfigError("unlabeled batch has no labels");
  return *labels_;
}

FeatureBatch FeatureBatch::subset(std::span<const std::size_t> rows) const {
  Tensor2 f = features_.gather_rows(rows);
  if (!labels_) return unlabeled(std::move(f));
  std::vector<int> l;
  l.reserve(rows.size());
  for (std::size_t r : rows) l.push_back((*labels_)[r]);
  return source(std::move(f), std::move(l));
}

void BackboneConfig::validate() const {
  if (input_dim == 0) throw ConfigError("backbone: input dimension must be >= 1");
  if (widths.empty()) throw ConfigError("backbone: at least one layer required");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("backbone: layer widths must be >= 1");
  }
}

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    layers_.emplace_back("backbone." + std::to_string(i));
  }
}

Backbone Backbone::from_params(const ParamStore& params) {
  BackboneConfig cfg;
  cfg.widths.clear();
  for (std::size_t i = 0;; ++i) {
    const std::string name = "backbone." + std::to_string(i) + ".W";
    if (!params.contains(name)) break;
    const Tensor2& W = params.value(name);
    if (i == 0) {
      cfg.input_dim = W.rows();
    } else if (W.rows() != cfg.widths.back()) {
      throw DimensionError("backbone: layer " + std::to_string(i) + " input width mismatch");
    }
    cfg.widths.push_back(W.cols());
  }
  if (cfg.widths.empty()) throw DataError("checkpoint has no backbone layers");
  return Backbone(std::move(cfg));
}

void Backbone::init(ParamStore& params, std::mt19937_64& rng) const {
  std::size_t in = config_.input_dim;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].init(params, in, config_.widths[i], rng);
    in = config_.widths[i];
  }
}

Tensor2 Backbone::embed(const FeatureBatch& batch, const ParamStore& params) const {
  return forward(batch.features(), params).output;
}

std::pair<Tensor2, Tensor2> Backbone::embed_pair(const FeatureBatch& src, const FeatureBatch& unl,
                                                 const ParamStore& params) const {
  if (src.stream() != Stream::source) throw ConfigError("embed_pair: first batch must be source");
  if (unl.stream() != Stream::unlabeled) {
    throw ConfigError("embed_pair: second batch must be unlabeled");
  }
  if (src.size() == 0 || unl.size() == 0) throw ConfigError("empty stream");
  return {embed(src, params), embed(unl, params)};
}

BackboneTape Backbone::forward(const Tensor2& x, const ParamStore& params) const {
  if (x.rows() == 0) throw ConfigError("empty stream");
  if (x.cols() != config_.input_dim) {
    throw DimensionError("backbone: expected " + std::to_string(config_.input_dim) +
                         " input features, got " + std::to_string(x.cols()));
  }
  BackboneTape tape;
  Tensor2 h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    tape.inputs.push_back(h);
    Tensor2 pre = layers_[i].forward(params, h);
    h = (i + 1 < layers_.size()) ? relu(pre) : pre;
    tape.pre.push_back(std::move(pre));
  }
  tape.output = std::move(h);
  return tape;
}

Tensor2 Backbone::backward(const BackboneTape& tape, const Tensor2& dout,
                           ParamStore& params) const {
  Tensor2 grad = dout;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) grad = relu_backward(tape.pre[i], grad);
    grad = layers_[i].backward(params, tape.inputs[i], grad);
  }
  return grad;
}

}  // namespace tzsh
