#pragma once

#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "tzsh/diffcore.hpp"
#include "tzsh/tensor.hpp"

namespace tzsh {

enum class Stream { source, unlabeled };

/// Input feature rows for one stream. Source batches carry a class id per
/// row; unlabeled batches carry none.
class FeatureBatch {
 public:
  static FeatureBatch source(Tensor2 features, std::vector<int> labels);
  static FeatureBatch unlabeled(Tensor2 features);

  const Tensor2& features() const { return features_; }
  Stream stream() const { return stream_; }
  bool has_labels() const { return labels_.has_value(); }
  /// Throws ConfigError on unlabeled batches.
  const std::vector<int>& labels() const;
  std::size_t size() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }

  /// Sub-batch with the given rows; keeps the stream tag.
  FeatureBatch subset(std::span<const std::size_t> rows) const;

 private:
  FeatureBatch(Tensor2 f, std::optional<std::vector<int>> l, Stream s)
      : features_(std::move(f)), labels_(std::move(l)), stream_(s) {}

  Tensor2 features_;
  std::optional<std::vector<int>> labels_;
  Stream stream_ = Stream::unlabeled;
};

/// Layer widths of the shared MLP: input_dim → widths[0] → … → widths.back()
/// (the common representation dimension), ReLU between layers.
struct BackboneConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> widths{64, 32};

  void validate() const;
  std::size_t output_dim() const { return widths.back(); }
};

/// Activations saved by a forward pass for the reverse pass.
struct BackboneTape {
  std::vector<Tensor2> inputs;  // input to each layer
  std::vector<Tensor2> pre;     // pre-activation of each layer
  Tensor2 output;
};

/// Shared two-stream network. The same parameters embed both streams; the
/// stream tag never influences the result.
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  /// Rebuilds the layer structure from parameters named "backbone.W<i>".
  static Backbone from_params(const ParamStore& params);

  const BackboneConfig& config() const { return config_; }
  std::size_t num_layers() const { return layers_.size(); }

  void init(ParamStore& params, std::mt19937_64& rng) const;

  Tensor2 embed(const FeatureBatch& batch, const ParamStore& params) const;
  std::pair<Tensor2, Tensor2> embed_pair(const FeatureBatch& src, const FeatureBatch& unl,
                                         const ParamStore& params) const;

  BackboneTape forward(const Tensor2& x, const ParamStore& params) const;
  /// Accumulates parameter gradients for dL/d(output); returns dL/d(input).
  Tensor2 backward(const BackboneTape& tape, const Tensor2& dout, ParamStore& params) const;

 private:
  BackboneConfig config_;
  std::vector<LinearLayer> layers_;
};

}  // namespace tzsh
