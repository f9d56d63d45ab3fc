#pragma once

// Dense layer primitives with hand-written reverse passes, parameter storage,
// plain SGD, and a central-difference gradient checker.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tzsh/tensor.hpp"

namespace tzsh {

/// Floor applied to probabilities inside logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

/// out = x·W + b, with b a 1×k row broadcast over the rows of x.
Tensor2 linear(const Tensor2& x, const Tensor2& W, const Tensor2& b);

/// Accumulates gradients of `linear` given dL/dout. `dx` may be null when the
/// input gradient is not needed.
void linear_backward(const Tensor2& x, const Tensor2& W, const Tensor2& dout, Tensor2* dx,
                     Tensor2& dW, Tensor2& db);

Tensor2 relu(const Tensor2& x);
/// dL/dx for y = relu(x); the subgradient at exactly 0 is 0.
Tensor2 relu_backward(const Tensor2& pre, const Tensor2& dout);

/// Row-wise softmax with per-row max subtraction.
Tensor2 softmax_rows(const Tensor2& logits);

/// Adds the logit gradient of `-weight * log(max(p[t], floor))` for one row of
/// softmax output `p` into `dlogits`. Terms clamped by the floor are constant.
void accumulate_nll_grad(std::span<const double> p, std::size_t target, double weight,
                         std::span<double> dlogits);

/// Squared Euclidean distance between two equal-length rows.
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Named trainable tensors with matching gradient buffers.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor2 value;
    Tensor2 grad;
  };

  /// Registers a parameter with a zero gradient of the same shape. Names are unique.
  Tensor2& add(std::string name, Tensor2 value);

  bool contains(std::string_view name) const;
  Tensor2& value(std::string_view name);
  const Tensor2& value(std::string_view name) const;
  Tensor2& grad(std::string_view name);
  const Tensor2& grad(std::string_view name) const;

  void zero_grad();

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t num_scalars() const;

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void advance_step() { ++step_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  const Entry& find(std::string_view name) const;
  Entry& find(std::string_view name);

  std::vector<Entry> entries_;
  std::uint64_t step_ = 0;
};

/// Applies p ← p − lr·grad to every parameter, then zeroes gradients and
/// advances the step counter. Throws TrainingError naming the first parameter
/// with a non-finite gradient; parameters are untouched in that case.
void sgd_step(ParamStore& params, double lr);

/// Xavier-uniform sample with bound √(6/(fan_in+fan_out)).
Tensor2 xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Fully-connected layer whose weights live in a ParamStore under
/// "<prefix>.W" (in×out) and "<prefix>.b" (1×out).
class LinearLayer {
 public:
  LinearLayer() = default;
  explicit LinearLayer(std::string prefix) : prefix_(std::move(prefix)) {}

  void init(ParamStore& params, std::size_t in, std::size_t out, std::mt19937_64& rng) const;

  std::size_t in_dim(const ParamStore& params) const;
  std::size_t out_dim(const ParamStore& params) const;

  Tensor2 forward(const ParamStore& params, const Tensor2& x) const;
  /// Accumulates weight gradients and returns dL/dx.
  Tensor2 backward(ParamStore& params, const Tensor2& x, const Tensor2& dout) const;

  std::string weight_name() const { return prefix_ + ".W"; }
  std::string bias_name() const { return prefix_ + ".b"; }

 private:
  std::string prefix_;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Loss callback for grad_check: evaluates the loss at the current parameter
/// values and writes analytic gradients into the store's gradient buffers.
using LossFn = std::function<double(ParamStore&)>;

/// Compares analytic gradients against central differences
/// (L(p+eps) − L(p−eps)) / 2eps for every scalar of every parameter.
/// Relative error is |a − n| / max(|a|, |n|, denom_floor).
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double eps, double tol,
                           double denom_floor = 1e-6);

// Checkpoint layout (little-endian): "TZSH", u32 version, u64 step, u32 count,
// then per parameter: u32 name length, name bytes, u32 rows, u32 cols, f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);
std::vector<char> serialize_params(const ParamStore& params);
ParamStore deserialize_params(std::span<const char> bytes, const std::string& source = "<memory>");

}  // namespace tzsh
