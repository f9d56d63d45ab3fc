#include "tzsh/diffcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <type_traits>
#include <utility>

#include "tzsh/errors.hpp"

namespace tzsh {

Tensor2 linear(const Tensor2& x, const Tensor2& W, const Tensor2& b) {
  if (x.cols() != W.rows() || b.rows() != 1 || b.cols() != W.cols()) {
    throw DimensionError("linear: x" + x.shape_string() + " W" + W.shape_string() + " b" +
                         b.shape_string());
  }
  Tensor2 out = matmul(x, W);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += b(0, j);
  }
  return out;
}

void linear_backward(const Tensor2& x, const Tensor2& W, const Tensor2& dout, Tensor2* dx,
                     Tensor2& dW, Tensor2& db) {
  if (dout.rows() != x.rows() || dout.cols() != W.cols() || !dW.same_shape(W) ||
      db.rows() != 1 || db.cols() != W.cols()) {
    throw DimensionError("linear_backward: x" + x.shape_string() + " W" + W.shape_string() +
                         " dout" + dout.shape_string());
  }
  dW += matmul_tn(x, dout);
  for (std::size_t i = 0; i < dout.rows(); ++i) {
    auto r = dout.row(i);
    for (std::size_t j = 0; j < dout.cols(); ++j) db(0, j) += r[j];
  }
  if (dx != nullptr) {
    if (!dx->same_shape(x)) throw DimensionError("linear_backward: dx shape");
    *dx += matmul_nt(dout, W);
  }
}

Tensor2 relu(const Tensor2& x) {
  Tensor2 out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor2 relu_backward(const Tensor2& pre, const Tensor2& dout) {
  if (!pre.same_shape(dout)) throw DimensionError("relu_backward: shape mismatch");
  Tensor2 dx(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    dx.data()[i] = pre.data()[i] > 0.0 ? dout.data()[i] : 0.0;
  }
  return dx;
}

Tensor2 softmax_rows(const Tensor2& logits) {
  Tensor2 out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

void accumulate_nll_grad(std::span<const double> p, std::size_t target, double weight,
                         std::span<double> dlogits) {
  if (weight == 0.0 || p[target] <= kProbabilityFloor) return;
  // d(-log p_t)/dz_j = p_j - [j == t]
  for (std::size_t j = 0; j < p.size(); ++j) dlogits[j] += weight * p[j];
  dlogits[target] -= weight;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// ---------------------------------------------------------------------------
// ParamStore

Tensor2& ParamStore::add(std::string name, Tensor2 value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor2 grad(value.rows(), value.cols());
  entries_.push_back({std::move(name), std::move(value), std::move(grad)});
  return entries_.back().value;
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

const ParamStore::Entry& ParamStore::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw ConfigError("unknown parameter: " + std::string(name));
}

ParamStore::Entry& ParamStore::find(std::string_view name) {
  return const_cast<Entry&>(std::as_const(*this).find(name));
}

Tensor2& ParamStore::value(std::string_view name) { return find(name).value; }
const Tensor2& ParamStore::value(std::string_view name) const { return find(name).value; }
Tensor2& ParamStore::grad(std::string_view name) { return find(name).grad; }
const Tensor2& ParamStore::grad(std::string_view name) const { return find(name).grad; }

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.step_ != b.step_ || a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name ||
        a.entries_[i].value != b.entries_[i].value) {
      return false;
    }
  }
  return true;
}

void sgd_step(ParamStore& params, double lr) {
  for (const auto& e : params.entries()) {
    if (!e.grad.all_finite()) throw TrainingError("non-finite gradient in parameter " + e.name);
  }
  for (auto& e : params.entries()) {
    auto& v = e.value.data();
    const auto& g = e.grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
  params.zero_grad();
  params.advance_step();
}

Tensor2 xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2 w(fan_in, fan_out);
  for (double& v : w.data()) v = dist(rng);
  return w;
}

// ---------------------------------------------------------------------------
// LinearLayer

void LinearLayer::init(ParamStore& params, std::size_t in, std::size_t out,
                       std::mt19937_64& rng) const {
  params.add(weight_name(), xavier_uniform(in, out, rng));
  params.add(bias_name(), Tensor2(1, out));
}

std::size_t LinearLayer::in_dim(const ParamStore& params) const {
  return params.value(weight_name()).rows();
}

std::size_t LinearLayer::out_dim(const ParamStore& params) const {
  return params.value(weight_name()).cols();
}

Tensor2 LinearLayer::forward(const ParamStore& params, const Tensor2& x) const {
  return linear(x, params.value(weight_name()), params.value(bias_name()));
}

Tensor2 LinearLayer::backward(ParamStore& params, const Tensor2& x, const Tensor2& dout) const {
  Tensor2 dx(x.rows(), x.cols());
  linear_backward(x, params.value(weight_name()), dout, &dx, params.grad(weight_name()),
                  params.grad(bias_name()));
  return dx;
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double eps, double tol,
                           double denom_floor) {
  params.zero_grad();
  loss_fn(params);
  std::vector<Tensor2> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad);

  GradCheckReport report;
  for (std::size_t p = 0; p < params.entries().size(); ++p) {
    GradCheckEntry entry;
    entry.name = params.entries()[p].name;
    const std::size_t n = params.entries()[p].value.size();
    for (std::size_t i = 0; i < n; ++i) {
      double& v = params.entries()[p].value.data()[i];
      const double saved = v;
      v = saved + eps;
      const double up = loss_fn(params);
      v = saved - eps;
      const double down = loss_fn(params);
      v = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].data()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), denom_floor});
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  // Leave the store holding the analytic gradients at the unperturbed point.
  for (std::size_t p = 0; p < params.entries().size(); ++p) {
    params.entries()[p].grad = analytic[p];
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'T', 'Z', 'S', 'H'};

template <typename T>
void put_le(std::vector<char>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  Reader(std::span<const char> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  template <typename T>
  T get_le() {
    using U = std::make_unsigned_t<T>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError(source_ + ": truncated checkpoint");
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
  const std::string& source_;
};

}  // namespace

std::vector<char> serialize_params(const ParamStore& params) {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, params.step());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& e : params.entries()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols()));
    for (double v : e.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamStore deserialize_params(std::span<const char> bytes, const std::string& source) {
  Reader in(bytes, source);
  if (in.get_string(4) != std::string(kMagic, 4)) throw DataError(source + ": bad checkpoint magic");
  const auto version = in.get_le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore params;
  params.set_step(in.get_le<std::uint64_t>());
  const auto count = in.get_le<std::uint32_t>();
  for (std::uint32_t p = 0; p < count; ++p) {
    const auto name_len = in.get_le<std::uint32_t>();
    std::string name = in.get_string(name_len);
    const auto rows = in.get_le<std::uint32_t>();
    const auto cols = in.get_le<std::uint32_t>();
    Tensor2 value(rows, cols);
    for (double& v : value.data()) v = std::bit_cast<double>(in.get_le<std::uint64_t>());
    params.add(std::move(name), std::move(value));
  }
  if (!in.at_end()) throw DataError(source + ": trailing bytes in checkpoint");
  return params;
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  const auto bytes = serialize_params(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes, path.string());
}

}  // namespace tzsh
