#pragma once

// Packed binary codes, Hamming search, and retrieval metrics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tzsh/tensor.hpp"

namespace tzsh {

inline constexpr std::size_t kMaxCodeBits = 4096;
inline constexpr int kUnknownLabel = -1;

/// Immutable set of packed codes with one class label per item
/// (kUnknownLabel for unlabeled items). Bit b of item i is 1 iff h[i,b] >= 0.
class CodeIndex {
 public:
  CodeIndex() = default;
  CodeIndex(std::size_t bits, std::vector<std::uint64_t> words, std::vector<int> labels);

  std::size_t bits() const { return bits_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t words_per_code() const { return words_per_code_; }
  const std::vector<int>& labels() const { return labels_; }

  std::span<const std::uint64_t> code(std::size_t i) const {
    return {words_.data() + i * words_per_code_, words_per_code_};
  }
  bool bit(std::size_t i, std::size_t b) const {
    return (code(i)[b / 64] >> (b % 64)) & 1u;
  }
  std::string bitstring(std::size_t i) const;

  static CodeIndex load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t bits_ = 0;
  std::size_t words_per_code_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<int> labels_;
};

CodeIndex binarize(const Tensor2& h, std::vector<int> labels);
/// All items labeled kUnknownLabel.
CodeIndex binarize(const Tensor2& h);

/// Popcount of XOR. Code lengths (in words) must agree.
std::size_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

struct MetricResult {
  double value = 0.0;
  std::size_t evaluated_queries = 0;
  std::size_t skipped_queries = 0;  // no relevant item in the database
};

/// Mean over queries of average precision along the full Hamming ranking
/// (ascending distance, ties by database index). Queries without any
/// same-label database item are skipped with a warning.
MetricResult mean_average_precision(const CodeIndex& queries, const CodeIndex& db);

/// Mean over queries of the same-label fraction among database items within
/// Hamming distance `radius`. An empty ball scores 0.
MetricResult precision_at_radius(const CodeIndex& queries, const CodeIndex& db,
                                 std::size_t radius = 2);

/// One JSON line {"metric": name, "bits": bits, "value": value}.
std::string metric_json_line(const std::string& metric, std::size_t bits, double value);

}  // namespace tzsh
