#include "tzsh/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "tzsh/errors.hpp"

namespace tzsh {

namespace {

std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }

void check_compatible(const CodeIndex& queries, const CodeIndex& db) {
  if (db.size() == 0) throw DataError("retrieval: empty database");
  if (queries.bits() != db.bits()) {
    throw DimensionError("retrieval: query codes have " + std::to_string(queries.bits()) +
                         " bits, database " + std::to_string(db.bits()));
  }
  for (int l : queries.labels()) {
    if (l == kUnknownLabel) throw DataError("retrieval: query without label");
  }
  for (int l : db.labels()) {
    if (l == kUnknownLabel) throw DataError("retrieval: database item without label");
  }
}

}  // namespace

CodeIndex::CodeIndex(std::size_t bits, std::vector<std::uint64_t> words, std::vector<int> labels)
    : bits_(bits), words_per_code_(words_for(bits)), words_(std::move(words)),
      labels_(std::move(labels)) {
  if (bits_ == 0 || bits_ > kMaxCodeBits) {
    throw ConfigError("code length must be in [1, " + std::to_string(kMaxCodeBits) + "]");
  }
  if (words_.size() != labels_.size() * words_per_code_) {
    throw DimensionError("CodeIndex: word count does not match item count");
  }
}

std::string CodeIndex::bitstring(std::size_t i) const {
  std::string s(bits_, '0');
  for (std::size_t b = 0; b < bits_; ++b) {
    if (bit(i, b)) s[b] = '1';
  }
  return s;
}

CodeIndex binarize(const Tensor2& h, std::vector<int> labels) {
  if (labels.size() != h.rows()) throw DimensionError("binarize: label count mismatch");
  const std::size_t wpc = words_for(h.cols());
  std::vector<std::uint64_t> words(h.rows() * wpc, 0);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t b = 0; b < h.cols(); ++b) {
      if (h(i, b) >= 0.0) words[i * wpc + b / 64] |= std::uint64_t{1} << (b % 64);
    }
  }
  return {h.cols(), std::move(words), std::move(labels)};
}

CodeIndex binarize(const Tensor2& h) {
  return binarize(h, std::vector<int>(h.rows(), kUnknownLabel));
}

std::size_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw DimensionError("hamming: code length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<std::size_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

MetricResult mean_average_precision(const CodeIndex& queries, const CodeIndex& db) {
  check_compatible(queries, db);
  const std::size_t n = db.size();
  MetricResult r;
  double total = 0.0;
  std::vector<std::size_t> dist(n);
  std::vector<std::size_t> order(n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const int label = queries.labels()[q];
    for (std::size_t i = 0; i < n; ++i) dist[i] = hamming(queries.code(q), db.code(i));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    std::size_t hits = 0;
    double sum_prec = 0.0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (db.labels()[order[rank]] == label) {
        ++hits;
        sum_prec += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    if (hits == 0) {
      ++r.skipped_queries;
      continue;
    }
    total += sum_prec / static_cast<double>(hits);
    ++r.evaluated_queries;
  }
  if (r.skipped_queries > 0) {
    std::cerr << "warning: MAP skipped " << r.skipped_queries
              << " query(ies) with no relevant database item\n";
  }
  r.value = r.evaluated_queries ? total / static_cast<double>(r.evaluated_queries) : 0.0;
  return r;
}

MetricResult precision_at_radius(const CodeIndex& queries, const CodeIndex& db,
                                 std::size_t radius) {
  check_compatible(queries, db);
  MetricResult r;
  double total = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::size_t retrieved = 0;
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < db.size(); ++i) {
      if (hamming(queries.code(q), db.code(i)) <= radius) {
        ++retrieved;
        relevant += db.labels()[i] == queries.labels()[q];
      }
    }
    if (retrieved > 0) total += static_cast<double>(relevant) / static_cast<double>(retrieved);
    ++r.evaluated_queries;
  }
  r.value = r.evaluated_queries ? total / static_cast<double>(r.evaluated_queries) : 0.0;
  return r;
}

std::string metric_json_line(const std::string& metric, std::size_t bits, double value) {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["bits"] = bits;
  j["value"] = value;
  return j.dump();
}

// Codes file: one item per line, "<label> <bitstring>" with '?' for no label.
void CodeIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write codes file " + path.string());
  for (std::size_t i = 0; i < size(); ++i) {
    if (labels_[i] == kUnknownLabel) {
      out << '?';
    } else {
      out << labels_[i];
    }
    out << ' ' << bitstring(i) << '\n';
  }
}

CodeIndex CodeIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open codes file " + path.string());
  std::size_t bits = 0;
  std::vector<std::uint64_t> words;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string label, code, extra;
    if (!(ss >> label >> code) || (ss >> extra)) {
      throw ParseError(path.string(), lineno, "expected <label> <bitstring>");
    }
    if (bits == 0) bits = code.size();
    if (code.size() != bits) throw ParseError(path.string(), lineno, "code length mismatch");
    if (bits > kMaxCodeBits) throw ParseError(path.string(), lineno, "code too long");
    if (label == "?") {
      labels.push_back(kUnknownLabel);
    } else {
      try {
        std::size_t used = 0;
        labels.push_back(std::stoi(label, &used));
        if (used != label.size() || labels.back() < 0) throw std::invalid_argument(label);
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "bad label '" + label + "'");
      }
    }
    const std::size_t base = words.size();
    words.resize(base + words_for(bits), 0);
    for (std::size_t b = 0; b < bits; ++b) {
      if (code[b] == '1') {
        words[base + b / 64] |= std::uint64_t{1} << (b % 64);
      } else if (code[b] != '0') {
        throw ParseError(path.string(), lineno, "bitstring must contain only 0/1");
      }
    }
  }
  if (labels.empty()) throw DataError("codes file " + path.string() + " is empty");
  return {bits, std::move(words), std::move(labels)};
}

}  // namespace tzsh
