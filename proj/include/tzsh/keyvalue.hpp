#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace tzsh {

/// Flat `key=value` text file. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& source);
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  /// Throws ParseError when a key is not in `allowed`.
  void check_keys(const std::set<std::string>& allowed) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::size_t get_count(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list of doubles.
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::size_t> get_counts(const std::string& key,
                                      std::vector<std::size_t> fallback) const;

 private:
  struct Value {
    std::string text;
    std::size_t line = 0;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string source_;
  std::map<std::string, Value> values_;
};

}  // namespace tzsh
