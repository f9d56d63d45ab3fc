#include "tzsh/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tzsh/errors.hpp"

namespace tzsh {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& source) {
  KeyValueFile f;
  f.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    if (f.values_.count(key)) throw ParseError(source, lineno, "duplicate key '" + key + "'");
    f.values_[key] = {trim(t.substr(eq + 1)), lineno};
  }
  return f;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueFile::check_keys(const std::set<std::string>& allowed) const {
  for (const auto& [key, v] : values_) {
    if (!allowed.count(key)) throw ParseError(source_, v.line, "unknown key '" + key + "'");
  }
}

void KeyValueFile::fail(const std::string& key, const std::string& what) const {
  throw ParseError(source_, values_.at(key).line, key + ": " + what);
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second.text;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  double v = 0.0;
  if (!parse_number(it->second.text, v)) fail(key, "expected a number");
  return v;
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  if (!parse_number(it->second.text, v)) fail(key, "expected an integer");
  return v;
}

std::size_t KeyValueFile::get_count(const std::string& key, std::size_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t v = 0;
  if (!parse_number(it->second.text, v)) fail(key, "expected a non-negative integer");
  return v;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second.text;
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  fail(key, "expected true/false");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key,
                                              std::vector<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& tok : split_commas(it->second.text)) {
    double v = 0.0;
    if (!parse_number(tok, v)) fail(key, "expected comma-separated numbers");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> KeyValueFile::get_counts(const std::string& key,
                                                  std::vector<std::size_t> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  for (const auto& tok : split_commas(it->second.text)) {
    std::size_t v = 0;
    if (!parse_number(tok, v)) fail(key, "expected comma-separated counts");
    out.push_back(v);
  }
  return out;
}

}  // namespace tzsh
