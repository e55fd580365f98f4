#include "deepma/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "deepma/errors.hpp"

namespace deepma {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

}  // namespace

std::optional<double> parse_double(const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<long> parse_long(const std::string& text) {
  const std::string t = trim(text);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

Config Config::parse(const std::string& text, const std::set<std::string>& allowed, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::stringstream in(text);
  std::string raw, section;
  int line = 0;
  auto error = [&](const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') error("unterminated section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_name(section)) error("invalid section name '" + section + "'");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) error("expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_name(key)) error("invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (!allowed.count(full)) error("unknown key '" + full + "'");
    if (cfg.entries_.count(full)) {
      error("duplicate key '" + full + "' (first set on line " + std::to_string(cfg.entries_[full].line) + ")");
    }
    cfg.entries_[full] = {trim(s.substr(eq + 1)), line};
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path, const std::set<std::string>& allowed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), allowed, path.string());
}

const Config::Entry* Config::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    defaulted_.push_back(key);
    return nullptr;
  }
  return &it->second;
}

void Config::fail(const std::string& key, const std::string& what) const {
  const auto it = entries_.find(key);
  const std::string where = it != entries_.end() && it->second.line > 0
                                ? origin_ + ":" + std::to_string(it->second.line) + ": "
                                : origin_ + ": ";
  throw ConfigError(where + key + ": " + what);
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

std::string Config::required(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end() || it->second.value.empty()) {
    throw ConfigError(origin_ + ": missing required key '" + key + "'");
  }
  return it->second.value;
}

long Config::integer(const std::string& key, long fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const auto v = parse_long(e->value);
  if (!v) fail(key, "expected an integer, got '" + e->value + "'");
  return *v;
}

std::uint64_t Config::u64(const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  const auto& t = e->value;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    fail(key, "expected an unsigned 64-bit integer, got '" + t + "'");
  }
  return v;
}

double Config::real(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const auto v = parse_double(e->value);
  if (!v) fail(key, "expected a number, got '" + e->value + "'");
  return *v;
}

bool Config::boolean(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "on" || e->value == "1") return true;
  if (e->value == "false" || e->value == "off" || e->value == "0") return false;
  fail(key, "expected true or false, got '" + e->value + "'");
}

std::vector<double> Config::reals(const std::string& key, const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(e->value)) {
    const auto v = parse_double(item);
    if (!v) fail(key, "expected a comma-separated list of numbers, got '" + e->value + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<long> Config::integers(const std::string& key, const std::vector<long>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<long> out;
  for (const auto& item : split_list(e->value)) {
    const auto v = parse_long(item);
    if (!v) fail(key, "expected a comma-separated list of integers, got '" + e->value + "'");
    out.push_back(*v);
  }
  return out;
}

std::optional<double> Config::optional_real(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return real(key, 0.0);
}

}  // namespace deepma
