#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace deepma {

// Line-oriented settings: `[section]` headers, `key = value` pairs and `#`
// comments. Keys are addressed as "section.key"; keys before any header
// live in the unnamed top section and are addressed by their bare name.
class Config {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  // Throws ConfigError naming the line for malformed input, duplicate keys or
  // keys outside `allowed`.
  static Config parse(const std::string& text, const std::set<std::string>& allowed,
                      const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path, const std::set<std::string>& allowed);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  // Typed accessors; bad values throw ConfigError with the line number.
  std::string str(const std::string& key, const std::string& fallback) const;
  std::string required(const std::string& key) const;
  long integer(const std::string& key, long fallback) const;
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
  double real(const std::string& key, double fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<long> integers(const std::string& key, const std::vector<long>& fallback) const;
  std::optional<double> optional_real(const std::string& key) const;

  // Keys that were read with a fallback because the file did not set them.
  const std::vector<std::string>& defaulted() const { return defaulted_; }

 private:
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::map<std::string, Entry> entries_;
  std::string origin_;
  mutable std::vector<std::string> defaulted_;
};

// Locale-independent number parsing of a whole token.
std::optional<double> parse_double(const std::string& text);
std::optional<long> parse_long(const std::string& text);

}  // namespace deepma
