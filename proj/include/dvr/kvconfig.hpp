#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dvr {

/// Plain-text `key = value` settings. Blank lines and lines starting with '#'
/// are ignored; later duplicates override earlier ones.
class KvConfig {
 public:
  KvConfig() = default;
  static KvConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list with surrounding spaces trimmed.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Keys never read through a getter (typos in config files).
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::string origin_;
  mutable std::set<std::string> used_;
};

}  // namespace dvr
