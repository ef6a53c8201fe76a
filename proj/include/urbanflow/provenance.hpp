#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace urbanflow {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Flat key=value configuration. Keys carry a section prefix
/// ("stabilize.ssim_threshold"); '#' starts a comment.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Applies "key=value" overrides on top of the current values.
  void merge(const Config& other);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Sorted "key=value" lines.
  std::string dump() const;
  std::uint64_t hash() const { return fnv1a(dump()); }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string hex64(std::uint64_t v);

/// Single provenance line: "urbanflow stage=<stage> config_hash=<hex> seed=<n>".
std::string provenance_line(std::string_view stage, std::uint64_t config_hash, std::uint64_t seed);

/// Returns the provenance line of a file, if its first line carries one.
std::optional<std::string> read_provenance(const std::filesystem::path& path);

}  // namespace urbanflow
