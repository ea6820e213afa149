#pragma once

// Flat "section.key" -> value settings. Every key has a default, so the key
// set is closed: files and overrides naming an unknown key are rejected.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bnnrobust::harness {

enum class Experiment { train, attack, grad_scan, halfmoons_sweep, attack_eval, tradeoff_grid };

std::string to_string(Experiment e);
Experiment parse_experiment(std::string_view name);

class Settings {
 public:
  /// Defaults for one experiment at desk or full scale.
  static Settings defaults(Experiment experiment, bool full_scale);

  /// Reads an INI-style file ([section] headers, key = value, '#' or ';' comments).
  void merge_file(const std::filesystem::path& path);
  /// Applies "section.key=value".
  void assign(std::string_view assignment);
  void set(const std::string& key, std::string value);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& raw(const std::string& key) const;
  std::string get_string(const std::string& key) const { return raw(key); }
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<long long> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  nlohmann::json to_json() const;
  /// FNV-1a of the canonical key=value listing.
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Splits on commas and trims blanks; an empty string gives an empty list.
std::vector<std::string> split_list(std::string_view text);

}  // namespace bnnrobust::harness
