#ifndef STSPARSE_CONFIG_HPP
#define STSPARSE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stsparse/attacks.hpp"
#include "stsparse/defenses.hpp"
#include "stsparse/models.hpp"

namespace stsparse {

/// `key = value` lines; `#` starts a comment. Every key must be read by
/// someone, so typos surface as ConfigError through check_all_used().
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "config");
  static KeyValueConfig load(const std::filesystem::path& file);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.contains(key); }

  std::string get(const std::string& key, const std::string& fallback) const;
  /// Keeps string literals from binding to the bool overload.
  std::string get(const std::string& key, const char* fallback) const {
    return get(key, std::string(fallback));
  }
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  std::uint64_t get(const std::string& key, std::uint64_t fallback) const;
  bool get(const std::string& key, bool fallback) const;
  /// Comma-separated list.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  /// Throws ConfigError naming every key nobody asked for.
  void check_all_used() const;

 private:
  struct Entry {
    std::string value;
    std::string origin;
    mutable bool used = false;
  };
  const Entry* find(const std::string& key) const;
  [[noreturn]] void bad(const std::string& key, const std::string& expected) const;

  std::map<std::string, Entry> entries_;
};

/// Everything a single run needs besides the data.
struct RunSettings {
  ModelConfig gcn = ModelConfig::gcn();
  ModelConfig st_sparse = ModelConfig::st_sparse_gcn();
  TrainConfig train;
  DefenseSpec defense;
  AttackSpec attack;
};

/// Reads the model/sparse/train/defense/attack keys, defaulting the rest.
RunSettings settings_from(const KeyValueConfig& cfg);

/// A config file listing every key with its default value.
std::string default_config_text();

}  // namespace stsparse

#endif  // STSPARSE_CONFIG_HPP
