#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace multisoc {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat key=value configuration ('#' starts a comment). Reads are tracked so
// callers can warn about keys that were accepted but never consumed.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_text(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;

  // required variants: throw ConfigError naming the key
  std::string require_str(const std::string& key) const;
  double require_num(const std::string& key) const;

  // keys present in the source that no getter ever touched
  std::vector<std::string> unused_keys() const;

  // sorted key=value dump of everything present, for persisting the resolved
  // configuration next to run outputs
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

}  // namespace multisoc
