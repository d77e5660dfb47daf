#pragma once

// Flat `key = value` experiment configuration. Every key has a registered
// default; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace promptrec {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

class Config {
 public:
  // All keys at their defaults.
  Config();

  // ConfigError naming the key when it is not registered.
  void set(const std::string& key, const std::string& value);
  // `key=value`
  void set_assignment(const std::string& assignment);
  // Lines of `key = value`; `#` starts a comment, blank lines are skipped.
  void parse(std::istream& in, const std::string& origin = "<config>");
  void load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  // Sorted `key = value` lines for every key.
  std::string dump() const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace promptrec
