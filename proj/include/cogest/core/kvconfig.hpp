#ifndef COGEST_CORE_KVCONFIG_HPP_
#define COGEST_CORE_KVCONFIG_HPP_

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>

namespace cogest {

/// Flat `key = value` file. '#' starts a comment; blank lines are ignored;
/// later keys override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// Entries whose key starts with `prefix`, with the prefix removed.
  std::map<std::string, std::string> with_prefix(const std::string& prefix) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cogest

#endif  // COGEST_CORE_KVCONFIG_HPP_
