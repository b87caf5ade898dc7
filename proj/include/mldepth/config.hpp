#pragma once

#include <map>
#include <string>
#include <vector>

namespace mldepth {

// Flat key = value configuration with [section] headers; keys are addressed
// as "section.key". Values win in the order: file < environment < explicit
// overrides. Unknown keys are kept so the effective config can be echoed.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  // "section.key=value" (as passed to --set).
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  // MLDEPTH_SECTION_KEY=value environment variables override file values.
  void apply_environment(const std::string& prefix = "MLDEPTH_");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;

  // Deterministic serialization, grouped by section.
  std::string serialize() const;
  void write_file(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mldepth
