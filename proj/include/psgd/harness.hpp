#pragma once

#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "psgd/analysis.hpp"

namespace psgd {

enum class ExperimentKind { escape, equivalence, convergence, constants, noise_sweep };

std::string kind_name(ExperimentKind kind);
ExperimentKind kind_from_name(const std::string& name);

// Default settings for every experiment kind; the keys double as the schema,
// so unknown keys in a file or on the command line are rejected by name.
nlohmann::json default_config(ExperimentKind kind);

// Flat key/value configuration with file < flag precedence and a consumed-key
// log (the manifest-completeness tests diff it against the manifest).
class ExperimentConfig {
 public:
  ExperimentConfig(ExperimentKind kind, const nlohmann::json& file_values,
                   const nlohmann::json& overrides);

  ExperimentKind kind() const { return kind_; }
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const nlohmann::json& resolved() const { return resolved_; }
  const std::set<std::string>& consumed_keys() const { return consumed_; }

 private:
  const nlohmann::json& fetch(const std::string& key) const;
  ExperimentKind kind_;
  nlohmann::json resolved_;
  mutable std::set<std::string> consumed_;
};

// Loads JSON from `path` (empty path or empty file = all defaults) and applies
// flag overrides on top. Validation failures throw ConfigError.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
ExperimentConfig load_config(ExperimentKind kind, const std::string& path,
                             const nlohmann::json& overrides);

struct Table {
  std::string name;    // file stem, "<name>.csv"
  std::string header;  // comma-separated column names
  std::vector<std::string> rows;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::escape;
  nlohmann::json manifest;  // resolved config + seed + verdicts + metrics
  std::map<std::string, bool> verdicts;
  std::vector<Table> tables;

  bool all_passed() const {
    for (const auto& [k, v] : verdicts)
      if (!v) return false;
    return true;
  }
};

ExperimentReport run_experiment(const ExperimentConfig& config);

// Writes manifest.json plus one CSV per table into dir (created if missing).
// Output is byte-deterministic in the manifest contents.
void write_report(const ExperimentReport& report, const std::string& dir);

// Formatting helpers shared by report writers (shortest round-trip decimal).
std::string format_double(double v);

}  // namespace psgd
