#pragma once

#include <map>
#include <string>

#include "ipgp/metrics.hpp"
#include "ipgp/model.hpp"
#include "ipgp/simulate.hpp"

namespace ipgp {

inline constexpr const char* kVersion = "0.1.0";

/// Flat key=value configuration with dotted sections. Files are either plain
/// `key=value` text ('#' comments) or a previously emitted manifest.json,
/// whose resolved config block is loaded back verbatim.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig from_file(const std::string& path);

  bool has(const std::string& key) const { return values.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_seed() const;
};

TrainConfig train_config_from(const KvConfig& config);
SimulationConfig simulation_config_from(const KvConfig& config);

void write_manifest(const std::string& out_dir, const KvConfig& config);

void save_model_state(const FittedModel& model, const std::string& path);
FittedModel load_model_state(const std::string& path);

/// Maps a dataset onto a fitted model's id tables and evaluates predictive
/// accuracy and log likelihood. Unknown unit or item ids are data errors.
MetricReport evaluate_model(const FittedModel& model, const ResponseDataset& data,
                            Mat* probs_out = nullptr, std::vector<QueryPoint>* queries_out = nullptr);

// Subcommand entry points; each resolves its configuration, writes a
// manifest plus artifacts into out.dir and throws on failure.
void cmd_simulate(const KvConfig& config);
void cmd_fit(const KvConfig& config);
void cmd_predict(const KvConfig& config);
void cmd_compare(const KvConfig& config);
void cmd_cluster(const KvConfig& config);
int cmd_reproduce(const KvConfig& config);  // nonzero when an ordering check fails

/// Dispatch with the documented exit-code mapping (0 ok, 2 config, 3 data,
/// 4 numerical).
int run_pipeline(const std::string& subcommand, const KvConfig& config);

}  // namespace ipgp
