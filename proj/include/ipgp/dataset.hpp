#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipgp/common.hpp"

namespace ipgp {

struct RawRecord {
  std::string unit;
  std::string item;
  double time = 0.0;
  int response = 0;
};

/// Sparse long-format ordinal observations. Unit and item id tables are
/// sorted lexicographically; observations reference them by index. Splitting
/// helpers keep the id tables fixed so indices stay aligned across folds.
struct ResponseDataset {
  std::vector<std::string> unit_ids;
  std::vector<std::string> item_ids;

  std::vector<int> unit;      // per observation
  std::vector<int> item;      // per observation
  std::vector<double> time;   // per observation
  std::vector<int> response;  // per observation, 1..num_levels
  int num_levels = 0;

  // optional item -> trait grouping
  std::vector<std::string> trait_names;
  std::vector<int> item_trait;  // size items() when traits attached

  int size() const { return static_cast<int>(response.size()); }
  int units() const { return static_cast<int>(unit_ids.size()); }
  int items() const { return static_cast<int>(item_ids.size()); }
  bool has_traits() const { return !item_trait.empty(); }

  double time_min() const;
  double time_max() const;

  /// Same id tables, observations restricted to `keep` (indices, in order).
  ResponseDataset subset(const std::vector<int>& keep) const;

  /// Observation indices grouped by unit.
  std::vector<std::vector<int>> rows_by_unit() const;
};

/// Builds a dataset from raw records. Verifies responses are in range and
/// that no (unit, item, time) triple repeats. When `levels_override` is zero
/// the level count is inferred as the maximum observed response.
ResponseDataset build_dataset(const std::vector<RawRecord>& records, int levels_override = 0);

/// Reads the canonical long-format CSV with header
/// `unit_id,item_id,time,response`.
ResponseDataset ingest_csv(const std::string& path, int levels_override = 0);

void write_csv(const ResponseDataset& dataset, const std::string& path);

/// `item_id,trait` CSV.
std::map<std::string, std::string> load_trait_map(const std::string& path);

/// Attaches trait labels; every item in the dataset must be mapped.
void attach_traits(ResponseDataset& dataset, const std::map<std::string, std::string>& traits);

/// Shortest round-trip decimal representation (used by every CSV writer so
/// artifacts are byte-stable).
std::string format_double(double value);

}  // namespace ipgp
