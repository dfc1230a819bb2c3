#include "ipgp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace ipgp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') {
    fields.back().pop_back();
  }
  return fields;
}

double parse_double_field(const std::string& field, const std::string& path, int line_no) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError(path + ":" + std::to_string(line_no) + ": malformed time field '" + field +
                    "'");
  }
  return value;
}

int parse_int_field(const std::string& field, const std::string& path, int line_no) {
  int value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(path + ":" + std::to_string(line_no) + ": malformed response field '" +
                    field + "'");
  }
  return value;
}

std::uint64_t triple_key(int unit, int item, double time) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(time));
  std::memcpy(&bits, &time, sizeof(bits));
  std::uint64_t h = 1469598103934665603ULL;
  const auto fold = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  fold(static_cast<std::uint64_t>(unit));
  fold(static_cast<std::uint64_t>(item));
  fold(bits);
  return h;
}

}  // namespace

double ResponseDataset::time_min() const {
  if (time.empty()) throw DataError("dataset is empty: no time range");
  return *std::min_element(time.begin(), time.end());
}

double ResponseDataset::time_max() const {
  if (time.empty()) throw DataError("dataset is empty: no time range");
  return *std::max_element(time.begin(), time.end());
}

ResponseDataset ResponseDataset::subset(const std::vector<int>& keep) const {
  ResponseDataset out;
  out.unit_ids = unit_ids;
  out.item_ids = item_ids;
  out.num_levels = num_levels;
  out.trait_names = trait_names;
  out.item_trait = item_trait;
  out.unit.reserve(keep.size());
  out.item.reserve(keep.size());
  out.time.reserve(keep.size());
  out.response.reserve(keep.size());
  for (const int idx : keep) {
    out.unit.push_back(unit[idx]);
    out.item.push_back(item[idx]);
    out.time.push_back(time[idx]);
    out.response.push_back(response[idx]);
  }
  return out;
}

std::vector<std::vector<int>> ResponseDataset::rows_by_unit() const {
  std::vector<std::vector<int>> rows(unit_ids.size());
  for (int i = 0; i < size(); ++i) rows[unit[i]].push_back(i);
  return rows;
}

ResponseDataset build_dataset(const std::vector<RawRecord>& records, int levels_override) {
  ResponseDataset out;

  std::vector<std::string> units, items;
  for (const auto& r : records) {
    units.push_back(r.unit);
    items.push_back(r.item);
  }
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  out.unit_ids = std::move(units);
  out.item_ids = std::move(items);

  std::unordered_map<std::string, int> unit_index, item_index;
  for (int i = 0; i < out.units(); ++i) unit_index[out.unit_ids[i]] = i;
  for (int i = 0; i < out.items(); ++i) item_index[out.item_ids[i]] = i;

  std::unordered_set<std::uint64_t> seen;
  seen.reserve(records.size() * 2);
  int max_response = 0;
  for (const auto& r : records) {
    const int u = unit_index.at(r.unit);
    const int j = item_index.at(r.item);
    if (!std::isfinite(r.time)) {
      throw DataError("observation (" + r.unit + ", " + r.item + ") has a non-finite time");
    }
    if (r.response < 1) {
      throw DataError("observation (" + r.unit + ", " + r.item + ") has response " +
                      std::to_string(r.response) + " below 1");
    }
    if (levels_override > 0 && r.response > levels_override) {
      throw DataError("observation (" + r.unit + ", " + r.item + ") has response " +
                      std::to_string(r.response) + " above the configured " +
                      std::to_string(levels_override) + " levels");
    }
    if (!seen.insert(triple_key(u, j, r.time)).second) {
      throw DataError("duplicate (unit, item, time) triple: (" + r.unit + ", " + r.item + ", " +
                      format_double(r.time) + ")");
    }
    out.unit.push_back(u);
    out.item.push_back(j);
    out.time.push_back(r.time);
    out.response.push_back(r.response);
    max_response = std::max(max_response, r.response);
  }
  out.num_levels = levels_override > 0 ? levels_override : max_response;
  return out;
}

ResponseDataset ingest_csv(const std::string& path, int levels_override) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file (missing header)");
  {
    auto header = split_line(line);
    const std::vector<std::string> expected{"unit_id", "item_id", "time", "response"};
    if (std::vector<std::string>(header.begin(), header.end()) != expected) {
      throw DataError(path + ":1: expected header 'unit_id,item_id,time,response'");
    }
  }
  std::vector<RawRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (fields.size() != 4 || fields[0].empty() || fields[1].empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    RawRecord r;
    r.unit = fields[0];
    r.item = fields[1];
    r.time = parse_double_field(fields[2], path, line_no);
    r.response = parse_int_field(fields[3], path, line_no);
    records.push_back(std::move(r));
  }
  return build_dataset(records, levels_override);
}

void write_csv(const ResponseDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write data file '" + path + "'");
  out << "unit_id,item_id,time,response\n";
  for (int i = 0; i < dataset.size(); ++i) {
    out << dataset.unit_ids[dataset.unit[i]] << ',' << dataset.item_ids[dataset.item[i]] << ','
        << format_double(dataset.time[i]) << ',' << dataset.response[i] << '\n';
  }
}

std::map<std::string, std::string> load_trait_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trait map '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (line_no == 1 && fields.size() == 2 && fields[0] == "item_id") continue;
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed trait row");
    }
    out[fields[0]] = fields[1];
  }
  return out;
}

void attach_traits(ResponseDataset& dataset, const std::map<std::string, std::string>& traits) {
  std::vector<std::string> names;
  for (const auto& item : dataset.item_ids) {
    const auto it = traits.find(item);
    if (it == traits.end()) throw DataError("item '" + item + "' missing from trait map");
    names.push_back(it->second);
  }
  std::vector<std::string> unique_names = names;
  std::sort(unique_names.begin(), unique_names.end());
  unique_names.erase(std::unique(unique_names.begin(), unique_names.end()), unique_names.end());
  dataset.trait_names = unique_names;
  dataset.item_trait.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    dataset.item_trait[i] = static_cast<int>(
        std::lower_bound(unique_names.begin(), unique_names.end(), names[i]) -
        unique_names.begin());
  }
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw NumericalError("failed to format double");
  return std::string(buf, ptr);
}

}  // namespace ipgp
