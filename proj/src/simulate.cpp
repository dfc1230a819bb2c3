#include "ipgp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <tuple>

#include "ipgp/rng.hpp"

namespace ipgp {

namespace {

constexpr std::uint64_t kStreamEll = 0;
constexpr std::uint64_t kStreamWPop = 1;
constexpr std::uint64_t kStreamWPopMask = 2;
constexpr std::uint64_t kStreamWInd = 3;
constexpr std::uint64_t kStreamWIndMask = 4;
constexpr std::uint64_t kStreamSplit = 5;
constexpr std::uint64_t kStreamPaths = 10;

std::string padded_id(const std::string& prefix, int index, int count) {
  int width = 2;
  for (int c = count - 1; c >= 100; c /= 10) ++width;
  std::string digits = std::to_string(index);
  while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
  return prefix + digits;
}

// zero a uniformly random `fraction` of the entries, then reverse-code (sign
// flip) a uniformly random `fraction` of the survivors; fraction 0 leaves the
// object untouched
void sparsify_and_flip(std::vector<double*> entries, double fraction, Rng& rng) {
  std::vector<int> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const int zeros = static_cast<int>(std::floor(fraction * static_cast<double>(entries.size())));
  for (int i = 0; i < zeros; ++i) *entries[order[i]] = 0.0;

  std::vector<int> survivors(order.begin() + zeros, order.end());
  rng.shuffle(survivors);
  const int flips =
      static_cast<int>(std::floor(fraction * static_cast<double>(survivors.size())));
  for (int i = 0; i < flips; ++i) *entries[survivors[i]] = -*entries[survivors[i]];
}

Mat normalized_correlation(const Mat& kernel) {
  Vec d = kernel.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * kernel * d.asDiagonal();
}

}  // namespace

void SimulationConfig::validate() const {
  if (num_units < 1 || num_periods < 1 || num_items < 1) {
    throw ConfigError("simulation: unit, period and item counts must be positive");
  }
  if (num_factors < 1) throw ConfigError("simulation: need at least one factor");
  if (num_levels < 2) throw ConfigError("simulation: need at least two ordinal levels");
  if (num_items % num_factors != 0) {
    throw ConfigError("simulation: item count " + std::to_string(num_items) +
                      " must be divisible by factor count " + std::to_string(num_factors));
  }
  if (lengthscale_pool.empty()) throw ConfigError("simulation: empty lengthscale pool");
  for (const double l : lengthscale_pool) {
    if (!(l > 0.0)) throw ConfigError("simulation: lengthscales must be positive");
  }
  if (!(sparsity_fraction >= 0.0 && sparsity_fraction <= 1.0)) {
    throw ConfigError("simulation: sparsity fraction must lie in [0, 1]");
  }
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("simulation: train fraction must lie in [0, 1]");
  }
  if (off_loading_range[0] > off_loading_range[1] || idio_range[0] > idio_range[1]) {
    throw ConfigError("simulation: loading ranges must be ordered");
  }
}

Vec default_emission_cuts(int num_levels) {
  if (num_levels == 5) {
    Vec cuts(4);
    cuts << -2.0, -1.0, 1.0, 2.0;
    return cuts;
  }
  if (num_levels == 2) return Vec::Zero(1);
  return Vec::LinSpaced(num_levels - 1, -2.0, 2.0);
}

double GroundTruth::latent(int unit, int item, int t_index) const {
  const double pop = w_pop.col(item).dot(factor_paths[unit].col(t_index));
  return pop + w_ind(unit, item) * idio_paths[unit][t_index];
}

SimulationResult simulate(const SimulationConfig& config) {
  config.validate();
  const int n = config.num_units;
  const int t_count = config.num_periods;
  const int k = config.num_factors;
  const int j = config.num_items;
  const int block = j / k;

  GroundTruth truth;
  truth.times = Vec::LinSpaced(t_count, 1.0, static_cast<double>(t_count));
  truth.thresholds = make_thresholds(default_emission_cuts(config.num_levels));

  // per-unit length scales from the pool
  {
    Rng rng(derive_seed(config.seed, kStreamEll));
    truth.lengthscales.resize(n);
    for (int u = 0; u < n; ++u) {
      truth.lengthscales[u] =
          config.lengthscale_pool[static_cast<std::size_t>(rng.below(
              static_cast<int>(config.lengthscale_pool.size())))];
    }
  }

  // population loadings: dominant block entries, uniform noise elsewhere
  {
    Rng rng(derive_seed(config.seed, kStreamWPop));
    truth.w_pop.resize(k, j);
    for (int row = 0; row < k; ++row) {
      for (int col = 0; col < j; ++col) {
        const bool dominant = col / block == row;
        truth.w_pop(row, col) =
            dominant ? config.dominant_loading
                     : rng.uniform(config.off_loading_range[0], config.off_loading_range[1]);
      }
    }
    Rng mask_rng(derive_seed(config.seed, kStreamWPopMask));
    std::vector<double*> entries;
    for (int row = 0; row < k; ++row) {
      for (int col = 0; col < j; ++col) entries.push_back(&truth.w_pop(row, col));
    }
    sparsify_and_flip(std::move(entries), config.sparsity_fraction, mask_rng);
  }

  // idiographic loadings, one J-vector per unit, sparsified per unit
  {
    Rng rng(derive_seed(config.seed, kStreamWInd));
    Rng mask_rng(derive_seed(config.seed, kStreamWIndMask));
    truth.w_ind.resize(n, j);
    for (int u = 0; u < n; ++u) {
      for (int col = 0; col < j; ++col) {
        truth.w_ind(u, col) = rng.uniform(config.idio_range[0], config.idio_range[1]);
      }
      std::vector<double*> entries;
      for (int col = 0; col < j; ++col) entries.push_back(&truth.w_ind(u, col));
      sparsify_and_flip(std::move(entries), config.sparsity_fraction, mask_rng);
    }
  }

  // latent GP paths: K factor paths plus one idiographic path per unit
  truth.factor_paths.resize(n);
  truth.idio_paths.resize(n);
  for (int u = 0; u < n; ++u) {
    Rng rng(derive_seed(config.seed, kStreamPaths + static_cast<std::uint64_t>(u)));
    Mat cov = rbf_time_kernel(truth.times, truth.lengthscales[u]);
    cov.diagonal().array() += kJitter;
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("simulate: time kernel factorization failed");
    }
    const Mat chol = llt.matrixL();
    truth.factor_paths[u].resize(k, t_count);
    Vec z(t_count);
    for (int factor = 0; factor <= k; ++factor) {
      for (int s = 0; s < t_count; ++s) z[s] = rng.normal();
      const Vec path = chol * z;
      if (factor < k) {
        truth.factor_paths[u].row(factor) = path.transpose();
      } else {
        truth.idio_paths[u] = path;
      }
    }
  }

  // true per-unit task correlations implied by the loadings
  truth.task_correlation.resize(n);
  for (int u = 0; u < n; ++u) {
    const Mat kernel = truth.w_pop.transpose() * truth.w_pop +
                       truth.w_ind.row(u).transpose() * truth.w_ind.row(u);
    truth.task_correlation[u] = normalized_correlation(kernel);
  }

  // emission: threshold quantization of the latent values
  std::vector<RawRecord> records;
  records.reserve(static_cast<std::size_t>(n) * j * t_count);
  const Vec& cuts = truth.thresholds.cuts;
  for (int u = 0; u < n; ++u) {
    const std::string unit_id = padded_id("u", u, n);
    for (int col = 0; col < j; ++col) {
      const std::string item_id = padded_id("item", col, j);
      for (int s = 0; s < t_count; ++s) {
        const double f = truth.latent(u, col, s);
        int level = 1;
        for (Eigen::Index c = 0; c < cuts.size(); ++c) {
          if (f > cuts[c]) ++level;
        }
        records.push_back(RawRecord{unit_id, item_id, truth.times[s], level});
      }
    }
  }
  ResponseDataset full = build_dataset(records, config.num_levels);

  // uniformly random train/test split
  std::vector<int> order(full.size());
  for (int i = 0; i < full.size(); ++i) order[i] = i;
  {
    Rng rng(derive_seed(config.seed, kStreamSplit));
    rng.shuffle(order);
  }
  const int train_count =
      static_cast<int>(std::floor(config.train_fraction * static_cast<double>(full.size())));
  std::vector<int> train_idx(order.begin(), order.begin() + train_count);
  std::vector<int> test_idx(order.begin() + train_count, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  SimulationResult result;
  result.train = full.subset(train_idx);
  result.test = full.subset(test_idx);
  result.truth = std::move(truth);
  return result;
}

std::pair<ResponseDataset, ResponseDataset> forecast_split(const ResponseDataset& data,
                                                           double train_days,
                                                           double horizon_days) {
  if (train_days < 0.0 || horizon_days < 0.0) {
    throw ConfigError("forecast_split: day counts must be nonnegative");
  }
  const double origin = data.time_min();
  const double max_offset = data.time_max() - origin;
  if (max_offset >= train_days + horizon_days) {
    throw ConfigError("forecast_split: data reaches offset " + format_double(max_offset) +
                      " days but the training window plus horizon covers only " +
                      format_double(train_days + horizon_days) + " days");
  }
  std::vector<int> train_idx, test_idx;
  for (int i = 0; i < data.size(); ++i) {
    (data.time[i] - origin < train_days ? train_idx : test_idx).push_back(i);
  }
  return {data.subset(train_idx), data.subset(test_idx)};
}

std::vector<std::pair<ResponseDataset, ResponseDataset>> leave_one_trait_out_splits(
    const ResponseDataset& data) {
  if (!data.has_traits()) {
    throw ConfigError("leave-one-trait-out requires a trait map on the dataset");
  }
  const int traits = static_cast<int>(data.trait_names.size());
  if (traits == 1) {
    std::cerr << "warning: single-trait map makes the leave-one-trait-out split degenerate "
                 "(empty training fold)\n";
  }
  std::vector<std::pair<ResponseDataset, ResponseDataset>> folds;
  for (int g = 0; g < traits; ++g) {
    std::vector<int> train_idx, test_idx;
    for (int i = 0; i < data.size(); ++i) {
      (data.item_trait[data.item[i]] == g ? test_idx : train_idx).push_back(i);
    }
    folds.emplace_back(data.subset(train_idx), data.subset(test_idx));
  }
  return folds;
}

ResponseDataset planned_missing_mask(const ResponseDataset& data, int items_per_subfactor,
                                     int shown, std::uint64_t seed) {
  if (items_per_subfactor < 1 || shown < 1 || shown > items_per_subfactor) {
    throw ConfigError("planned_missing_mask: need 1 <= shown <= items_per_subfactor");
  }
  if (data.items() % items_per_subfactor != 0) {
    throw ConfigError("planned_missing_mask: item count " + std::to_string(data.items()) +
                      " is not divisible into sub-factors of " +
                      std::to_string(items_per_subfactor));
  }
  if (shown == items_per_subfactor) return data;

  std::map<std::tuple<int, double, int>, std::vector<int>> cells;
  for (int i = 0; i < data.size(); ++i) {
    const int group = data.item[i] / items_per_subfactor;
    cells[{data.unit[i], data.time[i], group}].push_back(i);
  }
  Rng rng(seed);
  std::vector<int> keep;
  for (auto& [key, rows] : cells) {
    (void)key;
    if (static_cast<int>(rows.size()) <= shown) {
      keep.insert(keep.end(), rows.begin(), rows.end());
      continue;
    }
    rng.shuffle(rows);
    rows.resize(static_cast<std::size_t>(shown));
    keep.insert(keep.end(), rows.begin(), rows.end());
  }
  std::sort(keep.begin(), keep.end());
  return data.subset(keep);
}

}  // namespace ipgp
