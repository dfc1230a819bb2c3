#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "ipgp/dataset.hpp"
#include "ipgp/kernels.hpp"
#include "ipgp/ordinal.hpp"

namespace ipgp {

struct SimulationConfig {
  int num_units = 10;
  int num_periods = 30;
  int num_factors = 5;
  int num_items = 20;
  int num_levels = 5;
  std::vector<double> lengthscale_pool{10.0, 20.0, 30.0};
  double dominant_loading = 3.0;
  std::array<double, 2> off_loading_range{-1.0, 1.0};
  std::array<double, 2> idio_range{-1.0, 1.0};
  double sparsity_fraction = 0.5;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  std::vector<Mat> factor_paths;  // per unit, K x T
  std::vector<Vec> idio_paths;    // per unit, T
  Mat w_pop;                      // K x J
  Mat w_ind;                      // n x J
  Vec lengthscales;               // n
  OrdinalThresholds thresholds;   // emission cut points
  Vec times;                      // T
  std::vector<Mat> task_correlation;  // per unit, from the loadings alone

  double latent(int unit, int item, int t_index) const;
};

struct SimulationResult {
  ResponseDataset train;
  ResponseDataset test;
  GroundTruth truth;
};

/// Emission thresholds: [-2, -1, 1, 2] for five levels, equally spaced over
/// [-2, 2] otherwise.
Vec default_emission_cuts(int num_levels);

/// Synthetic longitudinal generator: per-unit GP factor paths with a length
/// scale drawn from the pool, block-structured population loadings with
/// random sparsification and sign flips, one extra per-unit idiographic path,
/// ordinal emission by thresholding the latent values, and a uniformly random
/// train/test split. Deterministic given config.seed.
SimulationResult simulate(const SimulationConfig& config);

/// Partition by timestamp: train takes everything up to
/// time_min + train_days, test the rest. The data must not extend past
/// train_days + horizon_days.
std::pair<ResponseDataset, ResponseDataset> forecast_split(const ResponseDataset& data,
                                                           double train_days,
                                                           double horizon_days);

/// One (train, test) pair per trait: test holds the trait's items, train the
/// remainder. Requires traits attached to the dataset.
std::vector<std::pair<ResponseDataset, ResponseDataset>> leave_one_trait_out_splits(
    const ResponseDataset& data);

/// Planned-missing design: items are grouped into consecutive blocks of
/// `items_per_subfactor` (in item order); per (unit, time, block) only
/// `shown` randomly chosen items are kept.
ResponseDataset planned_missing_mask(const ResponseDataset& data, int items_per_subfactor,
                                     int shown, std::uint64_t seed);

}  // namespace ipgp
