#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ipgp/svi.hpp"

namespace ipgp {

/// Wires a model variant onto a dataset and training configuration.
/// Validates that the spec is consistent with the dataset dimensions.
SviEngine build_model(const ModelSpec& spec, const ResponseDataset& data,
                      const TrainConfig& config);

struct FitBundle {
  FitOutput out;
  FittedModel model;
  std::optional<FitOutput> stage1;  // populated when an internal prior fit ran
};

/// Fits a model. Frozen-prior variants (IPGP, IPGP-LOW) take their population
/// loadings from `stage1` when given; otherwise a nomothetic stage-1 fit with
/// the same factor count runs internally first. Stage 2 starts from the
/// stage-1 optimum with fresh idiographic loadings.
FitBundle fit_model(const ResponseDataset& train, const ModelSpec& spec,
                    const TrainConfig& config, const FitBundle* stage1 = nullptr,
                    const Mat* prior_w_pop = nullptr);

struct PriorFit {
  Mat w_pop;
  FitBundle bundle;
};

/// Stage 1 of the two-stage workflow: learns the population loading matrix
/// from a nomothetic fit; the result is the informative prior for the full
/// model.
PriorFit fit_population_prior(const ResponseDataset& train, int num_factors,
                              const TrainConfig& config);

struct EvidenceEntry {
  std::string label;
  double elbo = 0.0;       // optimized full-data ELBO, the evidence proxy
  long obs_count = 0;
};

struct ComparisonRow {
  std::string label;
  double log_evidence = 0.0;
  double log_bf_vs_ref = 0.0;  // relative to the first entry
  double prior_weight = 0.0;
  double posterior_weight = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

/// ELBO-based Bayes-factor table. All entries must come from fits on the
/// same observations; posterior weights are computed in log space and sum to
/// one.
ComparisonTable bayes_factor_table(const std::vector<EvidenceEntry>& entries,
                                   const Vec& prior_weights);

/// Task covariance normalized to unit diagonal, R = D^-1/2 K D^-1/2.
/// unit >= 0 selects the unit-individualized kernel; unit < 0 the
/// population-only kernel.
Mat estimated_task_correlation(const ModelSpec& spec, const ModelParams& params, int unit);

/// Correlation of an explicit task kernel.
Mat correlation_from_kernel(const Mat& kernel);

}  // namespace ipgp
