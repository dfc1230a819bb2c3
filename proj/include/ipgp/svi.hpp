#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ipgp/dataset.hpp"
#include "ipgp/gauss_hermite.hpp"
#include "ipgp/kernels.hpp"
#include "ipgp/model_spec.hpp"
#include "ipgp/ordinal.hpp"

namespace ipgp {

struct InducingPoint {
  int item = 0;
  double time = 0.0;
};

/// Variational posterior q(u) = N(mean, cov_factor cov_factor') over the
/// inducing values of one unit, in the unwhitened space.
struct VariationalState {
  std::vector<InducingPoint> inducing;
  Vec mean;
  Mat cov_factor;  // lower triangular, strictly positive diagonal
  OrdinalThresholds thresholds;

  int size() const { return static_cast<int>(inducing.size()); }
  void validate() const;
};

struct MarginalPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 10;
  int batch_size = 256;
  int num_inducing = 100;
  int quadrature_points = 20;
  std::uint64_t seed = 0;
  int threads = 1;
  bool freeze_lengthscale = false;
  Link link = Link::Logit;

  void validate() const;
};

/// Sparse-GP marginals q(f) at the query points under the coregionalized
/// kernel task(j,j') * exp(-(t-t')^2/ell^2):
///   mean = K_fu Kuu^-1 mu,
///   var  = k_ff - diag(K_fu Kuu^-1 K_uf) + diag(K_fu Kuu^-1 Sigma Kuu^-1 K_uf),
/// all through jittered Cholesky solves.
std::vector<MarginalPrediction> marginal_q_f(const VariationalState& state, const Mat& task_cov,
                                             double time_lengthscale,
                                             const std::vector<InducingPoint>& queries);

/// KL( N(mean, Sigma) || N(0, prior_cov) ) in closed form.
double kl_gaussian(const VariationalState& state, const Mat& prior_cov);

/// Reverse-mode sensitivity of a Cholesky factorization: given L = chol(A)
/// and dLoss/dL (lower), returns the symmetric dLoss/dA.
Mat cholesky_backward(const Mat& chol_lower, const Mat& chol_bar);

/// Kernel and likelihood parameters shared by the trainer and the fitted
/// model. Positive quantities are carried on log scale; cut points through
/// the softplus chain parameterization.
struct ModelParams {
  Mat w_pop;     // K x J; 0 x 0 when the population term is excluded
  Vec log_v;     // J
  Mat w_ind;     // n x J; 0 x 0 when the idiographic term is excluded
  Vec log_ell;   // n
  Vec raw_cuts;  // C-1

  Mat task_kernel_for_unit(const ModelSpec& spec, int unit) const;
  OrdinalThresholds thresholds() const { return parameterize_thresholds(raw_cuts); }
};

/// Whitened per-unit variational parameters: q(u) has mean R mu and
/// covariance R L L' R' with R = chol(Kuu). The raw factor stores log values
/// on the diagonal so every entry is unconstrained.
struct WhitenedState {
  Vec mean;   // m
  Mat l_raw;  // m x m lower; diagonal on log scale

  Mat l_tilde() const;  // materialized factor with exponentiated diagonal
};

struct Gradients {
  Mat w_pop;
  Vec log_v;
  Mat w_ind;
  Vec log_ell;
  Vec raw_cuts;
  std::vector<Vec> var_mean;
  std::vector<Mat> var_l_raw;
};

struct FitOutput {
  ModelParams params;
  std::vector<WhitenedState> var;
  Vec trace;          // per-step minibatch ELBO estimates
  double final_elbo;  // full-data ELBO at the returned parameters
};

/// Stochastic variational trainer for one model spec on one training set.
/// One independent variational state per unit; population loadings, noise
/// variances and thresholds are shared across units.
class SviEngine {
 public:
  SviEngine(const ResponseDataset& data, ModelSpec spec, TrainConfig config);

  struct State {
    ModelParams params;
    std::vector<WhitenedState> var;
  };

  const ModelSpec& spec() const { return spec_; }
  const TrainConfig& config() const { return config_; }
  const ResponseDataset& data() const { return data_; }
  const std::vector<Vec>& inducing_times() const { return inducing_times_; }
  std::vector<InducingPoint> inducing_points(int unit) const;

  /// Default-initialized parameters (seeded by config.seed).
  State initial_state() const;

  double elbo_full(const State& state) const;
  /// Minibatch estimator: (N / |batch|) * sum of quadrature expectations over
  /// the batch, minus the summed KL of every unit. An empty batch yields the
  /// pure -KL term.
  double elbo_batch(const State& state, const std::vector<int>& batch) const;

  /// Gradients of elbo_batch in every free parameter. Frozen or excluded
  /// parameters have empty slots.
  Gradients gradients(const State& state, const std::vector<int>& batch,
                      double* elbo_out = nullptr) const;

  /// Adam ascent on the ELBO for the configured number of epochs over
  /// seed-shuffled minibatches. Deterministic given config.seed and threads.
  FitOutput fit(const State& start) const;
  FitOutput fit() const { return fit(initial_state()); }

  /// Flat views used by the optimizer and by finite-difference checks; the
  /// layout covers exactly the free parameters.
  Vec flatten(const State& state) const;
  Vec flatten_gradients(const Gradients& grads) const;
  void unflatten(const Vec& flat, State& state) const;
  int free_parameter_count() const;

  /// Unwhitened public states (one per unit) for prediction and export.
  std::vector<VariationalState> materialize(const State& state) const;

 private:
  struct UnitWorkspace;

  void build_unit_workspace(const State& state, int unit, UnitWorkspace& ws) const;
  template <bool WithGrad>
  double accumulate(const State& state, const std::vector<int>& batch,
                    Gradients* grads) const;

  ResponseDataset data_;
  ModelSpec spec_;
  TrainConfig config_;
  GaussHermite gh_;
  std::vector<Vec> inducing_times_;  // per unit; every item shares the grid
  double global_t_min_ = 0.0;
  double global_t_max_ = 0.0;
};

/// Predictive categorical distributions for (unit, item, time) queries under
/// a fitted state: quadrature marginalization of the ordinal likelihood over
/// q(f*). Rows sum to one.
struct FittedModel {
  ModelSpec spec;
  ModelParams params;
  std::vector<VariationalState> states;  // per unit
  std::vector<Vec> inducing_times;       // per unit
  Link link = Link::Logit;
  int quadrature_points = 20;
  double final_elbo = 0.0;
  long train_observations = 0;
  std::vector<std::string> unit_ids;
  std::vector<std::string> item_ids;
  std::vector<std::string> trait_names;
  std::vector<int> item_trait;
};

struct QueryPoint {
  int unit = 0;
  int item = 0;
  double time = 0.0;
};

Mat predict_responses(const FittedModel& model, const std::vector<QueryPoint>& queries,
                      std::vector<MarginalPrediction>* marginals = nullptr);

}  // namespace ipgp
