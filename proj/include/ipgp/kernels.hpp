#pragma once

#include "ipgp/common.hpp"

namespace ipgp {

/// Per-unit RBF length scales over the time axis.
struct TimeKernelParams {
  Vec lengthscale_per_unit;
  void validate() const;  // every entry strictly positive
};

/// Population loading matrix (K factors x J items), per-unit idiographic
/// loadings (one J-row per unit) and the per-item noise variances.
struct LoadingSet {
  Mat w_pop;  // K x J; may be 0 x J when the population term is dropped
  Mat w_ind;  // n x J; may be 0 x J when the idiographic term is dropped
  Vec noise;  // J, nonnegative

  int items() const { return static_cast<int>(noise.size()); }
  void validate() const;
};

/// RBF time kernel K(t, t') = exp(-(t - t')^2 / lengthscale^2).
/// Unit diagonal by construction.
Mat rbf_time_kernel(const Vec& times, double lengthscale);

/// J x J task kernel W'W + w w' + diag(v). Pass a 0 x J `w_pop` or an empty
/// `w_unit` to drop the corresponding term.
Mat task_kernel(const Mat& w_pop, const Vec& w_unit, const Vec& noise);

/// Eq-style unit-individualized task kernel for one unit of a LoadingSet.
Mat task_kernel_idiographic(const LoadingSet& loadings, int unit);

/// Population-only task kernel (no unit-specific component).
Mat task_kernel_nomothetic(const LoadingSet& loadings);

/// Kronecker-structured covariance over (item, time) pairs. The dense
/// realization is item-major: entry ((j,t), (j',t')) = task(j,j')*time(t,t'),
/// i.e. for two tasks the matrix is four T x T blocks each scaled by one
/// task-kernel entry.
struct JointCovariance {
  Mat task_cov;  // J x J
  Mat time_cov;  // T x T

  int tasks() const { return static_cast<int>(task_cov.rows()); }
  int steps() const { return static_cast<int>(time_cov.rows()); }
  int rows() const { return tasks() * steps(); }

  double entry(int j, int t, int jp, int tp) const {
    return task_cov(j, jp) * time_cov(t, tp);
  }

  Mat dense() const;
};

/// Builds the structured joint covariance; both factors must be symmetric.
JointCovariance joint_covariance(const Mat& task_cov, const Mat& time_cov);

}  // namespace ipgp
