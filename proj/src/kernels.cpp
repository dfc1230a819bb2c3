#include "ipgp/kernels.hpp"

#include <cmath>

namespace ipgp {

namespace {

void check_symmetric(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw StructuralError(std::string(what) + ": matrix is not square");
  }
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  const double skew = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (skew > 1e-10 * scale) {
    throw StructuralError(std::string(what) + ": matrix is not symmetric (max skew " +
                          std::to_string(skew) + ")");
  }
}

}  // namespace

void TimeKernelParams::validate() const {
  for (Eigen::Index i = 0; i < lengthscale_per_unit.size(); ++i) {
    const double l = lengthscale_per_unit[i];
    if (!(l > 0.0) || !std::isfinite(l)) {
      throw ConfigError("TimeKernelParams: lengthscale for unit " + std::to_string(i) +
                        " must be positive and finite");
    }
  }
}

void LoadingSet::validate() const {
  const Eigen::Index j = noise.size();
  if (w_pop.size() > 0 && w_pop.cols() != j) {
    throw StructuralError("LoadingSet: w_pop has " + std::to_string(w_pop.cols()) +
                          " columns but noise has " + std::to_string(j) + " entries");
  }
  if (w_ind.size() > 0 && w_ind.cols() != j) {
    throw StructuralError("LoadingSet: w_ind has " + std::to_string(w_ind.cols()) +
                          " columns but noise has " + std::to_string(j) + " entries");
  }
  for (Eigen::Index i = 0; i < j; ++i) {
    if (!(noise[i] >= 0.0) || !std::isfinite(noise[i])) {
      throw ConfigError("LoadingSet: noise entries must be nonnegative and finite");
    }
  }
}

Mat rbf_time_kernel(const Vec& times, double lengthscale) {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw ConfigError("rbf_time_kernel: lengthscale must be positive, got " +
                      std::to_string(lengthscale));
  }
  const Eigen::Index t = times.size();
  Mat k(t, t);
  const double inv_sq = 1.0 / (lengthscale * lengthscale);
  for (Eigen::Index a = 0; a < t; ++a) {
    k(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < t; ++b) {
      const double d = times[a] - times[b];
      const double v = std::exp(-d * d * inv_sq);
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

Mat task_kernel(const Mat& w_pop, const Vec& w_unit, const Vec& noise) {
  const Eigen::Index j = noise.size();
  if (w_pop.size() > 0 && w_pop.cols() != j) {
    throw StructuralError("task_kernel: w_pop column count " + std::to_string(w_pop.cols()) +
                          " != item count " + std::to_string(j));
  }
  if (w_unit.size() > 0 && w_unit.size() != j) {
    throw StructuralError("task_kernel: idiographic loading length " +
                          std::to_string(w_unit.size()) + " != item count " + std::to_string(j));
  }
  for (Eigen::Index i = 0; i < j; ++i) {
    if (!(noise[i] >= 0.0)) {
      throw ConfigError("task_kernel: noise variances must be nonnegative");
    }
  }
  Mat k = Mat(noise.asDiagonal());
  if (w_pop.size() > 0) {
    k.noalias() += w_pop.transpose() * w_pop;
  }
  if (w_unit.size() > 0) {
    k.noalias() += w_unit * w_unit.transpose();
  }
  // force exact symmetry; the Gram terms are symmetric up to rounding
  Mat sym = 0.5 * (k + k.transpose());
  return sym;
}

Mat task_kernel_idiographic(const LoadingSet& loadings, int unit) {
  loadings.validate();
  if (unit < 0 || unit >= loadings.w_ind.rows()) {
    throw StructuralError("task_kernel_idiographic: unit " + std::to_string(unit) +
                          " outside idiographic loading table of " +
                          std::to_string(loadings.w_ind.rows()) + " units");
  }
  const Vec w = loadings.w_ind.row(unit).transpose();
  return task_kernel(loadings.w_pop, w, loadings.noise);
}

Mat task_kernel_nomothetic(const LoadingSet& loadings) {
  loadings.validate();
  return task_kernel(loadings.w_pop, Vec(), loadings.noise);
}

Mat JointCovariance::dense() const {
  const int j = tasks();
  const int t = steps();
  Mat out(j * t, j * t);
  for (int a = 0; a < j; ++a) {
    for (int b = 0; b < j; ++b) {
      out.block(a * t, b * t, t, t) = task_cov(a, b) * time_cov;
    }
  }
  return out;
}

JointCovariance joint_covariance(const Mat& task_cov, const Mat& time_cov) {
  check_symmetric(task_cov, "joint_covariance: task factor");
  check_symmetric(time_cov, "joint_covariance: time factor");
  return JointCovariance{task_cov, time_cov};
}

}  // namespace ipgp
