#include "ipgp/gauss_hermite.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace ipgp {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

void check_variance(double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw NumericalError("Gauss-Hermite expectation: variance must be positive, got " +
                         std::to_string(variance));
  }
}

}  // namespace

GaussHermite GaussHermite::make(int order) {
  if (order < 1) {
    throw ConfigError("Gauss-Hermite order must be at least 1, got " + std::to_string(order));
  }
  GaussHermite rule;
  if (order == 1) {
    rule.nodes = Vec::Zero(1);
    rule.weights = Vec::Constant(1, kSqrtPi);
    return rule;
  }
  Vec diag = Vec::Zero(order);
  Vec sub(order - 1);
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Mat> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("Gauss-Hermite node computation failed at order " +
                         std::to_string(order));
  }
  rule.nodes = solver.eigenvalues();
  rule.weights = kSqrtPi * solver.eigenvectors().row(0).transpose().array().square();
  return rule;
}

double gh_expect_ordinal_log_prob(const GaussHermite& rule, double mean, double variance,
                                  int level, const OrdinalThresholds& thresholds, Link link) {
  check_variance(variance);
  const double scale = std::sqrt(2.0 * variance);
  double acc = 0.0;
  for (int k = 0; k < rule.order(); ++k) {
    acc += rule.weights[k] * ordinal_log_prob(level, mean + scale * rule.nodes[k], thresholds, link);
  }
  return acc / kSqrtPi;
}

GhExpectGrad gh_expect_ordinal_log_prob_grad(const GaussHermite& rule, double mean,
                                             double variance, int level,
                                             const OrdinalThresholds& thresholds, Link link) {
  check_variance(variance);
  const double scale = std::sqrt(2.0 * variance);
  GhExpectGrad out;
  for (int k = 0; k < rule.order(); ++k) {
    const double x = rule.nodes[k];
    const OrdinalLogProbGrad g =
        ordinal_log_prob_grad(level, mean + scale * x, thresholds, link);
    const double w = rule.weights[k];
    out.value += w * g.value;
    out.d_mean += w * g.d_f;
    // d f_k / d variance = x / sqrt(2 variance)
    out.d_var += w * g.d_f * x / scale;
    out.d_cut_lower += w * g.d_cut_lower;
    out.d_cut_upper += w * g.d_cut_upper;
    out.lower_index = g.lower_index;
    out.upper_index = g.upper_index;
  }
  out.value /= kSqrtPi;
  out.d_mean /= kSqrtPi;
  out.d_var /= kSqrtPi;
  out.d_cut_lower /= kSqrtPi;
  out.d_cut_upper /= kSqrtPi;
  return out;
}

Vec gh_predict_probs(const GaussHermite& rule, double mean, double variance,
                     const OrdinalThresholds& thresholds, Link link) {
  check_variance(variance);
  thresholds.validate();
  const double scale = std::sqrt(2.0 * variance);
  const int c = thresholds.levels();
  Vec probs = Vec::Zero(c);
  for (int k = 0; k < rule.order(); ++k) {
    const double f = mean + scale * rule.nodes[k];
    probs += rule.weights[k] * ordinal_probs(f, thresholds, link);
  }
  probs /= kSqrtPi;
  // quadrature preserves the simplex up to rounding
  probs = probs.cwiseMax(0.0);
  probs /= probs.sum();
  return probs;
}

}  // namespace ipgp
