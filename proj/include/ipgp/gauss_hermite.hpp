#pragma once

#include "ipgp/common.hpp"
#include "ipgp/ordinal.hpp"

namespace ipgp {

/// Gauss-Hermite rule in the physicists' convention (weight exp(-x^2)),
/// computed by Golub-Welsch from the Jacobi matrix of the Hermite recurrence.
struct GaussHermite {
  Vec nodes;
  Vec weights;

  int order() const { return static_cast<int>(nodes.size()); }
  static GaussHermite make(int order);
};

/// E_{f ~ N(mean, variance)}[log p(y | f)]
/// = (1/sqrt(pi)) sum_k w_k log p(y | mean + sqrt(2 variance) x_k)
double gh_expect_ordinal_log_prob(const GaussHermite& rule, double mean, double variance,
                                  int level, const OrdinalThresholds& thresholds,
                                  Link link = Link::Logit);

/// Same expectation plus derivatives of the quadrature value in the marginal
/// mean, the marginal variance, and the two adjacent cut points.
struct GhExpectGrad {
  double value = 0.0;
  double d_mean = 0.0;
  double d_var = 0.0;
  double d_cut_lower = 0.0;
  double d_cut_upper = 0.0;
  int lower_index = -1;
  int upper_index = -1;
};

GhExpectGrad gh_expect_ordinal_log_prob_grad(const GaussHermite& rule, double mean,
                                             double variance, int level,
                                             const OrdinalThresholds& thresholds,
                                             Link link = Link::Logit);

/// Quadrature-marginalized categorical distribution
/// p(y = c) = E_{f ~ N(mean, variance)}[p(y = c | f)]; sums to one.
Vec gh_predict_probs(const GaussHermite& rule, double mean, double variance,
                     const OrdinalThresholds& thresholds, Link link = Link::Logit);

}  // namespace ipgp
