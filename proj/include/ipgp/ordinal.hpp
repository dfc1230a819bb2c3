#pragma once

#include <string>

#include "ipgp/common.hpp"

namespace ipgp {

// Cumulative link. Logit is the default; probit is selectable from config.
enum class Link { Logit, Probit };

Link parse_link(const std::string& name);
std::string link_name(Link link);

/// Free cut points b_1 < ... < b_{C-1}; b_0 = -inf and b_C = +inf are implied.
struct OrdinalThresholds {
  Vec cuts;

  int levels() const { return static_cast<int>(cuts.size()) + 1; }
  void validate() const;  // strict monotonicity
};

OrdinalThresholds make_thresholds(Vec cuts);

/// Unconstrained parameterization of the cut vector:
/// cuts[0] = raw[0], cuts[k] = cuts[k-1] + softplus(raw[k]).
OrdinalThresholds parameterize_thresholds(const Vec& raw);

/// Inverse of parameterize_thresholds (used for warm starts and round trips).
Vec threshold_raw_from_cuts(const Vec& cuts);

/// Categorical probabilities p(y = c | f) = F(b_c - f) - F(b_{c-1} - f).
Vec ordinal_probs(double f, const OrdinalThresholds& thresholds, Link link = Link::Logit);

/// log p(y | f), stable for |f| far into either tail.
double ordinal_log_prob(int level, double f, const OrdinalThresholds& thresholds,
                        Link link = Link::Logit);

/// log p(y | f) together with its derivative in f and in the two adjacent cut
/// points. cut index -1 marks a cut at +-infinity (no derivative).
struct OrdinalLogProbGrad {
  double value = 0.0;
  double d_f = 0.0;
  double d_cut_lower = 0.0;  // w.r.t. b_{level-1}
  double d_cut_upper = 0.0;  // w.r.t. b_level
  int lower_index = -1;      // 0-based index into cuts, -1 if at -inf
  int upper_index = -1;      // 0-based index into cuts, -1 if at +inf
};

OrdinalLogProbGrad ordinal_log_prob_grad(int level, double f,
                                         const OrdinalThresholds& thresholds,
                                         Link link = Link::Logit);

// Stable scalar helpers shared with the quadrature code.
double softplus(double x);
double sigmoid(double x);
double log_sigmoid(double x);
double link_cdf(double x, Link link);
double link_log_cdf(double x, Link link);
double link_log_pdf(double x, Link link);

}  // namespace ipgp
