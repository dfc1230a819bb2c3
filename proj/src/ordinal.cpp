#include "ipgp/ordinal.hpp"

#include <cmath>

namespace ipgp {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// log(1 - e^z) for z < 0
double log1m_exp(double z) {
  if (z >= 0.0) return -std::numeric_limits<double>::infinity();
  if (z > -M_LN2) return std::log(-std::expm1(z));
  return std::log1p(-std::exp(z));
}

// log of the standard normal CDF, with the asymptotic expansion in the far
// left tail where erfc underflows.
double log_ndtr(double x) {
  if (x > -37.0) {
    return std::log(0.5 * std::erfc(-x * M_SQRT1_2));
  }
  const double x2 = x * x;
  const double series = std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
  return -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + series;
}

}  // namespace

Link parse_link(const std::string& name) {
  if (name == "logit") return Link::Logit;
  if (name == "probit") return Link::Probit;
  throw ConfigError("unknown link '" + name + "' (expected logit or probit)");
}

std::string link_name(Link link) { return link == Link::Logit ? "logit" : "probit"; }

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double link_cdf(double x, Link link) {
  return link == Link::Logit ? sigmoid(x) : 0.5 * std::erfc(-x * M_SQRT1_2);
}

double link_log_cdf(double x, Link link) {
  return link == Link::Logit ? log_sigmoid(x) : log_ndtr(x);
}

double link_log_pdf(double x, Link link) {
  if (link == Link::Logit) {
    // logistic density sigma(x) * sigma(-x)
    return log_sigmoid(x) + log_sigmoid(-x);
  }
  return -0.5 * x * x - kLogSqrt2Pi;
}

void OrdinalThresholds::validate() const {
  for (Eigen::Index i = 0; i < cuts.size(); ++i) {
    if (!std::isfinite(cuts[i])) {
      throw ConfigError("ordinal thresholds: cut " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(cuts[i - 1] < cuts[i])) {
      throw ConfigError("ordinal thresholds: cuts must be strictly increasing, got " +
                        std::to_string(cuts[i - 1]) + " then " + std::to_string(cuts[i]));
    }
  }
}

OrdinalThresholds make_thresholds(Vec cuts) {
  OrdinalThresholds t{std::move(cuts)};
  t.validate();
  return t;
}

OrdinalThresholds parameterize_thresholds(const Vec& raw) {
  Vec cuts(raw.size());
  double running = 0.0;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw ConfigError("parameterize_thresholds: raw entries must be finite");
    }
    running = (i == 0) ? raw[0] : running + softplus(raw[i]);
    cuts[i] = running;
  }
  return OrdinalThresholds{std::move(cuts)};
}

Vec threshold_raw_from_cuts(const Vec& cuts) {
  make_thresholds(cuts);
  Vec raw(cuts.size());
  for (Eigen::Index i = 0; i < cuts.size(); ++i) {
    if (i == 0) {
      raw[0] = cuts[0];
    } else {
      const double gap = cuts[i] - cuts[i - 1];
      raw[i] = gap > 30.0 ? gap : std::log(std::expm1(gap));
    }
  }
  return raw;
}

Vec ordinal_probs(double f, const OrdinalThresholds& thresholds, Link link) {
  thresholds.validate();
  if (!std::isfinite(f)) throw NumericalError("ordinal_probs: latent value is not finite");
  const int c = thresholds.levels();
  if (c == 1) return Vec::Ones(1);  // degenerate single-level scale
  Vec probs(c);
  double prev = 0.0;
  for (int level = 1; level <= c; ++level) {
    const double cur = level < c ? link_cdf(thresholds.cuts[level - 1] - f, link) : 1.0;
    probs[level - 1] = std::max(0.0, cur - prev);
    prev = cur;
  }
  return probs;
}

double ordinal_log_prob(int level, double f, const OrdinalThresholds& thresholds, Link link) {
  thresholds.validate();
  const int c = thresholds.levels();
  if (level < 1 || level > c) {
    throw DataError("ordinal_log_prob: level " + std::to_string(level) + " outside 1.." +
                    std::to_string(c));
  }
  if (!std::isfinite(f)) throw NumericalError("ordinal_log_prob: latent value is not finite");
  if (c == 1) return 0.0;  // degenerate single-level scale
  if (level == 1) return link_log_cdf(thresholds.cuts[0] - f, link);
  if (level == c) return link_log_cdf(f - thresholds.cuts[c - 2], link);
  const double la = link_log_cdf(thresholds.cuts[level - 1] - f, link);
  const double lb = link_log_cdf(thresholds.cuts[level - 2] - f, link);
  return la + log1m_exp(lb - la);
}

OrdinalLogProbGrad ordinal_log_prob_grad(int level, double f,
                                         const OrdinalThresholds& thresholds, Link link) {
  const int c = thresholds.levels();
  OrdinalLogProbGrad g;
  g.value = ordinal_log_prob(level, f, thresholds, link);
  if (level < c) {
    const double a = thresholds.cuts[level - 1] - f;
    const double ratio = std::exp(link_log_pdf(a, link) - g.value);
    g.upper_index = level - 1;
    g.d_cut_upper = ratio;
    g.d_f -= ratio;
  }
  if (level > 1) {
    const double b = thresholds.cuts[level - 2] - f;
    const double ratio = std::exp(link_log_pdf(b, link) - g.value);
    g.lower_index = level - 2;
    g.d_cut_lower = -ratio;
    g.d_f += ratio;
  }
  return g;
}

}  // namespace ipgp
