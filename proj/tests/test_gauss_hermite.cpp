#include <cmath>

#include "doctest.h"
#include "ipgp/gauss_hermite.hpp"
#include "ipgp/rng.hpp"

using namespace ipgp;

namespace {

OrdinalThresholds random_thresholds(Rng& rng, int levels) {
  Vec cuts(levels - 1);
  double running = rng.uniform(-3.0, -1.0);
  for (int i = 0; i < levels - 1; ++i) {
    cuts[i] = running;
    running += 0.1 + rng.uniform(0.0, 1.5);
  }
  return make_thresholds(cuts);
}

// dense trapezoid oracle over mean +- 8 sigma
double trapezoid_expectation(double mean, double variance, int level,
                             const OrdinalThresholds& thr, Link link, int points = 160001) {
  const double sigma = std::sqrt(variance);
  const double lo = mean - 8.0 * sigma;
  const double hi = mean + 8.0 * sigma;
  const double step = (hi - lo) / (points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double f = lo + step * i;
    const double pdf =
        std::exp(-0.5 * (f - mean) * (f - mean) / variance) / std::sqrt(2.0 * M_PI * variance);
    const double weight = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    acc += weight * pdf * ordinal_log_prob(level, f, thr, link);
  }
  return acc * step;
}

}  // namespace

TEST_SUITE("gauss_hermite") {

TEST_CASE("rule construction") {
  CHECK_THROWS_AS(GaussHermite::make(0), ConfigError);
  const auto one = GaussHermite::make(1);
  CHECK(one.nodes[0] == doctest::Approx(0.0));
  CHECK(one.weights[0] == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-14));

  // nodes integrate even polynomials of the weight exactly:
  // sum w = sqrt(pi), sum w x^2 = sqrt(pi)/2
  for (const int order : {5, 20, 30}) {
    const auto rule = GaussHermite::make(order);
    CHECK(rule.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
    CHECK(rule.weights.dot(rule.nodes.cwiseAbs2()) ==
          doctest::Approx(0.5 * std::sqrt(M_PI)).epsilon(1e-12));
    CHECK(rule.weights.dot(rule.nodes) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("identity integrand recovers the mean exactly") {
  for (const int order : {1, 3, 20}) {
    const auto rule = GaussHermite::make(order);
    for (const double mean : {-4.0, 0.0, 2.5}) {
      const double scale = std::sqrt(2.0 * 1.7);
      double acc = 0.0;
      for (int k = 0; k < rule.order(); ++k) {
        acc += rule.weights[k] * (mean + scale * rule.nodes[k]);
      }
      CHECK(acc / std::sqrt(M_PI) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("degenerate single-level integrand returns the constant") {
  const auto rule = GaussHermite::make(20);
  const OrdinalThresholds thr{Vec(0)};
  CHECK(gh_expect_ordinal_log_prob(rule, 0.3, 2.0, 1, thr) == doctest::Approx(0.0));
}

TEST_CASE("order-20 expectations match dense integration in the converged regime") {
  // the variance range is capped at 2: at order 20 the quadrature error for
  // these integrands is ~1e-8 there, while variances of ~16+ need orders in
  // the hundreds for comparable accuracy
  Rng rng(21);
  const auto rule = GaussHermite::make(20);
  for (int trial = 0; trial < 60; ++trial) {
    const int levels = 5;
    const auto thr = random_thresholds(rng, levels);
    const double mean = rng.uniform(-8.0, 8.0);
    const double variance = rng.uniform(0.01, 2.0);
    const int level = 1 + rng.below(levels);
    const double got = gh_expect_ordinal_log_prob(rule, mean, variance, level, thr);
    const double want = trapezoid_expectation(mean, variance, level, thr, Link::Logit);
    CHECK(std::abs(got - want) <= 1e-6);
  }
}

TEST_CASE("order 30 and order 20 agree in the converged regime") {
  Rng rng(22);
  const auto r20 = GaussHermite::make(20);
  const auto r30 = GaussHermite::make(30);
  for (int trial = 0; trial < 200; ++trial) {
    const auto thr = random_thresholds(rng, 2 + rng.below(5));
    const double mean = rng.uniform(-6.0, 6.0);
    const double variance = rng.uniform(0.01, 1.5);
    const int level = 1 + rng.below(thr.levels());
    const double a = gh_expect_ordinal_log_prob(r20, mean, variance, level, thr);
    const double b = gh_expect_ordinal_log_prob(r30, mean, variance, level, thr);
    CHECK(std::abs(a - b) < 1e-8);
  }
}

TEST_CASE("expectation gradients match finite differences") {
  Rng rng(23);
  const auto rule = GaussHermite::make(20);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const auto thr = random_thresholds(rng, 4);
    const double mean = rng.uniform(-4.0, 4.0);
    const double variance = rng.uniform(0.05, 4.0);
    const int level = 1 + rng.below(4);
    const auto grad = gh_expect_ordinal_log_prob_grad(rule, mean, variance, level, thr);
    CHECK(grad.value ==
          doctest::Approx(gh_expect_ordinal_log_prob(rule, mean, variance, level, thr)));

    const double fd_mean = (gh_expect_ordinal_log_prob(rule, mean + h, variance, level, thr) -
                            gh_expect_ordinal_log_prob(rule, mean - h, variance, level, thr)) /
                           (2.0 * h);
    const double fd_var = (gh_expect_ordinal_log_prob(rule, mean, variance + h, level, thr) -
                           gh_expect_ordinal_log_prob(rule, mean, variance - h, level, thr)) /
                          (2.0 * h);
    CHECK(std::abs(grad.d_mean - fd_mean) <= 1e-6 * std::max(1.0, std::abs(fd_mean)));
    CHECK(std::abs(grad.d_var - fd_var) <= 1e-6 * std::max(1.0, std::abs(fd_var)));
  }
}

TEST_CASE("predictive probabilities normalize and match direct integration") {
  Rng rng(24);
  const auto rule = GaussHermite::make(20);
  for (int trial = 0; trial < 50; ++trial) {
    const auto thr = random_thresholds(rng, 5);
    const double mean = rng.uniform(-4.0, 4.0);
    const double variance = rng.uniform(0.05, 2.0);
    const Vec p = gh_predict_probs(rule, mean, variance, thr);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
  // near-symmetric tails for a huge-variance, zero-mean marginal with
  // symmetric thresholds
  Vec cuts(4);
  cuts << -2.0, -1.0, 1.0, 2.0;
  const Vec p = gh_predict_probs(rule, 0.0, 400.0, make_thresholds(cuts));
  CHECK(p[0] == doctest::Approx(p[4]).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(p[3]).epsilon(1e-10));
}

TEST_CASE("variance must be positive") {
  const auto rule = GaussHermite::make(5);
  const auto thr = make_thresholds(Vec::Zero(1));
  CHECK_THROWS_AS(gh_expect_ordinal_log_prob(rule, 0.0, 0.0, 1, thr), NumericalError);
  CHECK_THROWS_AS(gh_expect_ordinal_log_prob(rule, 0.0, -1.0, 1, thr), NumericalError);
}

}  // TEST_SUITE
