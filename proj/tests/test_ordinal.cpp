#include <cmath>

#include "doctest.h"
#include "ipgp/ordinal.hpp"
#include "ipgp/rng.hpp"

using namespace ipgp;

namespace {

// plain-formula oracle used against the production code paths
double raw_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

OrdinalThresholds random_thresholds(Rng& rng, int levels) {
  Vec cuts(levels - 1);
  double running = rng.uniform(-3.0, -1.0);
  for (int i = 0; i < levels - 1; ++i) {
    cuts[i] = running;
    running += 0.1 + rng.uniform(0.0, 1.5);
  }
  return make_thresholds(cuts);
}

}  // namespace

TEST_SUITE("ordinal") {

TEST_CASE("probabilities at the link center") {
  {
    const auto thr = make_thresholds(Vec::Zero(1));
    const Vec p = ordinal_probs(0.0, thr);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-14));
  }
  {
    Vec cuts(2);
    cuts << -1.0, 1.0;
    const Vec p = ordinal_probs(0.0, make_thresholds(cuts));
    CHECK(p[0] == doctest::Approx(p[2]).epsilon(1e-14));
  }
}

TEST_CASE("five-level probabilities match the scalar CDF oracle") {
  Vec cuts(4);
  cuts << -2.0, -1.0, 1.0, 2.0;
  const auto thr = make_thresholds(cuts);
  const double f = 0.7;
  const Vec p = ordinal_probs(f, thr);
  double prev = 0.0;
  for (int c = 1; c <= 5; ++c) {
    const double cur = c < 5 ? raw_sigmoid(cuts[c - 1] - f) : 1.0;
    CHECK(p[c - 1] == doctest::Approx(cur - prev).epsilon(1e-13));
    prev = cur;
  }
}

TEST_CASE("probabilities normalize over random inputs") {
  Rng rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    const int levels = 2 + rng.below(6);
    const auto thr = random_thresholds(rng, levels);
    const double f = rng.uniform(-12.0, 12.0);
    const Vec p = ordinal_probs(f, thr, trial % 2 == 0 ? Link::Logit : Link::Probit);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-10);
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("larger latent values shift mass upward (stochastic dominance)") {
  Rng rng(18);
  for (int trial = 0; trial < 200; ++trial) {
    const auto thr = random_thresholds(rng, 5);
    const double f = rng.uniform(-6.0, 6.0);
    const double fp = f + rng.uniform(0.01, 3.0);
    const Vec a = ordinal_probs(f, thr);
    const Vec b = ordinal_probs(fp, thr);
    double cdf_a = 0.0, cdf_b = 0.0;
    for (int c = 0; c < 5; ++c) {
      cdf_a += a[c];
      cdf_b += b[c];
      CHECK(cdf_b <= cdf_a + 1e-12);
    }
  }
}

TEST_CASE("log probability agrees with the probability path and stays finite in the tails") {
  Vec cuts(1);
  cuts << 0.0;
  const auto thr = make_thresholds(cuts);
  CHECK(ordinal_log_prob(1, 0.0, thr) == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  Vec cuts5(4);
  cuts5 << -2.0, -1.0, 1.0, 2.0;
  const auto thr5 = make_thresholds(cuts5);
  // saturation: probability near one
  CHECK(ordinal_log_prob(5, 30.0, thr5) == doctest::Approx(0.0).epsilon(1e-10));
  // deep tail: large negative but finite
  const double tail = ordinal_log_prob(5, -30.0, thr5);
  CHECK(std::isfinite(tail));
  CHECK(tail < -25.0);
  for (int level = 1; level <= 5; ++level) {
    for (const double f : {-30.0, -3.0, 0.0, 3.0, 30.0}) {
      for (const Link link : {Link::Logit, Link::Probit}) {
        const double lp = ordinal_log_prob(level, f, thr5, link);
        CHECK(std::isfinite(lp));
        const double p = ordinal_probs(f, thr5, link)[level - 1];
        if (p > 1e-300) CHECK(lp == doctest::Approx(std::log(p)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("log-probability gradients match finite differences") {
  Rng rng(19);
  const double h = 1e-5;
  for (int trial = 0; trial < 200; ++trial) {
    const int levels = 2 + rng.below(5);
    const auto thr = random_thresholds(rng, levels);
    const double f = rng.uniform(-5.0, 5.0);
    const int level = 1 + rng.below(levels);
    const Link link = trial % 2 == 0 ? Link::Logit : Link::Probit;
    const auto grad = ordinal_log_prob_grad(level, f, thr, link);

    const double fd_f =
        (ordinal_log_prob(level, f + h, thr, link) - ordinal_log_prob(level, f - h, thr, link)) /
        (2.0 * h);
    CHECK(std::abs(grad.d_f - fd_f) <= 1e-6 * std::max(1.0, std::abs(fd_f)));

    for (const auto& [index, value] :
         {std::pair{grad.lower_index, grad.d_cut_lower}, {grad.upper_index, grad.d_cut_upper}}) {
      if (index < 0) continue;
      OrdinalThresholds up = thr, down = thr;
      up.cuts[index] += h;
      down.cuts[index] -= h;
      const double fd = (ordinal_log_prob(level, f, up, link) -
                         ordinal_log_prob(level, f, down, link)) /
                        (2.0 * h);
      CHECK(std::abs(value - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("threshold parameterization") {
  {
    const auto thr = parameterize_thresholds(Vec::Zero(4));
    const double log2 = std::log(2.0);
    CHECK(thr.cuts[0] == 0.0);
    CHECK(thr.cuts[1] == doctest::Approx(log2).epsilon(1e-14));
    CHECK(thr.cuts[2] == doctest::Approx(2 * log2).epsilon(1e-14));
    CHECK(thr.cuts[3] == doctest::Approx(3 * log2).epsilon(1e-14));
  }
  {
    Vec raw(3);
    raw << 1.0, -40.0, -35.0;
    const auto thr = parameterize_thresholds(raw);
    CHECK(thr.cuts[0] < thr.cuts[1]);
    CHECK(thr.cuts[1] < thr.cuts[2]);
  }
  {
    Vec raw(1);
    raw << -0.73;
    CHECK(parameterize_thresholds(raw).cuts[0] == -0.73);
  }
}

TEST_CASE("threshold parameterization is a bijection") {
  Rng rng(20);
  for (int trial = 0; trial < 100; ++trial) {
    Vec raw(1 + rng.below(6));
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw[i] = rng.uniform(-4.0, 4.0);
    const auto thr = parameterize_thresholds(raw);
    thr.validate();
    const Vec back = threshold_raw_from_cuts(thr.cuts);
    CHECK((back - raw).cwiseAbs().maxCoeff() <= 1e-9);

    const auto thr2 = random_thresholds(rng, 2 + rng.below(5));
    const auto round = parameterize_thresholds(threshold_raw_from_cuts(thr2.cuts));
    CHECK((round.cuts - thr2.cuts).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("error paths") {
  Vec bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(make_thresholds(bad), ConfigError);
  const auto thr = make_thresholds(Vec::Zero(1));
  CHECK_THROWS_AS(ordinal_log_prob(0, 0.0, thr), DataError);
  CHECK_THROWS_AS(ordinal_log_prob(3, 0.0, thr), DataError);
  CHECK_THROWS_AS(parse_link("cloglog"), ConfigError);
}

TEST_CASE("degenerate single-level scale") {
  const OrdinalThresholds thr{Vec(0)};
  CHECK(ordinal_probs(1.3, thr)[0] == 1.0);
  CHECK(ordinal_log_prob(1, -4.0, thr) == 0.0);
}

TEST_CASE("probit deep tail stays finite") {
  Vec cuts(2);
  cuts << -1.0, 1.0;
  const auto thr = make_thresholds(cuts);
  const double lp = ordinal_log_prob(3, -45.0, thr, Link::Probit);
  CHECK(std::isfinite(lp));
  CHECK(lp < -900.0);
}

}  // TEST_SUITE
