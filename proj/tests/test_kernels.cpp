#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "ipgp/kernels.hpp"
#include "ipgp/rng.hpp"

using namespace ipgp;

TEST_SUITE("kernels") {

TEST_CASE("rbf time kernel matches the scalar formula") {
  {
    Vec t(1);
    t << 0.0;
    const Mat k = rbf_time_kernel(t, 5.0);
    CHECK(k.rows() == 1);
    CHECK(k(0, 0) == 1.0);
  }
  for (const double ell : {0.5, 2.0, 17.0}) {
    Vec t(2);
    t << 0.0, ell;
    const Mat k = rbf_time_kernel(t, ell);
    CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(k(1, 0) == k(0, 1));
    CHECK(k(0, 0) == 1.0);
  }
  {
    Vec t(3);
    t << 0.0, 1.0, 2.0;
    const Mat k = rbf_time_kernel(t, 10.0);
    // direct scalar evaluation oracle
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        const double d = t[a] - t[b];
        CHECK(k(a, b) == doctest::Approx(std::exp(-d * d / 100.0)).epsilon(1e-15));
      }
    }
    CHECK(k(0, 2) == doctest::Approx(std::exp(-0.04)).epsilon(1e-15));
  }
}

TEST_CASE("rbf rejects non-positive lengthscales") {
  Vec t(2);
  t << 0.0, 1.0;
  CHECK_THROWS_AS(rbf_time_kernel(t, 0.0), ConfigError);
  CHECK_THROWS_AS(rbf_time_kernel(t, -3.0), ConfigError);
}

TEST_CASE("rbf values stay in (0, 1] with equality only on the diagonal") {
  Rng rng(41);
  Vec t(6);
  for (int i = 0; i < 6; ++i) t[i] = 10.0 * i + rng.uniform();
  const Mat k = rbf_time_kernel(t, rng.uniform(0.5, 40.0));
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) {
      CHECK(k(a, b) > 0.0);
      if (a == b) {
        CHECK(k(a, b) == 1.0);
      } else {
        CHECK(k(a, b) < 1.0);
      }
    }
  }
}

TEST_CASE("idiographic task kernel examples") {
  // noise only: identity
  LoadingSet noise_only{Mat::Zero(2, 3), Mat::Zero(1, 3), Vec::Ones(3)};
  CHECK(task_kernel_idiographic(noise_only, 0).isApprox(Mat::Identity(3, 3), 1e-14));

  // J=2, K=1 hand multiply: W'W + diag(v)
  LoadingSet hand;
  hand.w_pop = Mat(1, 2);
  hand.w_pop << 1.0, 2.0;
  hand.w_ind = Mat::Zero(1, 2);
  hand.noise = Vec::Constant(2, 0.5);
  Mat expected(2, 2);
  expected << 1.5, 2.0, 2.0, 4.5;
  CHECK(task_kernel_idiographic(hand, 0).isApprox(expected, 1e-14));
}

TEST_CASE("nomothetic kernel drops only the idiographic term") {
  LoadingSet zero_pop{Mat::Zero(1, 2), Mat::Zero(1, 2), Vec(2)};
  zero_pop.noise << 2.0, 3.0;
  CHECK(task_kernel_nomothetic(zero_pop) == Mat(Vec(zero_pop.noise).asDiagonal()));

  Rng rng(7);
  LoadingSet set;
  set.w_pop = Mat(3, 4);
  set.w_ind = Mat(2, 4);
  set.noise = Vec(4);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 4; ++j) set.w_pop(k, j) = rng.normal();
  }
  for (int u = 0; u < 2; ++u) {
    for (int j = 0; j < 4; ++j) set.w_ind(u, j) = rng.normal();
  }
  for (int j = 0; j < 4; ++j) set.noise[j] = 0.1 + rng.uniform();

  // with w_i = 0 both constructions agree
  LoadingSet zero_idio = set;
  zero_idio.w_ind.setZero();
  CHECK(task_kernel_idiographic(zero_idio, 1).isApprox(task_kernel_nomothetic(set), 1e-14));

  // the difference is exactly the rank-1 outer product
  const Mat diff = task_kernel_idiographic(set, 1) - task_kernel_nomothetic(set);
  const Vec w = set.w_ind.row(1).transpose();
  CHECK(diff.isApprox(w * w.transpose(), 1e-12));
}

TEST_CASE("task kernel dimension mismatches are structural errors") {
  CHECK_THROWS_AS(task_kernel(Mat::Zero(2, 3), Vec(), Vec::Ones(4)), StructuralError);
  CHECK_THROWS_AS(task_kernel(Mat(0, 4), Vec::Zero(3), Vec::Ones(4)), StructuralError);
  LoadingSet set{Mat::Zero(1, 2), Mat::Zero(1, 2), Vec::Ones(2)};
  CHECK_THROWS_AS(task_kernel_idiographic(set, 5), StructuralError);
  CHECK_THROWS_AS(task_kernel(Mat(0, 2), Vec(), Vec::Constant(2, -1.0)), ConfigError);
}

TEST_CASE("task kernels are PSD over 1000 random loading sets") {
  Rng rng(123);
  double min_eig = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + rng.below(5);
    const int j = 1 + rng.below(10);
    Mat w_pop(k, j);
    Mat w_ind(1, j);
    Vec noise(j);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < j; ++b) w_pop(a, b) = 3.0 * rng.normal();
    }
    for (int b = 0; b < j; ++b) {
      w_ind(0, b) = rng.normal();
      noise[b] = rng.uniform();  // zero noise allowed
    }
    const Mat kernel = task_kernel(w_pop, w_ind.row(0).transpose(), noise);
    Eigen::SelfAdjointEigenSolver<Mat> eig(kernel);
    min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
  }
  CHECK(min_eig >= -1e-8);
}

TEST_CASE("joint covariance dense form") {
  // identity task factor: dense equals the time factor
  Vec t(3);
  t << 0.0, 1.0, 3.0;
  const Mat time_cov = rbf_time_kernel(t, 2.0);
  const JointCovariance single = joint_covariance(Mat::Ones(1, 1), time_cov);
  CHECK(single.dense() == time_cov);

  // diagonal factors: diagonal of pairwise products
  Mat dtask = Vec(Vec::LinSpaced(2, 2.0, 5.0)).asDiagonal();
  Mat dtime = Vec(Vec::LinSpaced(3, 1.0, 3.0)).asDiagonal();
  const Mat dense = joint_covariance(dtask, dtime).dense();
  for (int a = 0; a < dense.rows(); ++a) {
    for (int b = 0; b < dense.cols(); ++b) {
      const double expect = a == b ? dtask(a / 3, a / 3) * dtime(a % 3, a % 3) : 0.0;
      CHECK(dense(a, b) == expect);
    }
  }
}

TEST_CASE("two-task block assembly equals the J=2 dense form") {
  Rng rng(5);
  Vec w1(3), w2(3), t(2);
  for (int i = 0; i < 3; ++i) {
    w1[i] = rng.normal();
    w2[i] = rng.normal();
  }
  t << 0.0, 1.5;
  const Mat time_cov = rbf_time_kernel(t, 3.0);

  Mat task(2, 2);
  task << w1.dot(w1), w1.dot(w2), w2.dot(w1), w2.dot(w2);

  // explicit four-block layout
  Mat blocks(4, 4);
  blocks.block(0, 0, 2, 2) = task(0, 0) * time_cov;
  blocks.block(0, 2, 2, 2) = task(0, 1) * time_cov;
  blocks.block(2, 0, 2, 2) = task(1, 0) * time_cov;
  blocks.block(2, 2, 2, 2) = task(1, 1) * time_cov;

  CHECK(joint_covariance(task, time_cov).dense() == blocks);

  // and the task factor agrees with the kernel constructor (no noise)
  Mat w_pop(3, 2);
  w_pop.col(0) = w1;
  w_pop.col(1) = w2;
  CHECK(task.isApprox(task_kernel(w_pop, Vec(), Vec::Zero(2)), 1e-14));
}

TEST_CASE("kronecker identity on random shapes") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int j = 1 + rng.below(3);
    const int steps = 1 + rng.below(4);
    Mat a(j, j);
    for (int r = 0; r < j; ++r) {
      for (int c = r; c < j; ++c) {
        a(r, c) = rng.normal();
        a(c, r) = a(r, c);
      }
    }
    Vec t(steps);
    for (int s = 0; s < steps; ++s) t[s] = 2.0 * s + rng.uniform();
    const Mat time_cov = rbf_time_kernel(t, 1.0 + rng.uniform());
    const JointCovariance cov = joint_covariance(a, time_cov);
    const Mat dense = cov.dense();
    for (int r = 0; r < dense.rows(); ++r) {
      for (int c = 0; c < dense.cols(); ++c) {
        const double expect = a(r / steps, c / steps) * time_cov(r % steps, c % steps);
        CHECK(std::abs(dense(r, c) - expect) <= 1e-12);
        CHECK(std::abs(dense(r, c) - cov.entry(r / steps, r % steps, c / steps, c % steps)) ==
              0.0);
      }
    }
  }
}

TEST_CASE("joint covariance rejects asymmetric factors") {
  Mat bad(2, 2);
  bad << 1.0, 0.5, 0.2, 1.0;
  CHECK_THROWS_AS(joint_covariance(bad, Mat::Identity(2, 2)), StructuralError);
  CHECK_THROWS_AS(joint_covariance(Mat::Identity(2, 2), bad), StructuralError);
}

}  // TEST_SUITE
