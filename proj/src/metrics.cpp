#include "ipgp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ipgp/parallel.hpp"
#include "ipgp/rng.hpp"

namespace ipgp {

namespace {

constexpr int kMaxLloydIterations = 200;

struct LloydRun {
  std::vector<int> assignments;
  std::vector<Mat> centroids;
  double total = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::vector<double> objective_trace;
};

Mat renormalize_diagonal(const Mat& m) {
  Vec d(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!(m(i, i) > 0.0)) {
      throw NumericalError("kmeans_cmd: centroid diagonal entry is not positive");
    }
    d[i] = 1.0 / std::sqrt(m(i, i));
  }
  return d.asDiagonal() * m * d.asDiagonal();
}

// assign every matrix to its closest centroid; returns the summed distance
double assign_all(const std::vector<Mat>& matrices, const std::vector<Mat>& centroids,
                  std::vector<int>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    int best = 0;
    double best_d = cmd(matrices[i], centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
      const double d = cmd(matrices[i], centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignments[i] = best;
    total += best_d;
  }
  return total;
}

LloydRun lloyd(const std::vector<Mat>& matrices, int k, std::uint64_t seed) {
  // k distinct seeds from the input set
  Rng rng(seed);
  std::vector<int> order(matrices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);

  LloydRun run;
  run.centroids.reserve(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) run.centroids.push_back(matrices[order[c]]);
  run.assignments.assign(matrices.size(), -1);

  run.total = assign_all(matrices, run.centroids, run.assignments);
  run.objective_trace.push_back(run.total);
  for (int it = 0; it < kMaxLloydIterations; ++it) {
    run.iterations = it + 1;

    // centroid update: elementwise member mean, renormalized to unit diagonal
    std::vector<Mat> updated(run.centroids.size());
    std::vector<int> counts(run.centroids.size(), 0);
    for (std::size_t c = 0; c < updated.size(); ++c) {
      updated[c] = Mat::Zero(matrices[0].rows(), matrices[0].cols());
    }
    for (std::size_t i = 0; i < matrices.size(); ++i) {
      updated[run.assignments[i]] += matrices[i];
      ++counts[run.assignments[i]];
    }
    for (std::size_t c = 0; c < updated.size(); ++c) {
      if (counts[c] == 0) {
        // reseed an empty cluster from the farthest point
        int farthest = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < matrices.size(); ++i) {
          const double d = cmd(matrices[i], run.centroids[run.assignments[i]]);
          if (d > far_d) {
            far_d = d;
            farthest = static_cast<int>(i);
          }
        }
        updated[c] = matrices[farthest];
      } else {
        updated[c] = renormalize_diagonal(updated[c] / static_cast<double>(counts[c]));
      }
    }

    std::vector<int> new_assignments(matrices.size(), -1);
    const double new_total = assign_all(matrices, updated, new_assignments);
    if (new_total > run.total) break;  // keep the previous, better state
    run.centroids = std::move(updated);
    run.total = new_total;
    run.objective_trace.push_back(new_total);
    const bool stable = new_assignments == run.assignments;
    run.assignments = std::move(new_assignments);
    if (stable) break;
  }
  return run;
}

}  // namespace

MetricReport accuracy_and_ll(const Mat& probs, const std::vector<int>& truth) {
  if (probs.rows() != static_cast<Eigen::Index>(truth.size())) {
    throw StructuralError("accuracy_and_ll: prediction and truth counts differ");
  }
  MetricReport report;
  report.count = static_cast<long>(truth.size());
  if (truth.empty()) return report;
  long hits = 0;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int arg = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, arg)) arg = static_cast<int>(c);  // ties -> lower level
    }
    const int level = truth[static_cast<std::size_t>(i)];
    if (level < 1 || level > probs.cols()) {
      throw DataError("accuracy_and_ll: truth level " + std::to_string(level) +
                      " outside prediction support");
    }
    if (arg + 1 == level) ++hits;
    ll += std::log(probs(i, level - 1));
  }
  report.accuracy = static_cast<double>(hits) / static_cast<double>(truth.size());
  report.mean_log_lik = ll / static_cast<double>(truth.size());
  return report;
}

double cmd(const Mat& r1, const Mat& r2) {
  if (r1.rows() != r2.rows() || r1.cols() != r2.cols() || r1.rows() != r1.cols()) {
    throw StructuralError("cmd: matrices must be square and of equal shape");
  }
  const double n1 = r1.norm();
  const double n2 = r2.norm();
  if (!(n1 > 0.0) || !(n2 > 0.0)) {
    throw NumericalError("cmd: zero-norm input matrix");
  }
  return 1.0 - r1.cwiseProduct(r2).sum() / (n1 * n2);
}

ClusterResult kmeans_cmd(const std::vector<Mat>& matrices, int k, int restarts,
                         std::uint64_t seed) {
  if (matrices.empty()) throw ConfigError("kmeans_cmd: no matrices given");
  if (k < 1 || k > static_cast<int>(matrices.size())) {
    throw ConfigError("kmeans_cmd: cluster count " + std::to_string(k) +
                      " outside 1.." + std::to_string(matrices.size()));
  }
  if (restarts < 1) throw ConfigError("kmeans_cmd: need at least one restart");

  std::vector<LloydRun> runs(static_cast<std::size_t>(restarts));
#pragma omp parallel for schedule(static)
  for (int r = 0; r < restarts; ++r) {
    runs[static_cast<std::size_t>(r)] =
        lloyd(matrices, k, derive_seed(seed, static_cast<std::uint64_t>(r)));
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].total < runs[best].total) best = r;
  }
  ClusterResult result;
  result.assignments = std::move(runs[best].assignments);
  result.centroids = std::move(runs[best].centroids);
  result.total_within = runs[best].total;
  result.iterations = runs[best].iterations;
  result.objective_trace = std::move(runs[best].objective_trace);
  return result;
}

Mat residual_profile(const Mat& centroid, const Mat& population,
                     const std::vector<int>& item_trait, int num_traits) {
  if (centroid.rows() != population.rows() || centroid.cols() != population.cols()) {
    throw StructuralError("residual_profile: centroid and population shapes differ");
  }
  if (static_cast<Eigen::Index>(item_trait.size()) != centroid.rows()) {
    throw StructuralError("residual_profile: trait map does not cover the items");
  }
  const Mat diff = centroid - population;
  Mat sums = Mat::Zero(num_traits, num_traits);
  Mat counts = Mat::Zero(num_traits, num_traits);
  for (Eigen::Index a = 0; a < diff.rows(); ++a) {
    for (Eigen::Index b = 0; b < diff.cols(); ++b) {
      const int g = item_trait[static_cast<std::size_t>(a)];
      const int h = item_trait[static_cast<std::size_t>(b)];
      if (g < 0 || g >= num_traits || h < 0 || h >= num_traits) {
        throw StructuralError("residual_profile: trait index outside range");
      }
      sums(g, h) += diff(a, b);
      counts(g, h) += 1.0;
    }
  }
  for (Eigen::Index g = 0; g < num_traits; ++g) {
    for (Eigen::Index h = 0; h < num_traits; ++h) {
      if (counts(g, h) > 0.0) sums(g, h) /= counts(g, h);
    }
  }
  return sums;
}

}  // namespace ipgp
