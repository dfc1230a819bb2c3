#pragma once

#include <cstdint>
#include <vector>

#include "ipgp/common.hpp"

namespace ipgp {

struct MetricReport {
  double accuracy = 0.0;
  double mean_log_lik = 0.0;
  long count = 0;
};

/// Accuracy of the argmax level (ties broken toward the lower level) and the
/// mean log probability of the realized level. `probs` holds one categorical
/// distribution per row.
MetricReport accuracy_and_ll(const Mat& probs, const std::vector<int>& truth);

/// Correlation matrix distance 1 - tr(R1 R2) / (|R1|_F |R2|_F): zero for
/// matrices equal up to scale, one for orthogonal ones.
double cmd(const Mat& r1, const Mat& r2);

struct ClusterResult {
  std::vector<int> assignments;
  std::vector<Mat> centroids;     // unit diagonal
  std::vector<Mat> residuals;     // filled by the pipeline, not by kmeans_cmd
  double total_within = 0.0;      // summed CMD to the assigned centroid
  int iterations = 0;
  std::vector<double> objective_trace;  // within-cluster total per Lloyd iteration
};

/// Lloyd iteration under CMD: assign to the closest centroid, update each
/// centroid as the elementwise member mean renormalized to unit diagonal.
/// The update is rolled back if it would increase the objective, so the
/// within-cluster total is non-increasing across iterations. Best of
/// `restarts` seeded initializations.
ClusterResult kmeans_cmd(const std::vector<Mat>& matrices, int k, int restarts,
                         std::uint64_t seed);

/// Residual correlation block-averaged at trait level:
/// entry (g, h) is the mean of (centroid - population) over item pairs with
/// traits (g, h).
Mat residual_profile(const Mat& centroid, const Mat& population,
                     const std::vector<int>& item_trait, int num_traits);

}  // namespace ipgp
