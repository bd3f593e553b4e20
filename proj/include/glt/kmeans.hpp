#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace glt {

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // D x k, one centroid per column
  bool converged = false;
  int iterations = 0;
  // Sum of squared distances after each Lloyd assignment step.
  std::vector<double> objective;
};

struct KMeansOptions {
  int max_iters = 100;
  double tol = 1e-6;  // stop once the largest centroid shift falls below this
};

// Lloyd's algorithm from k-means++ seeding. `points` holds one point per
// column. A cluster that empties is reseeded with the point farthest from its
// current centroid. Deterministic for a given seed.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    KMeansOptions opts = {});

double kmeans_objective(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                        const std::vector<int>& labels);

}  // namespace glt
