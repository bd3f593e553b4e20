#include "glt/kmeans.hpp"

#include <limits>
#include <random>
#include <stdexcept>

#include "glt/common.hpp"

namespace glt {

namespace {

// Index of the nearest centroid; ties go to the lowest index.
int nearest(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& p, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
    const double d = (centroids.col(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

Eigen::MatrixXd plus_plus_seeding(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const auto n = points.cols();
  Eigen::MatrixXd centroids(points.rows(), k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.col(0) = points.col(first(rng));
  std::vector<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.col(i) - centroids.col(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      // All remaining mass sits on existing centroids (duplicate points).
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    } else {
      std::discrete_distribution<Eigen::Index> dist(d2.begin(), d2.end());
      pick = dist(rng);
    }
    centroids.col(c) = points.col(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points.col(i) - centroids.col(c)).squaredNorm());
  }
  return centroids;
}

}  // namespace

double kmeans_objective(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                        const std::vector<int>& labels) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    sum += (points.col(i) - centroids.col(labels[i])).squaredNorm();
  return sum;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    KMeansOptions opts) {
  const auto n = points.cols();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= number of points");
  if (!points.allFinite()) throw std::invalid_argument("kmeans: non-finite features");

  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_seeding(points, k, rng);
  r.labels.assign(n, 0);
  std::vector<double> dist(n);

  for (int it = 0; it < opts.max_iters; ++it) {
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      r.labels[i] = nearest(r.centroids, points.col(i), &dist[i]);
      objective += dist[i];
    }
    r.objective.push_back(objective);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(r.labels[i]) += points.col(i);
      ++counts[r.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // Empty cluster: move it onto the worst-served point.
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      const int old = r.labels[far];
      sums.col(old) -= points.col(far);
      --counts[old];
      sums.col(c) = points.col(far);
      counts[c] = 1;
      r.labels[far] = c;
      dist[far] = 0.0;
    }

    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      const Eigen::VectorXd next = sums.col(c) / counts[c];
      shift = std::max(shift, (next - r.centroids.col(c)).norm());
      r.centroids.col(c) = next;
    }
    r.iterations = it + 1;
    if (shift < opts.tol) {
      r.converged = true;
      break;
    }
  }
  // Final labels consistent with the returned centroids.
  for (Eigen::Index i = 0; i < n; ++i) r.labels[i] = nearest(r.centroids, points.col(i), nullptr);
  return r;
}

}  // namespace glt
