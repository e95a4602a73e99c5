#pragma once

#include <mixnet/core.hpp>

#include <vector>

namespace mixnet {

struct HardClustering {
  std::vector<int> assignments;  // length N, values in [0, K)
  Matrix centroids;              // K x D
  double inertia = 0.0;
  /// Inertia after every assignment pass; non-increasing.
  std::vector<double> inertia_history;

  int num_clusters() const { return static_cast<int>(centroids.rows()); }
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// with the point farthest from its centroid.
HardClustering kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iter = 300);

/// Inertia of a given partition with centroids at the cluster means.
double partition_inertia(const Matrix& x, const std::vector<int>& assignments, int k);

/// Knee of the k-means inertia curve over [k_min, k_max]: the k whose point
/// lies farthest below the chord joining the two ends of the curve.
int knee_select_k(const Matrix& x, int k_min, int k_max, std::uint64_t seed,
                  std::vector<double>* inertia_curve = nullptr);

/// (1/N) * sum over clusters of the size of the majority class in it.
double clustering_purity(const std::vector<int>& assignments, const std::vector<int>& labels);

}  // namespace mixnet
