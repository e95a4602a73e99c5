#include <mixnet/clustering.hpp>

#include <algorithm>
#include <limits>
#include <map>
#include <unordered_map>

namespace mixnet {

namespace {

Matrix kmeanspp_seed(const Matrix& x, int k, Rng& rng) {
  const Index n = x.rows();
  Matrix c(k, x.cols());
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  Index first = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
  c.row(0) = x.row(first);
  taken[static_cast<std::size_t>(first)] = true;
  Vector d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Index pick = -1;
    if (total > 0) {
      double u = uniform01(rng) * total;
      for (Index i = 0; i < n; ++i) {
        if (d2(i) <= 0) continue;
        pick = i;
        u -= d2(i);
        if (u < 0) break;
      }
    } else {
      // Remaining points coincide with chosen centers; take an unused index.
      std::vector<Index> free;
      for (Index i = 0; i < n; ++i)
        if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
      pick = free[uniform_index(rng, free.size())];
    }
    c.row(j) = x.row(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

// Returns inertia; fills assignments and per-point squared distances.
double assign(const Matrix& x, const Matrix& c, std::vector<int>& a, Vector& dist) {
  double inertia = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < c.rows(); ++j) {
      const double d = (x.row(i) - c.row(j)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    a[static_cast<std::size_t>(i)] = best;
    dist(i) = bd;
    inertia += bd;
  }
  return inertia;
}

void update_centroids(const Matrix& x, const std::vector<int>& a, Matrix& c) {
  Vector counts = Vector::Zero(c.rows());
  Matrix sums = Matrix::Zero(c.rows(), c.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    sums.row(a[static_cast<std::size_t>(i)]) += x.row(i);
    counts(a[static_cast<std::size_t>(i)]) += 1;
  }
  for (Index j = 0; j < c.rows(); ++j)
    if (counts(j) > 0) c.row(j) = sums.row(j) / counts(j);
}

}  // namespace

double partition_inertia(const Matrix& x, const std::vector<int>& assignments, int k) {
  Matrix c = Matrix::Zero(k, x.cols());
  update_centroids(x, assignments, c);
  double s = 0;
  for (Index i = 0; i < x.rows(); ++i) s += (x.row(i) - c.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

HardClustering kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw std::invalid_argument("kmeans: K must be >= 1");
  if (x.rows() < k) throw std::invalid_argument("kmeans: fewer points than clusters");
  if (max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");

  Rng rng = make_rng(seed, 0x6b6d);
  HardClustering out;
  out.centroids = kmeanspp_seed(x, k, rng);
  const auto n = static_cast<std::size_t>(x.rows());
  out.assignments.assign(n, -1);
  std::vector<int> prev;
  Vector dist(x.rows());

  for (int it = 0; it < max_iter; ++it) {
    prev = out.assignments;
    double inertia = assign(x, out.centroids, out.assignments, dist);

    // Repair empty clusters; each repair moves one point onto a new centroid.
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (int a : out.assignments) ++counts[static_cast<std::size_t>(a)];
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Index far = -1;
      for (Index i = 0; i < x.rows(); ++i) {
        // only steal from clusters that keep at least one point
        if (counts[static_cast<std::size_t>(out.assignments[static_cast<std::size_t>(i)])] > 1 &&
            (far < 0 || dist(i) > dist(far)))
          far = i;
      }
      --counts[static_cast<std::size_t>(out.assignments[static_cast<std::size_t>(far)])];
      out.assignments[static_cast<std::size_t>(far)] = j;
      ++counts[static_cast<std::size_t>(j)];
      inertia -= dist(far);
      dist(far) = 0;
      out.centroids.row(j) = x.row(far);
    }
    out.inertia_history.push_back(inertia);
    if (out.assignments == prev) break;
    update_centroids(x, out.assignments, out.centroids);
  }
  update_centroids(x, out.assignments, out.centroids);
  out.inertia = partition_inertia(x, out.assignments, k);
  return out;
}

int knee_select_k(const Matrix& x, int k_min, int k_max, std::uint64_t seed,
                  std::vector<double>* inertia_curve) {
  if (k_min < 1 || k_max < k_min || k_max > x.rows())
    throw std::invalid_argument("knee_select_k: need 1 <= k_min <= k_max <= N");
  std::vector<double> curve;
  for (int k = k_min; k <= k_max; ++k) curve.push_back(kmeans(x, k, seed).inertia);
  if (inertia_curve) *inertia_curve = curve;
  if (k_min == k_max) return k_min;

  // Perpendicular distance to the chord is the vertical gap times a constant,
  // so the vertical gap is enough for the argmax.
  const double span = static_cast<double>(k_max - k_min);
  int best = k_min;
  double best_gap = 0;
  for (int k = k_min; k <= k_max; ++k) {
    const double t = (k - k_min) / span;
    const double chord = curve.front() + t * (curve.back() - curve.front());
    const double gap = chord - curve[static_cast<std::size_t>(k - k_min)];
    if (gap > best_gap) {
      best_gap = gap;
      best = k;
    }
  }
  return best;
}

double clustering_purity(const std::vector<int>& assignments, const std::vector<int>& labels) {
  if (assignments.size() != labels.size())
    throw std::invalid_argument("clustering_purity: assignments and labels differ in length");
  if (assignments.empty()) throw std::invalid_argument("clustering_purity: empty input");
  std::map<int, std::unordered_map<int, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[assignments[i]][labels[i]];
  std::size_t hit = 0;
  for (const auto& [cluster, classes] : table) {
    std::size_t best = 0;
    for (const auto& [label, count] : classes) best = std::max(best, count);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace mixnet
