#pragma once

// Gaussian kernel (mean over a list of bandwidths), the unbiased squared MMD
// estimator and its gradient with respect to the second sample set.

#include <mixnet/core.hpp>

#include <algorithm>
#include <vector>

namespace mixnet {

struct KernelConfig {
  /// k(x, y) = mean over sigma of exp(-|x - y|^2 / (2 sigma^2)).
  std::vector<double> bandwidths{1.0};

  void validate() const {
    if (bandwidths.empty()) throw std::invalid_argument("KernelConfig: no bandwidths");
    for (double s : bandwidths)
      if (!(s > 0) || !std::isfinite(s))
        throw std::invalid_argument("KernelConfig: bandwidths must be positive and finite");
  }

  static KernelConfig single(double sigma) { return KernelConfig{{sigma}}; }

  /// {0.25s, 0.5s, s, 2s, 4s}.
  static KernelConfig multiscale(double s) {
    return KernelConfig{{0.25 * s, 0.5 * s, s, 2.0 * s, 4.0 * s}};
  }

  bool operator==(const KernelConfig&) const = default;
};

template <typename Scalar>
Scalar kernel_from_sqdist(Scalar d2, const KernelConfig& cfg) {
  Scalar s = 0;
  for (double sigma : cfg.bandwidths) s += std::exp(-d2 / Scalar(2 * sigma * sigma));
  return s / static_cast<Scalar>(cfg.bandwidths.size());
}

template <typename DX, typename DY>
typename DX::Scalar gaussian_kernel(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                                    const KernelConfig& cfg) {
  if (x.size() != y.size()) throw std::invalid_argument("gaussian_kernel: dimension mismatch");
  const auto d2 = (x.derived().reshaped() - y.derived().reshaped()).squaredNorm();
  return kernel_from_sqdist(d2, cfg);
}

namespace detail {

/// Squared distances between the columns of two D x n matrices.
template <typename Scalar>
MatrixX<Scalar> column_sqdist(const MatrixX<Scalar>& at, const MatrixX<Scalar>& bt) {
  MatrixX<Scalar> d2(at.cols(), bt.cols());
  const Index dim = at.rows();
  for (Index j = 0; j < bt.cols(); ++j) {
    const Scalar* b = bt.col(j).data();
    for (Index i = 0; i < at.cols(); ++i) {
      const Scalar* a = at.col(i).data();
      Scalar s = 0;
      for (Index k = 0; k < dim; ++k) {
        const Scalar t = a[k] - b[k];
        s += t * t;
      }
      d2(i, j) = s;
    }
  }
  return d2;
}

template <typename DX, typename DY>
void check_mmd_args(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                    const KernelConfig& cfg) {
  cfg.validate();
  if (x.rows() < 2 || y.rows() < 2)
    throw std::invalid_argument("mmd2: each sample set needs at least 2 rows");
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd2: dimension mismatch");
}

}  // namespace detail

/// Kernel values between every row of `a` and every row of `b`.
template <typename DA, typename DB>
MatrixX<typename DA::Scalar> kernel_matrix(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                                           const KernelConfig& cfg) {
  using Scalar = typename DA::Scalar;
  if (a.cols() != b.cols()) throw std::invalid_argument("kernel_matrix: dimension mismatch");
  MatrixX<Scalar> d2 = detail::column_sqdist<Scalar>(a.transpose(), b.transpose());
  return d2.unaryExpr([&cfg](Scalar v) { return kernel_from_sqdist(v, cfg); });
}

/// Unbiased squared MMD between sample sets X (M x D) and Y (N x D).
/// When `grad_y` is given it receives d MMD^2 / dY (N x D).
template <typename DX, typename DY>
typename DX::Scalar mmd2_unbiased(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                                  const KernelConfig& cfg,
                                  MatrixX<typename DX::Scalar>* grad_y = nullptr) {
  using Scalar = typename DX::Scalar;
  detail::check_mmd_args(x, y, cfg);
  const Index m = x.rows();
  const Index n = y.rows();
  const MatrixX<Scalar> xt = x.transpose();
  const MatrixX<Scalar> yt = y.transpose();
  const MatrixX<Scalar> dxx = detail::column_sqdist(xt, xt);
  const MatrixX<Scalar> dyy = detail::column_sqdist(yt, yt);
  const MatrixX<Scalar> dxy = detail::column_sqdist(xt, yt);

  const Scalar nb = static_cast<Scalar>(cfg.bandwidths.size());
  const Scalar cxx = Scalar(1) / (Scalar(m) * Scalar(m - 1));
  const Scalar cyy = Scalar(1) / (Scalar(n) * Scalar(n - 1));
  const Scalar cxy = Scalar(2) / (Scalar(m) * Scalar(n));

  // Kernel sums, accumulated one bandwidth at a time.
  MatrixX<Scalar> kxx = MatrixX<Scalar>::Zero(m, m);
  MatrixX<Scalar> kyy = MatrixX<Scalar>::Zero(n, n);
  MatrixX<Scalar> kxy = MatrixX<Scalar>::Zero(m, n);
  if (grad_y) grad_y->setZero(n, x.cols());
  MatrixX<Scalar> wyy, wxy;
  for (double sigma : cfg.bandwidths) {
    const Scalar inv = Scalar(1) / Scalar(2 * sigma * sigma);
    const Scalar inv_s2 = Scalar(1) / Scalar(sigma * sigma);
    kxx.array() += (-dxx.array() * inv).exp();
    wyy = (-dyy.array() * inv).exp();
    wxy = (-dxy.array() * inv).exp();
    kyy += wyy;
    kxy += wxy;
    if (grad_y) {
      // d k(a, y_i) / d y_i = k(a, y_i) (a - y_i) / sigma^2
      wyy.diagonal().setZero();
      wyy *= inv_s2;
      wxy *= inv_s2;
      const VectorX<Scalar> ryy = wyy.rowwise().sum();
      const VectorX<Scalar> cxys = wxy.colwise().sum().transpose();
      MatrixX<Scalar> gyy = wyy * y;
      gyy -= ryy.asDiagonal() * y;
      MatrixX<Scalar> gxy = wxy.transpose() * x;
      gxy -= cxys.asDiagonal() * y;
      *grad_y += (Scalar(2) * cyy / nb) * gyy - (cxy / nb) * gxy;
    }
  }
  kxx /= nb;
  kyy /= nb;
  kxy /= nb;

  const Scalar sxx = kxx.sum() - kxx.trace();
  const Scalar syy = kyy.sum() - kyy.trace();
  return cxx * sxx + cyy * syy - cxy * kxy.sum();
}

template <typename DX, typename DY>
MatrixX<typename DX::Scalar> mmd2_grad_y(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                                         const KernelConfig& cfg) {
  MatrixX<typename DX::Scalar> g;
  mmd2_unbiased(x, y, cfg, &g);
  return g;
}

/// Median Euclidean distance over all pairs of (at most `max_points`
/// randomly chosen) rows.
template <typename Derived>
double median_pairwise_distance(const Eigen::MatrixBase<Derived>& x, Index max_points, Rng& rng) {
  const Index n = x.rows();
  if (n < 2) throw std::invalid_argument("median_pairwise_distance: need at least 2 rows");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (n > max_points) {
    // Partial Fisher-Yates.
    for (Index i = 0; i < max_points; ++i) {
      const Index j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(max_points));
  }
  std::vector<double> d;
  d.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      d.push_back(std::sqrt(static_cast<double>((x.row(idx[a]) - x.row(idx[b])).squaredNorm())));
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return med;
}

}  // namespace mixnet
