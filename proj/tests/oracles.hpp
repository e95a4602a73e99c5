#pragma once

// Independent reference implementations used only by the tests: plain loops,
// no Eigen expressions shared with the library.

#include <mixnet/mlp.hpp>

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using mixnet::Index;
using mixnet::Matrix;

inline double sqdist(const Matrix& a, Index i, const Matrix& b, Index j) {
  double s = 0;
  for (Index d = 0; d < a.cols(); ++d) {
    const double t = a(i, d) - b(j, d);
    s += t * t;
  }
  return s;
}

inline double kernel(double d2, const std::vector<double>& sigmas) {
  double s = 0;
  for (double sg : sigmas) s += std::exp(-d2 / (2 * sg * sg));
  return s / static_cast<double>(sigmas.size());
}

/// Unbiased MMD^2 by direct summation over index pairs.
inline double mmd2(const Matrix& x, const Matrix& y, const std::vector<double>& sigmas) {
  const Index m = x.rows(), n = y.rows();
  double xx = 0, yy = 0, xy = 0;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      if (i != j) xx += kernel(sqdist(x, i, x, j), sigmas);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) yy += kernel(sqdist(y, i, y, j), sigmas);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) xy += kernel(sqdist(x, i, y, j), sigmas);
  return xx / double(m * (m - 1)) + yy / double(n * (n - 1)) - 2 * xy / double(m * n);
}

/// Central differences of f with respect to every entry of v (restored afterwards).
inline Matrix central_diff(Matrix& v, const std::function<double()>& f, double h) {
  Matrix g(v.rows(), v.cols());
  for (Index r = 0; r < v.rows(); ++r)
    for (Index c = 0; c < v.cols(); ++c) {
      const double keep = v(r, c);
      v(r, c) = keep + h;
      const double fp = f();
      v(r, c) = keep - h;
      const double fm = f();
      v(r, c) = keep;
      g(r, c) = (fp - fm) / (2 * h);
    }
  return g;
}

/// max |a - b| over the largest magnitude in b.
inline double scaled_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double relu(double v) { return v > 0 ? v : 0; }

/// Scalar-loop forward pass of a ReLU/sigmoid network.
inline Matrix forward(const mixnet::MlpNetwork& net, const Matrix& z) {
  Matrix out(z.rows(), net.spec.output_size());
  for (Index r = 0; r < z.rows(); ++r) {
    std::vector<double> a(static_cast<std::size_t>(z.cols()));
    for (Index c = 0; c < z.cols(); ++c) a[static_cast<std::size_t>(c)] = z(r, c);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const Matrix& w = net.weights[l];
      std::vector<double> nxt(static_cast<std::size_t>(w.rows()));
      for (Index o = 0; o < w.rows(); ++o) {
        double s = net.biases[l](o);
        for (Index i = 0; i < w.cols(); ++i) s += w(o, i) * a[static_cast<std::size_t>(i)];
        const bool last = l + 1 == net.num_layers();
        if (!last)
          s = relu(s);
        else if (net.spec.output == mixnet::OutputActivation::Sigmoid)
          s = 1 / (1 + std::exp(-s));
        nxt[static_cast<std::size_t>(o)] = s;
      }
      a = std::move(nxt);
    }
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = a[static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace oracle
