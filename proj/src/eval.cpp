#include <mixnet/eval.hpp>

#include <limits>

namespace mixnet {

ParzenEstimate parzen_log_likelihood(const Matrix& generated, const Matrix& test, double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw std::invalid_argument("parzen: sigma must be positive");
  if (generated.rows() < 1 || test.rows() < 1) throw std::invalid_argument("parzen: empty sample set");
  if (generated.cols() != test.cols()) throw std::invalid_argument("parzen: dimension mismatch");

  const double d = static_cast<double>(test.cols());
  const double log_norm = -0.5 * d * std::log(2.0 * M_PI * sigma * sigma) -
                          std::log(static_cast<double>(generated.rows()));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const Matrix gt = generated.transpose();

  Vector ll(test.rows());
  Vector e(generated.rows());
  for (Index t = 0; t < test.rows(); ++t) {
    const Vector x = test.row(t).transpose();
    e = -(gt.colwise() - x).colwise().squaredNorm().transpose() * inv;
    const double m = e.maxCoeff();
    ll(t) = m + std::log((e.array() - m).exp().sum()) + log_norm;
  }
  ParzenEstimate est;
  est.sigma = sigma;
  est.mean_ll = ll.mean();
  if (ll.size() > 1) {
    const double var = (ll.array() - est.mean_ll).square().sum() / static_cast<double>(ll.size() - 1);
    est.std_err = std::sqrt(var / static_cast<double>(ll.size()));
  }
  return est;
}

double select_parzen_sigma(const Matrix& generated, const Matrix& validation, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("select_parzen_sigma: empty grid");
  double best = grid.front();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (double s : grid) {
    const double ll = parzen_log_likelihood(generated, validation, s).mean_ll;
    if (ll > best_ll) {
      best_ll = ll;
      best = s;
    }
  }
  return best;
}

std::vector<Neighbor> nearest_neighbor_audit(const Matrix& generated, const Matrix& train) {
  if (generated.rows() < 1 || train.rows() < 1) throw std::invalid_argument("nearest_neighbor_audit: empty set");
  if (generated.cols() != train.cols()) throw std::invalid_argument("nearest_neighbor_audit: dimension mismatch");
  const Matrix tt = train.transpose();
  std::vector<Neighbor> out(static_cast<std::size_t>(generated.rows()));
  for (Index g = 0; g < generated.rows(); ++g) {
    const Vector y = generated.row(g).transpose();
    const Vector d2 = (tt.colwise() - y).colwise().squaredNorm().transpose();
    Index best = 0;
    for (Index i = 1; i < d2.size(); ++i)
      if (d2(i) < d2(best)) best = i;
    out[static_cast<std::size_t>(g)] = {best, std::sqrt(d2(best))};
  }
  return out;
}

}  // namespace mixnet
