#pragma once

#include <mixnet/core.hpp>

#include <vector>

namespace mixnet {

struct ParzenEstimate {
  double mean_ll = 0.0;
  double std_err = 0.0;
  double sigma = 0.0;
};

/// Mean over test rows of log((1/S) sum_s N(x | y_s, sigma^2 I)).
ParzenEstimate parzen_log_likelihood(const Matrix& generated, const Matrix& test, double sigma);

/// The grid value with the highest validation mean log-likelihood (first on ties).
double select_parzen_sigma(const Matrix& generated, const Matrix& validation, const std::vector<double>& grid);

struct Neighbor {
  Index index = 0;
  double distance = 0.0;
};

/// Nearest training row for every generated row (lowest index on ties).
std::vector<Neighbor> nearest_neighbor_audit(const Matrix& generated, const Matrix& train);

}  // namespace mixnet
