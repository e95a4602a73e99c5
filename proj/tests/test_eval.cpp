#include <mixnet/eval.hpp>

#include <doctest.h>

#include <cmath>

using namespace mixnet;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

// Direct density evaluation, no log-sum-exp.
double naive_parzen(const Matrix& gen, const Matrix& test, double sigma) {
  const double d = static_cast<double>(test.cols());
  const double norm = std::pow(2 * M_PI * sigma * sigma, -d / 2);
  double total = 0;
  for (Index t = 0; t < test.rows(); ++t) {
    double p = 0;
    for (Index s = 0; s < gen.rows(); ++s) {
      double d2 = 0;
      for (Index k = 0; k < test.cols(); ++k) d2 += (test(t, k) - gen(s, k)) * (test(t, k) - gen(s, k));
      p += norm * std::exp(-d2 / (2 * sigma * sigma));
    }
    total += std::log(p / static_cast<double>(gen.rows()));
  }
  return total / static_cast<double>(test.rows());
}

}  // namespace

TEST_CASE("parzen closed forms") {
  const Matrix zero = Matrix::Zero(1, 1);
  CHECK(parzen_log_likelihood(zero, zero, 1.0).mean_ll == doctest::Approx(-0.5 * std::log(2 * M_PI)).epsilon(1e-15));
  for (double d : {0.5, 1.0, 3.0}) {
    const Matrix t = Matrix::Constant(1, 1, d);
    CHECK(parzen_log_likelihood(zero, t, 1.0).mean_ll ==
          doctest::Approx(-0.5 * std::log(2 * M_PI) - d * d / 2).epsilon(1e-15));
  }
}

TEST_CASE("parzen matches the naive density") {
  Rng rng = make_rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix gen = random_matrix(20, 3, rng), test = random_matrix(10, 3, rng);
    for (double s : {0.5, 1.0, 2.0}) {
      const double ref = naive_parzen(gen, test, s);
      CHECK(std::abs(parzen_log_likelihood(gen, test, s).mean_ll - ref) <= 1e-10 * std::abs(ref));
    }
  }
}

TEST_CASE("parzen invariances") {
  Rng rng = make_rng(4);
  const Matrix gen = random_matrix(15, 2, rng), test = random_matrix(8, 2, rng);
  const double base = parzen_log_likelihood(gen, test, 0.7).mean_ll;
  Matrix rev = gen.colwise().reverse();
  CHECK(parzen_log_likelihood(rev, test, 0.7).mean_ll == doctest::Approx(base).epsilon(1e-13));
  Matrix twice(30, 2);
  twice << gen, gen;
  CHECK(parzen_log_likelihood(twice, test, 0.7).mean_ll == doctest::Approx(base).epsilon(1e-13));
  CHECK_THROWS_AS(parzen_log_likelihood(gen, test, 0.0), std::invalid_argument);
}

TEST_CASE("select_parzen_sigma") {
  Rng rng = make_rng(5);
  const Matrix gen = random_matrix(30, 2, rng);
  CHECK(select_parzen_sigma(gen, gen, {0.3}) == 0.3);

  const std::vector<double> grid{0.1, 1, 10};
  double best = 0, best_ll = -INFINITY;
  for (double s : grid) {
    const double ll = naive_parzen(gen, gen, s);
    if (ll > best_ll) best_ll = ll, best = s;
  }
  CHECK(select_parzen_sigma(gen, gen, grid) == best);
  CHECK(select_parzen_sigma(gen, gen, {0.1, 1, 10, 1000}) == best);
}

TEST_CASE("nearest_neighbor_audit") {
  Rng rng = make_rng(6);
  const Matrix train = random_matrix(25, 3, rng);
  const Matrix sub = train.topRows(5);
  for (const Neighbor& n : nearest_neighbor_audit(sub, train)) CHECK(n.distance == 0.0);

  Matrix two(2, 1), mid(1, 1);
  two << -1, 1;
  mid << 0;
  CHECK(nearest_neighbor_audit(mid, two)[0].index == 0);

  const Matrix gen = random_matrix(12, 3, rng);
  const std::vector<Neighbor> nn = nearest_neighbor_audit(gen, train);
  for (Index g = 0; g < gen.rows(); ++g) {
    Index bi = 0;
    double bd = INFINITY;
    for (Index i = 0; i < train.rows(); ++i) {
      double d2 = 0;
      for (Index k = 0; k < 3; ++k) d2 += (gen(g, k) - train(i, k)) * (gen(g, k) - train(i, k));
      if (d2 < bd) bd = d2, bi = i;
    }
    CHECK(nn[static_cast<std::size_t>(g)].index == bi);
    CHECK(nn[static_cast<std::size_t>(g)].distance == doctest::Approx(std::sqrt(bd)).epsilon(1e-14));
  }
}
