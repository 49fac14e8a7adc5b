#include "drvc/datamodel.hpp"
#include "drvc/delta_select.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace drvc;

namespace {

// Quantile of Monte Carlo quadratic forms, written from scratch: Z symmetric
// with independent N(0, sigma_ii sigma_jj + sigma_ij^2) entries on and above
// the diagonal, weighted by the inverse variances.
double delta_reference(const Matrix& x, double alpha, int draws, std::uint64_t seed) {
  const auto n = x.rows(), d = x.cols();
  const Matrix s = x.transpose() * x / double(n - 1);
  std::mt19937 rng(static_cast<unsigned>(seed));
  std::normal_distribution<double> normal;
  std::vector<double> r;
  for (int m = 0; m < draws; ++m) {
    double q = 0;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i; j < d; ++j) {
        const double z = std::sqrt(s(i, i) * s(j, j) + s(i, j) * s(i, j)) * normal(rng);
        // z_ij and z_ji both enter, weighted by their column's inverse variance
        q += i == j ? z * z / s(i, i) : z * z * (1 / s(i, i) + 1 / s(j, j));
      }
    r.push_back(q / 4 / double(n));
  }
  std::sort(r.begin(), r.end());
  const double pos = (1 - alpha) * (draws - 1);
  const auto lo = std::size_t(pos);
  return r[lo] + (pos - double(lo)) * (r[std::min(lo + 1, r.size() - 1)] - r[lo]);
}

}  // namespace

TEST_SUITE("delta_select") {
  TEST_CASE("Wishart diagonal has variance 2 on the diagonal of a standardized panel") {
    std::mt19937_64 rng(1);
    const auto p = standardize(oracle::random_matrix(rng, 40, 5));
    const auto u = estimate_upsilon(p, UpsilonMethod::WishartDiagonal);
    CHECK(u.values.rows() == 5);
    for (Index i = 0; i < 5; ++i) CHECK(u.values(i, i) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK((u.values.array() >= 0).all());
    CHECK((u.values - u.values.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("Wishart off-diagonal tends to one for independent columns") {
    std::mt19937_64 rng(2);
    const auto p = standardize(oracle::random_matrix(rng, 100000, 2));
    const auto u = estimate_upsilon(p, UpsilonMethod::WishartDiagonal);
    const double rho = p.values().col(0).dot(p.values().col(1)) / (p.n() - 1.0);
    CHECK(u.values(0, 1) == doctest::Approx(1 + rho * rho).epsilon(1e-12));
    CHECK(std::abs(u.values(0, 1) - 1) < 1e-3);
  }

  TEST_CASE("full sample covariance by hand") {
    Matrix raw(3, 2);
    raw << 1, 2, -1, 0, 0, -2;
    const auto p = standardize(raw);
    const Matrix& x = p.values();
    const auto u = estimate_upsilon(p, UpsilonMethod::FullSampleCovariance);
    REQUIRE(u.values.rows() == 4);
    // vec(x_t x_t^T) in column-major order: (x0^2, x0 x1, x1 x0, x1^2)
    Matrix g(3, 4);
    for (int t = 0; t < 3; ++t)
      g.row(t) << x(t, 0) * x(t, 0), x(t, 0) * x(t, 1), x(t, 1) * x(t, 0), x(t, 1) * x(t, 1);
    Matrix expect(4, 4);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double ma = g.col(a).mean(), mb = g.col(b).mean();
        double s = 0;
        for (int t = 0; t < 3; ++t) s += (g(t, a) - ma) * (g(t, b) - mb);
        expect(a, b) = s / 2;
      }
    CHECK((u.values - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(u.values).eigenvalues().minCoeff() > -1e-8);
  }

  TEST_CASE("full method respects the memory cap") {
    std::mt19937_64 rng(3);
    const auto p = standardize(oracle::random_matrix(rng, 20, 10));
    try {
      estimate_upsilon(p, UpsilonMethod::FullSampleCovariance, 1000);
      FAIL("expected MemoryCapExceeded");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MemoryCapExceeded);
    }
  }

  TEST_CASE("sampler edge cases") {
    UpsilonEstimate zero{UpsilonMethod::WishartDiagonal, 3, Matrix::Zero(3, 3)};
    const Vector r = sample_rbar(zero, Vector::Ones(3), 50, 1);
    CHECK(r.isZero(0));

    UpsilonEstimate bad{UpsilonMethod::WishartDiagonal, 2, Matrix::Ones(2, 2)};
    bad.values(0, 1) = -1;
    CHECK_THROWS_AS(sample_rbar(bad, Vector::Ones(2), 5, 1), Error);
    bad.values(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sample_rbar(bad, Vector::Ones(2), 5, 1), Error);

    UpsilonEstimate indefinite{UpsilonMethod::FullSampleCovariance, 2, -Matrix::Identity(4, 4)};
    try {
      sample_rbar(indefinite, Vector::Ones(2), 5, 1);
      FAIL("expected InvalidUpsilon");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidUpsilon);
    }
  }

  TEST_CASE("sampler is deterministic given the seed") {
    const auto u = wishart_upsilon(Matrix::Identity(4, 4));
    const Vector a = sample_rbar(u, Vector::Ones(4), 200, 42);
    const Vector b = sample_rbar(u, Vector::Ones(4), 200, 42);
    CHECK(a == b);
    CHECK(a != sample_rbar(u, Vector::Ones(4), 200, 43));
  }

  TEST_CASE("sampler mean in the identity case") {
    const auto u = wishart_upsilon(Matrix::Identity(2, 2));
    const Index M = 100000;
    const Vector r = sample_rbar(u, Vector::Ones(2), M, 7);
    const double mean = r.mean();
    const double se = std::sqrt((r.array() - mean).square().sum() / (M - 1.0) / double(M));
    CHECK(std::abs(mean - 1.5) < 3 * se);
  }

  TEST_CASE("full and diagonal samplers agree when upsilon is diagonal") {
    // a diagonal d^2 x d^2 upsilon that is symmetric under (i,j) <-> (j,i)
    const Index d = 3;
    Matrix full = Matrix::Zero(d * d, d * d);
    const Matrix wish = wishart_upsilon(Matrix::Identity(d, d)).values;
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) {
        full(i + d * j, i + d * j) = wish(i, j);
        full(i + d * j, j + d * i) = wish(i, j);
      }
    UpsilonEstimate a{UpsilonMethod::FullSampleCovariance, d, full};
    const Index M = 40000;
    const double ma = sample_rbar(a, Vector::Ones(d), M, 1).mean();
    const double mb = sample_rbar(wishart_upsilon(Matrix::Identity(d, d)), Vector::Ones(d), M, 2).mean();
    // E = (1/4) sum_ij upsilon_ij = (1/4)(3 * 2 + 6 * 1)
    CHECK(mb == doctest::Approx(3.0).epsilon(0.02));
    CHECK(ma == doctest::Approx(3.0).epsilon(0.03));
  }

  TEST_CASE("quantile interpolation") {
    CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
    CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
    CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
    CHECK(quantile({10, 20}, 0.25) == doctest::Approx(12.5));
    CHECK_THROWS_AS(quantile({}, 0.5), Error);
    CHECK_THROWS_AS(quantile({1.0}, 1.5), Error);
  }

  TEST_CASE("delta scales as 1 / n for fixed samples") {
    std::mt19937_64 rng(4);
    Vector rbar = oracle::random_matrix(rng, 500, 1).cwiseAbs();
    const auto a = delta_from_samples(rbar, 100, 0.05);
    const auto b = delta_from_samples(rbar, 200, 0.05);
    CHECK(b.delta == doctest::Approx(a.delta / 2).epsilon(1e-14));
    const auto low = delta_from_samples(rbar, 100, 0.999);
    std::vector<double> s(rbar.data(), rbar.data() + rbar.size());
    CHECK(low.delta <= quantile(s, 0.01) / 100);
    CHECK(low.delta >= rbar.minCoeff() / 100);
    CHECK(a.probs.size() == a.quantiles.size());
    for (std::size_t i = 1; i < a.quantiles.size(); ++i) CHECK(a.quantiles[i] >= a.quantiles[i - 1]);
  }

  TEST_CASE("select_delta is deterministic and monotone in alpha") {
    BlockModelParams bp;
    bp.K = 3;
    bp.d = 30;
    bp.n = 60;
    bp.seed = 8;
    const auto s = generate_block_model(bp);
    DeltaOptions o;
    const auto a = select_delta(s.panel, o, 5);
    const auto b = select_delta(s.panel, o, 5);
    CHECK(a.delta == b.delta);
    CHECK(a.quantiles == b.quantiles);
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha : {0.01, 0.05, 0.1}) {
      o.alpha = alpha;
      const double d = select_delta(s.panel, o, 5).delta;
      CHECK(d >= 0);
      CHECK(d <= prev);
      prev = d;
    }
    o.alpha = 0;
    CHECK_THROWS_AS(select_delta(s.panel, o, 5), Error);
  }

  TEST_CASE("select_delta agrees with an independent implementation") {
    std::mt19937_64 rng(6);
    const auto p = standardize(oracle::random_matrix(rng, 250, 2));
    DeltaOptions o;
    o.M = 200000;
    const double ours = select_delta(p, o, 9).delta;
    const double ref = delta_reference(p.values(), 0.05, 200000, 10);
    CHECK(ours == doctest::Approx(ref).epsilon(0.02));
  }

  TEST_CASE("method names") {
    CHECK(upsilon_method_from_string("a") == UpsilonMethod::FullSampleCovariance);
    CHECK(upsilon_method_from_string("wishart") == UpsilonMethod::WishartDiagonal);
    CHECK(to_string(UpsilonMethod::WishartDiagonal) == "b");
    CHECK_THROWS_AS(upsilon_method_from_string("c"), Error);
  }
}
