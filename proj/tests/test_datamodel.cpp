#include "drvc/datamodel.hpp"
#include "drvc/io.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <sstream>

using namespace drvc;

namespace {

// Five variables, three factors, clusters {1,2,3} and {4,5}.
Matrix example_factor_cov() {
  Matrix f(3, 3);
  f << 1, 0.1, 0.5, 0.1, 1, 0.5, 0.5, 0.5, 1;
  return f;
}

Matrix example_loadings(double a11, double a12) {
  Matrix a(5, 3);
  a << a11, a12, 0, 0.7, 0.3, 0, 0.4, 0.6, 0, 0, 0, 0.8, 0, 0, 0.7;
  return a;
}

BlockModelSpec example_spec(double a11, double a12) {
  BlockModelSpec s;
  s.K = 2;
  s.cluster_sizes = {3, 2};
  s.factor_counts = {2, 1};
  s.loadings = example_loadings(a11, a12);
  s.factor_cov = example_factor_cov();
  s.noise_var = Vector::Constant(5, 0.1);
  s.common_loading = Vector::Zero(5);
  s.factor_pool_ids = {0, 1, 2};
  return s;
}

}  // namespace

TEST_SUITE("datamodel") {
  TEST_CASE("standardize two-point column") {
    Matrix raw(2, 2);
    raw << -1, 3, 1, 5;
    const auto p = standardize(raw);
    CHECK(p.values()(0, 0) == doctest::Approx(-1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(p.values()(1, 0) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(p.column_ids() == std::vector<std::string>{"x1", "x2"});
  }

  TEST_CASE("standardize is idempotent and matches the oracle") {
    std::mt19937_64 rng(1);
    const Matrix raw = oracle::random_matrix(rng, 30, 7, 3.0).array() + 2.0;
    const auto once = standardize(raw);
    const auto twice = standardize(once.values());
    CHECK((once.values() - twice.values()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((once.values() - oracle::standardize(raw)).cwiseAbs().maxCoeff() < 1e-12);
    for (Index j = 0; j < once.d(); ++j) {
      CHECK(std::abs(once.values().col(j).mean()) < 1e-10);
      CHECK(std::abs(once.values().col(j).squaredNorm() / (once.n() - 1) - 1) < 1e-8);
    }
  }

  TEST_CASE("standardize rejects bad input") {
    Matrix raw(3, 2);
    raw << 0, 1, 0, 2, 0, 4;
    try {
      standardize(raw);
      FAIL("expected ZeroVarianceColumn");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ZeroVarianceColumn);
      CHECK(std::string(e.what()).find("column 0") != std::string::npos);
    }
    raw(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(standardize(raw), Error);
    CHECK_THROWS_AS(standardize(Matrix::Ones(1, 3)), Error);
  }

  TEST_CASE("adopt checks the panel invariants") {
    std::mt19937_64 rng(2);
    const Matrix x = oracle::standardize(oracle::random_matrix(rng, 10, 3));
    CHECK_NOTHROW(StandardizedPanel::adopt(x));
    CHECK_THROWS_AS(StandardizedPanel::adopt(x * 2.0), Error);
  }

  TEST_CASE("partition bookkeeping") {
    const auto p = Partition::from_labels({7, 7, 3, 9, 3});
    CHECK(p.labels() == std::vector<int>{1, 1, 2, 3, 2});
    CHECK(p.k() == 3);
    CHECK_FALSE(p.degenerate());
    CHECK(Partition({1, 1, 1}, 2).degenerate());
    CHECK(p.cluster_sizes() == std::vector<Index>{2, 2, 1});
    CHECK_THROWS_AS(Partition({0, 1}, 2), Error);
  }

  TEST_CASE("coefficient matrix forces a zero diagonal") {
    Matrix m = Matrix::Ones(3, 3);
    CoefficientMatrix b(m);
    CHECK(b.values().diagonal().isZero(0));
    CHECK(b.complement().diagonal().isOnes());
    m(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(CoefficientMatrix{m}, Error);
  }

  TEST_CASE("generator is deterministic and satisfies its invariants") {
    BlockModelParams p;
    p.K = 4;
    p.d = 40;
    p.n = 30;
    p.beta_h_sq = {0.0, 0.5};
    p.noise_var = {0.0, 0.5};
    p.seed = 11;
    const auto a = generate_block_model(p);
    const auto b = generate_block_model(p);
    CHECK(a.panel.values() == b.panel.values());
    CHECK(a.truth == b.truth);
    CHECK_FALSE(a.truth.degenerate());
    CHECK_NOTHROW(a.spec.validate(a.truth.labels()));
    Index total = 0;
    for (std::size_t k = 0; k < a.spec.cluster_sizes.size(); ++k) {
      total += a.spec.cluster_sizes[k];
      CHECK(a.spec.factor_counts[k] >= 1);
      CHECK(a.spec.factor_counts[k] <= a.spec.cluster_sizes[k] - 1);
    }
    CHECK(total == p.d);
    for (Index i = 0; i < p.d; ++i) {
      const double norm = a.spec.loadings.row(i).squaredNorm() +
                          a.spec.common_loading(i) * a.spec.common_loading(i);
      CHECK(std::abs(norm - 1) < 1e-12);
    }
    p.seed = 12;
    CHECK(generate_block_model(p).panel.values() != a.panel.values());
  }

  TEST_CASE("single-factor noiseless clusters are collinear") {
    BlockModelParams p;
    p.K = 3;
    p.d = 12;
    p.n = 20;
    p.factors_per_cluster = 1;
    p.noise_var = {0.0, 0.0};
    p.seed = 5;
    const auto s = generate_block_model(p);
    const Matrix& x = s.panel.values();
    for (Index i = 0; i < p.d; ++i)
      for (Index j = 0; j < p.d; ++j)
        if (s.truth[i] == s.truth[j]) {
          const double r = x.col(i).dot(x.col(j)) / (p.n - 1.0);
          CHECK(std::abs(std::abs(r) - 1) < 1e-10);
        }
  }

  TEST_CASE("infeasible fixed factor count") {
    BlockModelParams p;
    p.K = 2;
    p.d = 6;
    p.n = 50;
    p.factors_per_cluster = 10;
    CHECK_THROWS_AS(generate_block_model(p), Error);
  }

  TEST_CASE("sample covariance of the raw draw approaches the population covariance") {
    BlockModelParams p;
    p.K = 25;
    p.d = 500;
    p.n = 250;
    p.noise_var = {0.1, 0.1};
    p.seed = 3;
    const auto s = generate_block_model(p);
    const Matrix sigma = population_covariance(s.spec).matrix;
    const Matrix centered = s.raw.rowwise() - s.raw.colwise().mean();
    const Matrix sample = centered.transpose() * centered / (p.n - 1.0);
    // Each entry has sampling sd sqrt((s_ii s_jj + s_ij^2) / n), close to
    // 1 / sqrt(n) here; over 125k entries a few land past 4 / sqrt(n) by chance.
    const double band = 4 / std::sqrt(double(p.n));
    Index outside = 0, count = 0;
    double z2 = 0;
    for (Index i = 0; i < p.d; ++i)
      for (Index j = i; j < p.d; ++j, ++count) {
        const double e = sample(i, j) - sigma(i, j);
        outside += std::abs(e) > band;
        z2 += e * e * p.n / (sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j));
      }
    CHECK(double(outside) / double(count) < 1e-3);
    CHECK(z2 / double(count) == doctest::Approx(1.0).epsilon(0.1));
  }

  TEST_CASE("population covariance of the five-variable example") {
    const auto spec = example_spec(0.4, 0.6);
    const Matrix sigma = population_covariance(spec).matrix;
    // independent recomputation
    const Matrix direct = spec.loadings * spec.factor_cov * spec.loadings.transpose() +
                          0.1 * Matrix::Identity(5, 5);
    CHECK((sigma - direct).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(sigma).eigenvalues().minCoeff() >= -1e-10);
    // rows 1 and 3 of A coincide, so do the corresponding variances
    CHECK(sigma(0, 0) == doctest::Approx(sigma(2, 2)));
    CHECK(sigma(3, 4) == doctest::Approx(0.56));
    CHECK(sigma(0, 3) == doctest::Approx(0.4));
  }

  TEST_CASE("scaling the noise only moves the diagonal") {
    auto spec = example_spec(0.4, 0.6);
    const Matrix base = population_covariance(spec).matrix;
    spec.noise_var *= 3.0;
    const Matrix scaled = population_covariance(spec).matrix;
    Matrix diff = scaled - base;
    CHECK((diff.diagonal().array() - 0.2).abs().maxCoeff() < 1e-14);
    diff.diagonal().setZero();
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("identity-pattern spec gives identity covariance") {
    BlockModelSpec s;
    s.K = 2;
    s.cluster_sizes = {2, 2};
    s.factor_counts = {1, 1};
    s.loadings = Matrix::Zero(4, 2);
    s.loadings(0, 0) = s.loadings(1, 0) = s.loadings(2, 1) = s.loadings(3, 1) = 1.0;
    s.factor_cov = Matrix::Identity(2, 2);
    s.noise_var = Vector::Zero(4);
    s.common_loading = Vector::Zero(4);
    const Matrix sigma = population_covariance(s).matrix;
    CHECK(sigma(0, 0) == 1.0);
    CHECK(sigma(0, 1) == 1.0);
    CHECK(sigma(0, 2) == 0.0);
    s.noise_var.resize(3);
    CHECK_THROWS_AS(population_covariance(s), Error);
  }

  TEST_CASE("population nodewise regression") {
    Matrix s(2, 2);
    s << 1, 0.3, 0.3, 1;
    const Matrix b = population_nodewise({s, CovarianceKind::Population}).values();
    CHECK(b(0, 1) == doctest::Approx(0.3));
    CHECK(b(1, 0) == doctest::Approx(0.3));
    CHECK(b(0, 0) == 0.0);

    const Matrix diag = Vector(Eigen::Vector3d(1, 2, 3)).asDiagonal();
    CHECK(population_nodewise({diag, CovarianceKind::Population}).values().isZero(0));

    const Matrix singular = Matrix::Ones(3, 3);
    CHECK_THROWS_AS(population_nodewise({singular, CovarianceKind::Population}), Error);
  }

  TEST_CASE("population nodewise satisfies the normal equations") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 5; ++rep) {
      const Matrix g = oracle::random_matrix(rng, 12, 6);
      const Matrix sigma = g.transpose() * g / 12.0 + 0.1 * Matrix::Identity(6, 6);
      const Matrix b = population_nodewise({sigma, CovarianceKind::Population}).values();
      CHECK(b.diagonal().isZero(0));
      for (Index i = 0; i < 6; ++i) {
        Vector r = sigma.col(i) - sigma * b.col(i);
        r(i) = 0;
        CHECK(r.cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }

  TEST_CASE("csv and json round trips") {
    std::mt19937_64 rng(4);
    const Matrix m = oracle::random_matrix(rng, 4, 3);
    std::stringstream ss;
    io::write_csv(ss, m, {"a", "b", "c"}, "note");
    const auto back = io::read_csv(ss);
    CHECK(back.header == std::vector<std::string>{"a", "b", "c"});
    CHECK(back.values == m);

    BlockModelParams p;
    p.K = 2;
    p.d = 8;
    p.n = 10;
    p.seed = 1;
    const auto s = generate_block_model(p);
    const auto spec = io::block_model_from_json(io::to_json(s.spec));
    CHECK(spec.loadings == s.spec.loadings);
    CHECK(spec.seed == 1);
    CHECK(io::partition_from_json(io::to_json(s.truth)) == s.truth);

    std::stringstream bad("a,b\n1,2\n3\n");
    CHECK_THROWS_AS(io::read_csv(bad), Error);
  }
}
