#include "drvc/clusterer.hpp"
#include "drvc/datamodel.hpp"
#include "drvc/io.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

using namespace drvc;

namespace {

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int k) {
  std::uniform_int_distribution<int> pick(1, k);
  std::vector<int> out(n);
  for (auto& l : out) l = pick(rng);
  return out;
}

Matrix two_block(Index a, Index b) {
  Matrix c = Matrix::Zero(a + b, a + b);
  c.topLeftCorner(a, a).setOnes();
  c.bottomRightCorner(b, b).setOnes();
  c.diagonal().setZero();
  return c;
}

}  // namespace

TEST_SUITE("clusterer") {
  TEST_CASE("symmetrize") {
    CHECK(symmetrize(Matrix::Zero(3, 3)).isZero(0));
    Matrix b(2, 2);
    b << 0, 1, -1, 0;
    Matrix expect(2, 2);
    expect << 0, 2, 2, 0;
    CHECK(symmetrize(b) == expect);
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 10; ++rep) {
      Matrix r = oracle::random_matrix(rng, 6, 6);
      r.diagonal().setZero();
      const Matrix c = symmetrize(r);
      CHECK(c == symmetrize(Matrix(r.transpose())));
      CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(c.minCoeff() >= 0);
      CHECK(symmetrize(CoefficientMatrix(r)).values == c);
    }
  }

  TEST_CASE("population pipeline separates the five-variable example") {
    Matrix f(3, 3);
    f << 1, 0.1, 0.5, 0.1, 1, 0.5, 0.5, 0.5, 1;
    Matrix a(5, 3);
    a << 0.4, 0.6, 0, 0.7, 0.3, 0, 0.4, 0.6, 0, 0, 0, 0.8, 0, 0, 0.7;
    const Matrix sigma = a * f * a.transpose() + 0.1 * Matrix::Identity(5, 5);
    const Matrix c = symmetrize(population_nodewise({sigma, CovarianceKind::Population})).values;
    const std::vector<int> g{1, 1, 1, 2, 2};
    double within = std::numeric_limits<double>::infinity(), across = 0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        if (i == j) continue;
        if (g[i] == g[j]) within = std::min(within, c(i, j));
        else across = std::max(across, c(i, j));
      }
    CHECK(within > across);
    // cross-check against per-column least squares on the population moments
    for (int j = 0; j < 5; ++j) {
      Matrix s_oo(4, 4);
      Vector s_oj(4);
      for (int k = 0, r = 0; k < 5; ++k) {
        if (k == j) continue;
        for (int l = 0, q = 0; l < 5; ++l)
          if (l != j) s_oo(r, q++) = sigma(k, l);
        s_oj(r++) = sigma(k, j);
      }
      const Vector coef = s_oo.ldlt().solve(s_oj);
      const Matrix b = population_nodewise({sigma, CovarianceKind::Population}).values();
      for (int k = 0, r = 0; k < 5; ++k)
        if (k != j) CHECK(b(k, j) == doctest::Approx(coef(r++)).epsilon(1e-12));
    }
  }

  TEST_CASE("spectral clustering of disconnected blocks") {
    const auto p = spectral_cluster({two_block(4, 3)}, 2, 1);
    CHECK(p == Partition::from_labels({1, 1, 1, 1, 2, 2, 2}));
    CHECK(spectral_cluster({two_block(4, 3)}, 1, 1).labels() == std::vector<int>(7, 1));
    CHECK_THROWS_AS(spectral_cluster({two_block(2, 2)}, 5, 1), Error);
  }

  TEST_CASE("spectral clustering is permutation equivariant and deterministic") {
    BlockModelParams bp;
    bp.K = 4;
    bp.d = 24;
    bp.n = 80;
    bp.seed = 3;
    const auto s = generate_block_model(bp);
    const Matrix x = s.panel.values();
    const Matrix c = symmetrize(Matrix(x.transpose() * x / (bp.n - 1.0)));
    const SimilarityMatrix sim{c};
    const auto base = spectral_cluster(sim, 4, 9);
    CHECK(spectral_cluster(sim, 4, 9) == base);

    std::mt19937_64 rng(4);
    std::vector<int> perm(24);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix cp(24, 24);
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j) cp(i, j) = c(perm[i], perm[j]);
    const auto moved = spectral_cluster({cp}, 4, 9);
    std::vector<int> back(24);
    for (int i = 0; i < 24; ++i) back[std::size_t(perm[i])] = moved[i];
    CHECK(ami(Partition::from_labels(back), base) == doctest::Approx(1.0));
  }

  TEST_CASE("isolated nodes do not break the normalization") {
    Matrix c = two_block(3, 3);
    c.conservativeResize(7, 7);
    c.row(6).setZero();
    c.col(6).setZero();
    const auto p = spectral_cluster({c}, 3, 2);
    CHECK(p.k() == 3);
    CHECK_FALSE(p.degenerate());
    CHECK(p[0] == p[1]);
    CHECK(p[3] == p[5]);
    CHECK(p[0] != p[3]);
  }

  TEST_CASE("k-means finds separated groups") {
    Matrix pts(6, 2);
    pts << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
    const auto r = kmeans(pts, 2, 1);
    CHECK(r.labels[0] == r.labels[1]);
    CHECK(r.labels[3] == r.labels[5]);
    CHECK(r.labels[0] != r.labels[3]);
    CHECK(r.inertia == doctest::Approx(4 * 0.01 * 2.0 / 3.0 + 0.0).epsilon(1e-9));
  }

  TEST_CASE("ami fixed cases") {
    const auto p = Partition::from_labels({1, 1, 2, 2, 3, 3});
    const auto q = Partition::from_labels({1, 2, 1, 2, 3, 3});
    CHECK(ami(p, p) == doctest::Approx(1.0));
    CHECK(ami(p, Partition({2, 2, 1, 1, 3, 3}, 3)) == doctest::Approx(1.0));
    // reference value from an independent package
    CHECK(ami(p, q) == doctest::Approx(0.1666666666666672).epsilon(1e-12));
    CHECK(ami(p, q) == doctest::Approx(oracle::ami_direct(p.labels(), q.labels())).epsilon(1e-10));
    const Partition one({1, 1, 1}, 1);
    CHECK(ami(one, one) == 1.0);
    CHECK(ami(one, Partition::from_labels({1, 2, 3})) == 0.0);
    CHECK_THROWS_AS(ami(p, one), Error);
  }

  TEST_CASE("ami symmetry, bound and chance level") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 30; ++rep) {
      const auto a = Partition::from_labels(random_labels(rng, 12, 3));
      const auto b = Partition::from_labels(random_labels(rng, 12, 4));
      CHECK(ami(a, b) == doctest::Approx(ami(b, a)).epsilon(1e-12));
      CHECK(ami(a, b) <= 1 + 1e-12);
    }
    const auto p = Partition::from_labels(random_labels(rng, 40, 4));
    double sum = 0;
    std::vector<int> shuffled = p.labels();
    for (int rep = 0; rep < 200; ++rep) {
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      sum += ami(p, Partition::from_labels(shuffled));
    }
    CHECK(std::abs(sum / 200) < 0.1);
  }

  TEST_CASE("heatmap export") {
    const auto dir = std::filesystem::temp_directory_path() / "drvc_heatmap_test";
    std::filesystem::create_directories(dir);
    Matrix c(3, 3);
    c << 0, 0.2, 0.9, 0.2, 0, 0.1, 0.9, 0.1, 0;
    const Partition p({1, 2, 1}, 2);
    export_heatmap(dir / "h.csv", {c}, p);
    const auto m = io::read_csv(dir / "h.csv");
    CHECK(m.header == std::vector<std::string>{"v1", "v3", "v2"});
    CHECK(m.values.diagonal().isConstant(2.0));
    CHECK(m.values(0, 1) == 0.9);
    const auto side = io::read_json(dir / "h.csv.json");
    CHECK(side.at("order") == io::json({0, 2, 1}));
    std::filesystem::remove_all(dir);
  }
}
