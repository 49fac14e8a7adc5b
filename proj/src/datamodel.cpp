#include "drvc/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace drvc {

StandardizedPanel standardize(const Matrix& raw, std::vector<std::string> ids) {
  const Index n = raw.rows();
  const Index d = raw.cols();
  if (n < 2 || d < 2) throw Error(ErrorKind::InvalidData, "panel needs n >= 2 and d >= 2");
  if (!raw.allFinite()) throw Error(ErrorKind::InvalidData, "non-finite entry in input");
  Matrix out(n, d);
  for (Index j = 0; j < d; ++j) {
    const double mean = raw.col(j).mean();
    Vector centered = raw.col(j).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
    if (!(sd > 0.0) || sd <= 1e-14 * std::max(1.0, std::abs(mean)))
      throw Error(ErrorKind::ZeroVarianceColumn, "column " + std::to_string(j));
    out.col(j) = centered / sd;
  }
  return StandardizedPanel(std::move(out), std::move(ids));
}

namespace {

std::vector<Index> draw_cluster_sizes(std::mt19937_64& rng, Index d, int k) {
  // Sequential binomial decomposition of Multinomial(d; 1/K, ..., 1/K).
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  Index remaining = d;
  for (int c = 0; c < k - 1; ++c) {
    const double p = 1.0 / static_cast<double>(k - c);
    std::binomial_distribution<long long> bin(remaining, p);
    sizes[static_cast<std::size_t>(c)] = bin(rng);
    remaining -= sizes[static_cast<std::size_t>(c)];
  }
  sizes.back() = remaining;
  return sizes;
}

double draw_uniform(std::mt19937_64& rng, const UniformRange& r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

GeneratedSample generate_block_model(const BlockModelParams& p) {
  if (p.K < 1 || p.d < p.K)
    throw Error(ErrorKind::InvalidSpec, "need 1 <= K <= d");
  if (p.n < 2) throw Error(ErrorKind::InvalidSpec, "need n >= 2");
  if (p.beta_h_sq.lo < 0 || p.beta_h_sq.hi > 1 || p.noise_var.lo < 0)
    throw Error(ErrorKind::InvalidSpec, "beta_H^2 must lie in [0, 1] and noise variance >= 0");
  if (p.factors_per_cluster && (*p.factors_per_cluster < 1 || *p.factors_per_cluster >= p.n))
    throw Error(ErrorKind::InvalidSpec, "factor count must satisfy 1 <= d_k <= n - 1");

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Index> sizes;
  constexpr int kMaxResample = 100;
  bool ok = false;
  for (int attempt = 0; attempt < kMaxResample && !ok; ++attempt) {
    sizes = draw_cluster_sizes(rng, p.d, p.K);
    ok = std::all_of(sizes.begin(), sizes.end(), [&](Index m) {
      if (m < 2) return false;  // a cluster needs m_k >= d_k + 1 >= 2
      return !p.factors_per_cluster || *p.factors_per_cluster <= m - 1;
    });
    if (!ok && p.factors_per_cluster && !p.resample_infeasible &&
        std::none_of(sizes.begin(), sizes.end(), [](Index m) { return m < 2; }))
      throw Error(ErrorKind::InvalidSpec, "factor count >= cluster size");
  }
  if (!ok) throw Error(ErrorKind::InvalidSpec, "could not draw feasible cluster sizes in 100 tries");

  std::vector<Index> counts(sizes.size());
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (p.factors_per_cluster) {
      counts[c] = *p.factors_per_cluster;
    } else {
      const Index hi = std::min<Index>(sizes[c] - 1, p.n - 1);
      counts[c] = std::uniform_int_distribution<Index>(1, hi)(rng);
    }
  }

  // Candidate factor pool: min(n, d) standard normal n-vectors, each rescaled
  // to norm sqrt(n) so the direction is uniform and per-observation variance is 1.
  const Index pool_size = std::min(p.n, p.d);
  Matrix pool(p.n, pool_size);
  for (Index f = 0; f < pool_size; ++f) {
    for (Index t = 0; t < p.n; ++t) pool(t, f) = normal(rng);
    pool.col(f) *= std::sqrt(static_cast<double>(p.n)) / pool.col(f).norm();
  }

  // Each cluster picks d_k distinct pool factors; clusters may share.
  std::vector<Index> pool_ids;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    std::vector<Index> perm(static_cast<std::size_t>(pool_size));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index s = 0; s < counts[c]; ++s) {
      const Index j = std::uniform_int_distribution<Index>(s, pool_size - 1)(rng);
      std::swap(perm[static_cast<std::size_t>(s)], perm[static_cast<std::size_t>(j)]);
      pool_ids.push_back(perm[static_cast<std::size_t>(s)]);
    }
  }
  const Index D = static_cast<Index>(pool_ids.size());
  BlockModelSpec spec;
  spec.K = p.K;
  spec.cluster_sizes = sizes;
  spec.factor_counts = counts;
  spec.factor_pool_ids = pool_ids;
  spec.seed = p.seed;
  spec.loadings = Matrix::Zero(p.d, D);
  spec.noise_var.resize(p.d);
  spec.common_loading.resize(p.d);
  spec.factor_cov.resize(D, D);
  for (Index a = 0; a < D; ++a)
    for (Index b = 0; b < D; ++b)
      spec.factor_cov(a, b) = pool_ids[static_cast<std::size_t>(a)] ==
                                      pool_ids[static_cast<std::size_t>(b)]
                                  ? 1.0
                                  : 0.0;

  std::vector<int> assignment(static_cast<std::size_t>(p.d));
  Index row = 0;
  Index offset = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    for (Index m = 0; m < sizes[c]; ++m, ++row) {
      assignment[static_cast<std::size_t>(row)] = static_cast<int>(c) + 1;
      const double bh_sq = draw_uniform(rng, p.beta_h_sq);
      Vector beta(counts[c]);
      for (Index f = 0; f < counts[c]; ++f) beta(f) = normal(rng);
      beta *= std::sqrt(1.0 - bh_sq) / beta.norm();
      spec.loadings.block(row, offset, 1, counts[c]) = beta.transpose();
      spec.common_loading(row) = std::sqrt(bh_sq);
      spec.noise_var(row) = draw_uniform(rng, p.noise_var);
    }
    offset += counts[c];
  }

  Vector hidden(p.n);
  for (Index t = 0; t < p.n; ++t) hidden(t) = normal(rng);

  Matrix factors(p.n, D);
  for (Index a = 0; a < D; ++a) factors.col(a) = pool.col(pool_ids[static_cast<std::size_t>(a)]);

  Matrix raw = factors * spec.loadings.transpose() + hidden * spec.common_loading.transpose();
  for (Index i = 0; i < p.d; ++i) {
    const double sd = std::sqrt(spec.noise_var(i));
    for (Index t = 0; t < p.n; ++t) raw(t, i) += sd * normal(rng);
  }

  Partition truth(std::move(assignment), p.K);
  spec.validate(truth.labels());
  return GeneratedSample{standardize(raw), std::move(truth), std::move(spec), std::move(raw)};
}

void BlockModelSpec::validate(const std::vector<int>& assignment) const {
  const Index d = dim();
  const Index D = factor_dim();
  if (static_cast<Index>(assignment.size()) != d || noise_var.size() != d ||
      common_loading.size() != d || factor_cov.rows() != D || factor_cov.cols() != D)
    throw Error(ErrorKind::InvalidSpec, "dimension mismatch in block model");
  if ((noise_var.array() < 0).any()) throw Error(ErrorKind::InvalidSpec, "negative noise variance");
  std::vector<Index> starts(static_cast<std::size_t>(K) + 1, 0);
  for (int k = 0; k < K; ++k)
    starts[static_cast<std::size_t>(k) + 1] =
        starts[static_cast<std::size_t>(k)] + factor_counts[static_cast<std::size_t>(k)];
  if (starts.back() != D) throw Error(ErrorKind::InvalidSpec, "factor counts do not sum to D");
  for (int k = 0; k < K; ++k) {
    const Index s = starts[static_cast<std::size_t>(k)];
    const Index len = factor_counts[static_cast<std::size_t>(k)];
    if (!factor_cov.block(s, s, len, len).isIdentity(1e-12))
      throw Error(ErrorKind::InvalidSpec, "within-cluster factor covariance is not identity");
  }
  for (Index i = 0; i < d; ++i) {
    const int k = assignment[static_cast<std::size_t>(i)] - 1;
    const Index s = starts[static_cast<std::size_t>(k)];
    const Index len = factor_counts[static_cast<std::size_t>(k)];
    const double inside = loadings.row(i).segment(s, len).squaredNorm();
    if (loadings.row(i).squaredNorm() - inside > 0.0)
      throw Error(ErrorKind::InvalidSpec, "loading outside the cluster factor block");
    if (std::abs(inside + common_loading(i) * common_loading(i) - 1.0) > 1e-12)
      throw Error(ErrorKind::InvalidSpec, "loading normalization violated");
  }
}

CovarianceEstimate population_covariance(const BlockModelSpec& spec) {
  const Index d = spec.dim();
  if (spec.factor_cov.rows() != spec.factor_dim() || spec.factor_cov.cols() != spec.factor_dim() ||
      spec.noise_var.size() != d || spec.common_loading.size() != d)
    throw Error(ErrorKind::InvalidSpec, "dimension mismatch in block model");
  Matrix sigma = spec.loadings * spec.factor_cov * spec.loadings.transpose();
  sigma.noalias() += spec.common_loading * spec.common_loading.transpose();
  sigma.diagonal() += spec.noise_var;
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return {std::move(sigma), CovarianceKind::Population};
}

CoefficientMatrix population_nodewise(const CovarianceEstimate& sigma) {
  const Matrix& s = sigma.matrix;
  if (s.rows() != s.cols()) throw Error(ErrorKind::InvalidInput, "covariance must be square");
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::SingularCovariance, "covariance is not positive definite");
  const double min_pivot = llt.matrixLLT().diagonal().minCoeff();
  const double max_pivot = llt.matrixLLT().diagonal().maxCoeff();
  if (!(min_pivot > 1e-8 * max_pivot))
    throw Error(ErrorKind::SingularCovariance, "covariance is numerically singular");
  const Matrix theta = llt.solve(Matrix::Identity(s.rows(), s.cols()));
  Matrix b = -theta * theta.diagonal().cwiseInverse().asDiagonal();
  return CoefficientMatrix(std::move(b));
}

CovarianceEstimate sample_second_moment(const StandardizedPanel& panel) {
  Matrix s = panel.values().transpose() * panel.values() / static_cast<double>(panel.n() - 1);
  return {std::move(s), CovarianceKind::SampleSecondMoment};
}

}  // namespace drvc
