#include "drvc/delta_select.hpp"

#include "drvc/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace drvc {

std::string_view to_string(UpsilonMethod method) {
  return method == UpsilonMethod::FullSampleCovariance ? "a" : "b";
}

UpsilonMethod upsilon_method_from_string(std::string_view name) {
  if (name == "a" || name == "full") return UpsilonMethod::FullSampleCovariance;
  if (name == "b" || name == "wishart") return UpsilonMethod::WishartDiagonal;
  throw Error(ErrorKind::InvalidInput, "unknown upsilon method '" + std::string(name) + "'");
}

UpsilonEstimate wishart_upsilon(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols()) throw Error(ErrorKind::InvalidInput, "covariance must be square");
  const Vector diag = sigma.diagonal();
  UpsilonEstimate u;
  u.method = UpsilonMethod::WishartDiagonal;
  u.d = sigma.rows();
  u.values = diag * diag.transpose() + sigma.cwiseAbs2();
  return u;
}

UpsilonEstimate estimate_upsilon(const StandardizedPanel& panel, UpsilonMethod method,
                                 std::uint64_t memory_cap_bytes) {
  const Index n = panel.n();
  const Index d = panel.d();
  if (n < 2) throw Error(ErrorKind::InvalidData, "need n >= 2");
  const Matrix& x = panel.values();
  if (method == UpsilonMethod::WishartDiagonal)
    return wishart_upsilon(x.transpose() * x / static_cast<double>(n - 1));

  const double bytes = std::pow(static_cast<double>(d), 4) * 8.0;
  if (bytes > static_cast<double>(memory_cap_bytes))
    throw Error(ErrorKind::MemoryCapExceeded,
                "full upsilon needs " + std::to_string(static_cast<long long>(bytes)) +
                    " bytes; use the Wishart-diagonal method");
  const Index dd = d * d;
  Matrix g(n, dd);  // row t = vec(x_t x_t^T)
  for (Index t = 0; t < n; ++t)
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < d; ++i) g(t, i + d * j) = x(t, i) * x(t, j);
  const Eigen::RowVectorXd mean = g.colwise().mean();
  g.rowwise() -= mean;
  UpsilonEstimate u;
  u.method = method;
  u.d = d;
  u.values = g.transpose() * g / static_cast<double>(n - 1);
  return u;
}

namespace {

/// Draws symmetric Z and returns the quadratic form.
class RbarSampler {
 public:
  RbarSampler(const UpsilonEstimate& u, const Vector& sigma_inv_diag)
      : u_(u), w_(sigma_inv_diag) {
    const Index d = u.d;
    if (w_.size() != d) throw Error(ErrorKind::InvalidInput, "sigma_inv_diag length mismatch");
    if (!(w_.array() > 0).all()) throw Error(ErrorKind::InvalidInput, "sigma_inv_diag must be > 0");
    if (!u.values.allFinite()) throw Error(ErrorKind::InvalidUpsilon, "non-finite upsilon");
    if (u.method == UpsilonMethod::WishartDiagonal) {
      if (u.values.rows() != d || u.values.cols() != d)
        throw Error(ErrorKind::InvalidUpsilon, "upsilon (b) must be d x d");
      if ((u.values.array() < 0).any())
        throw Error(ErrorKind::InvalidUpsilon, "negative variance in upsilon");
      sd_ = u.values.cwiseSqrt();
    } else {
      const Index dd = d * d;
      if (u.values.rows() != dd || u.values.cols() != dd)
        throw Error(ErrorKind::InvalidUpsilon, "upsilon (a) must be d^2 x d^2");
      Eigen::SelfAdjointEigenSolver<Matrix> es(u.values);
      if (es.info() != Eigen::Success)
        throw Error(ErrorKind::NumericalFailure, "eigendecomposition of upsilon failed");
      const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      if (es.eigenvalues().minCoeff() < -1e-8 * scale)
        throw Error(ErrorKind::InvalidUpsilon, "upsilon is not positive semidefinite");
      root_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
  }

  double draw(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index d = u_.d;
    Matrix z(d, d);
    if (u_.method == UpsilonMethod::WishartDiagonal) {
      for (Index j = 0; j < d; ++j)
        for (Index i = 0; i <= j; ++i) {
          z(i, j) = sd_(i, j) * normal(rng);
          z(j, i) = z(i, j);
        }
    } else {
      Vector xi(root_.cols());
      for (Index k = 0; k < xi.size(); ++k) xi(k) = normal(rng);
      const Vector v = root_ * xi;
      z = Eigen::Map<const Matrix>(v.data(), d, d);
      z = 0.5 * (z + z.transpose()).eval();  // exact up to rounding; Upsilon is symmetric in (i,j)
    }
    // sum_i Z_.i^T W Z_.i = sum_{j,i} w_j z_ji^2
    return 0.25 * (w_.asDiagonal() * z.cwiseAbs2()).sum();
  }

 private:
  const UpsilonEstimate& u_;
  Vector w_;
  Matrix sd_;
  Matrix root_;
};

}  // namespace

Vector sample_rbar(const UpsilonEstimate& upsilon, const Vector& sigma_inv_diag, Index M,
                   std::uint64_t seed) {
  if (M < 1) throw Error(ErrorKind::InvalidInput, "M must be >= 1");
  const RbarSampler sampler(upsilon, sigma_inv_diag);
  Vector out(M);
  parallel_for(static_cast<std::size_t>(M), [&](std::size_t m) {
    out(static_cast<Index>(m)) = sampler.draw(derive_seed(seed, m));
  });
  return out;
}

double quantile(std::vector<double> sample, double p) {
  if (sample.empty()) throw Error(ErrorKind::InvalidInput, "quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidInput, "quantile level outside [0, 1]");
  std::sort(sample.begin(), sample.end());
  const double pos = p * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sample[lo] + frac * (sample[hi] - sample[lo]);
}

DeltaEstimate delta_from_samples(const Vector& rbar, Index n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidInput, "alpha must lie in (0, 1)");
  if (n < 1) throw Error(ErrorKind::InvalidInput, "n must be positive");
  std::vector<double> scaled(static_cast<std::size_t>(rbar.size()));
  for (Index m = 0; m < rbar.size(); ++m)
    scaled[static_cast<std::size_t>(m)] = rbar(m) / static_cast<double>(n);
  DeltaEstimate est;
  est.alpha = alpha;
  est.M = rbar.size();
  est.n = n;
  est.delta = std::max(0.0, quantile(scaled, 1.0 - alpha));
  est.probs = {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0};
  for (double p : est.probs) est.quantiles.push_back(quantile(scaled, p));
  return est;
}

DeltaEstimate select_delta(const StandardizedPanel& panel, const DeltaOptions& opts,
                           std::uint64_t seed) {
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0))
    throw Error(ErrorKind::InvalidInput, "alpha must lie in (0, 1)");
  const Matrix& x = panel.values();
  const Vector var = (x.transpose() * x).diagonal() / static_cast<double>(panel.n() - 1);
  const UpsilonEstimate u = estimate_upsilon(panel, opts.method, opts.memory_cap_bytes);
  const Vector rbar = sample_rbar(u, var.cwiseInverse(), opts.M, seed);
  DeltaEstimate est = delta_from_samples(rbar, panel.n(), opts.alpha);
  est.method = opts.method;
  est.seed = seed;
  return est;
}

}  // namespace drvc
