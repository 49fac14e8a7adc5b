#pragma once

#include "drvc/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace drvc {

/// Largest singular value.
template <class Derived>
typename Derived::RealScalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0;
  using Plain = typename Derived::PlainObject;
  Eigen::BDCSVD<Plain> svd(m.derived());
  return svd.singularValues()(0);
}

/// Shrinks the leading singular values of a nonincreasing spectrum onto a
/// common plateau t: the minimizer over s of sum_j (s_j - sigma_j)^2 + lambda * max_j s_j.
/// For each plateau width k the optimal level is
///   t_k = clamp((sigma_1 + ... + sigma_k - lambda / 2) / k, sigma_{k+1}, sigma_k)
/// and the width with the smallest loss wins.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> shrink_spectrum(
    const Eigen::MatrixBase<Derived>& sigma, typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  const Index r = sigma.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s = sigma;
  if (r == 0 || lambda <= Scalar(0)) return s;

  Scalar prefix = 0;
  Scalar prefix_sq = 0;
  Scalar best_loss = std::numeric_limits<Scalar>::infinity();
  Scalar best_t = 0;
  Index best_k = r;
  for (Index k = 1; k <= r; ++k) {
    const Scalar hi = sigma(k - 1);
    const Scalar lo = k < r ? sigma(k) : Scalar(0);
    prefix += hi;
    prefix_sq += hi * hi;
    Scalar t = (prefix - lambda / 2) / static_cast<Scalar>(k);
    t = std::min(std::max(t, lo), hi);
    // sum_{j<=k} (sigma_j - t)^2 expanded through prefix sums
    const Scalar loss = prefix_sq - 2 * t * prefix + static_cast<Scalar>(k) * t * t + lambda * t;
    if (loss < best_loss) {
      best_loss = loss;
      best_t = t;
      best_k = k;
    }
  }
  s.head(best_k).setConstant(best_t);
  return s;
}

/// argmin_B ||B - C||_F^2 + lambda * ||B||_2.
/// The singular vectors of C are kept; only the spectrum is shrunk.
template <class Derived>
typename Derived::PlainObject spectral_prox(const Eigen::MatrixBase<Derived>& c,
                                            typename Derived::Scalar lambda) {
  using Plain = typename Derived::PlainObject;
  if (lambda < 0) throw Error(ErrorKind::InvalidInput, "prox weight must be nonnegative");
  if (lambda == 0 || c.size() == 0) return c;
  Eigen::BDCSVD<Plain> svd(c.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto s = shrink_spectrum(svd.singularValues(), lambda);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

template <class DerivedB, class DerivedC>
double spectral_prox_objective(const Eigen::MatrixBase<DerivedB>& b,
                               const Eigen::MatrixBase<DerivedC>& c, double lambda) {
  return (b - c).squaredNorm() + lambda * spectral_norm(b);
}

/// (||X - XB||_F / sqrt(n) + sqrt(delta) * ||I - B||_2)^2
template <class DerivedX, class DerivedB>
double dro_objective(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedB>& b,
                     double delta) {
  if (b.rows() != b.cols() || b.rows() != x.cols())
    throw Error(ErrorKind::InvalidInput, "coefficient matrix does not match panel width");
  if (delta < 0) throw Error(ErrorKind::InvalidInput, "delta must be nonnegative");
  const double n = static_cast<double>(x.rows());
  const Matrix h = Matrix::Identity(b.rows(), b.cols()) - b;
  const double fit = (x - x * b).norm() / std::sqrt(n);
  const double root = fit + std::sqrt(delta) * spectral_norm(h);
  return root * root;
}

double dro_objective(const StandardizedPanel& panel, const CoefficientMatrix& b, double delta);

/// Square root of the relaxed objective (the convex program ADMM minimizes).
double dro_root_objective(const Matrix& x, const Matrix& b, double delta);

struct SolverOptions {
  double rho = 1.0;
  double tol_abs = 1e-6;
  double tol_rel = 1e-4;
  int max_iter = 5000;
  double inner_tol = 1e-8;
  int inner_max_iter = 2000;
  double smoothing_eps = 1e-12;
  /// Residual balancing: rho is doubled or halved when one residual exceeds
  /// ten times the other.
  bool adaptive_rho = false;
  int adapt_every = 10;

  void validate() const;
};

struct AdmmState {
  Matrix b1;
  Matrix b2;
  Matrix dual;
  double rho = 1.0;
  int iteration = 0;
  std::vector<double> primal_residual;
  std::vector<double> dual_residual;
  std::vector<double> objective;  // relaxed objective at B1 per iteration
  std::vector<double> rho_history;
  bool converged = false;
  int inner_failures = 0;
  double best_objective = 0.0;
};

struct B1Solution {
  Matrix b;
  int iterations = 0;
  double stationarity = 0.0;
  bool converged = false;
  double step_hint = 0.0;  // Lipschitz estimate to reuse on the next call
};

/// Eigendecomposition X^T X = Q diag(lambda) Q^T shared by every B1 solve of a fit.
struct GramFactor {
  explicit GramFactor(const Matrix& x);

  Index n = 0;
  Matrix q;
  Vector lambda;
};

/// argmin over diag(B) = 0 of ||X - XB||_F / sqrt(n) + (rho/2) ||B - target||_F^2.
///
/// Writing ||R||_F = min_s (||R||^2 / (2s) + s/2) turns the problem into a
/// ridge-type system per column for fixed s, diagonal in the eigenbasis of
/// X^T X. The optimal s solves s = ||R(B(s))||_F, found by a bracketed
/// root search in which every evaluation costs O(d^2).
B1Solution solve_b1_exact(const GramFactor& gram, const Matrix& target, double rho,
                          const SolverOptions& opts);

/// Same subproblem by accelerated projected gradient with backtracking,
/// warm-started at `warm`. Slower; kept as an independent route.
B1Solution solve_b1_iterative(const Matrix& x, const Matrix& target, double rho,
                              const SolverOptions& opts, const Matrix& warm,
                              double step_hint = 0.0);

/// Value and off-diagonal gradient norm of the B1 objective.
double b1_objective(const Matrix& x, const Matrix& target, double rho, const Matrix& b);
double b1_stationarity(const Matrix& x, const Matrix& target, double rho, const Matrix& b,
                       double smoothing_eps = 1e-12);

/// B1 update of the ADMM iteration (target I - B2 - Lambda). Throws
/// SolverStalled when the result misses `inner_tol` stationarity.
CoefficientMatrix solve_b1(const StandardizedPanel& panel, const Matrix& b2, const Matrix& dual,
                           double rho, const SolverOptions& opts);

struct FitResult {
  CoefficientMatrix coefficients;  // B1
  AdmmState state;
  double delta = 0.0;
  SolverOptions options;
};

/// Solves min_{diag(B)=0} ||X - XB||_F / sqrt(n) + sqrt(delta) ||I - B||_2 by
/// ADMM on the split B1 + B2 = I. Returns B1; `state.converged` is false when
/// max_iter ran out.
FitResult admm_fit(const StandardizedPanel& panel, double delta, const SolverOptions& opts = {});
FitResult admm_fit(const Matrix& x, double delta, const SolverOptions& opts = {});

}  // namespace drvc
