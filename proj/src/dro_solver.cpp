#include "drvc/dro_solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace drvc {

double dro_objective(const StandardizedPanel& panel, const CoefficientMatrix& b, double delta) {
  return dro_objective(panel.values(), b.values(), delta);
}

double dro_root_objective(const Matrix& x, const Matrix& b, double delta) {
  return std::sqrt(dro_objective(x, b, delta));
}

void SolverOptions::validate() const {
  if (!(rho > 0 && tol_abs > 0 && tol_rel > 0 && max_iter > 0 && inner_tol > 0 &&
        inner_max_iter > 0 && smoothing_eps > 0 && adapt_every > 0))
    throw Error(ErrorKind::InvalidConfig, "solver options must all be positive");
}

double b1_objective(const Matrix& x, const Matrix& target, double rho, const Matrix& b) {
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(x.rows()));
  return inv_sqrt_n * (x - x * b).norm() + 0.5 * rho * (b - target).squaredNorm();
}

double b1_stationarity(const Matrix& x, const Matrix& target, double rho, const Matrix& b,
                       double smoothing_eps) {
  const Matrix resid = x - x * b;
  const double rnorm = resid.norm();
  Matrix grad = rho * (b - target);
  if (rnorm > smoothing_eps)
    grad.noalias() -= (1.0 / (std::sqrt(static_cast<double>(x.rows())) * rnorm)) *
                      (x.transpose() * resid);
  grad.diagonal().setZero();
  return grad.norm();
}

GramFactor::GramFactor(const Matrix& x) : n(x.rows()) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(x.transpose() * x);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalFailure, "eigendecomposition of the Gram matrix failed");
  q = eig.eigenvectors();
  lambda = eig.eigenvalues().cwiseMax(0.0);
}

namespace {

// Closed-form B(s) of the perspective split, evaluated in the eigenbasis.
class PerspectiveSystem {
 public:
  PerspectiveSystem(const GramFactor& gram, const Matrix& target, double rho)
      : gram_(gram), rho_(rho), sqrt_n_(std::sqrt(static_cast<double>(gram.n))) {
    qt_ = gram.q.transpose();
    p_ = qt_ * target;
    a1_ = qt_ - p_;
    s1_ = qt_.cwiseAbs2();
    s2_ = qt_.cwiseProduct(p_);
    a1_qt_ = a1_.cwiseProduct(qt_);
    a1_sq_rows_ = a1_.cwiseAbs2().rowwise().sum();
  }

  // Fills the diagonal multipliers for level s and returns ||R(B(s))||^2.
  double residual_sq(double s) {
    const double c = s * sqrt_n_;
    const Vector& lam = gram_.lambda;
    dk_ = ((lam / c).array() + rho_).inverse().matrix();
    const Vector lam_dk_c = lam.cwiseProduct(dk_) / c;
    const Vector u_diag = s1_.transpose() * lam_dk_c + rho_ * (s2_.transpose() * dk_);
    const Vector w_diag = s1_.transpose() * dk_;
    mu_ = -u_diag.cwiseQuotient(w_diag);
    const Vector t1 = a1_qt_ * mu_;
    const Vector t2 = s1_ * mu_.cwiseAbs2();
    const Vector rows = rho_ * rho_ * a1_sq_rows_ - 2.0 * rho_ * t1 + t2;
    return (lam.cwiseProduct(dk_.cwiseAbs2())).dot(rows);
  }

  // B at the level of the latest residual_sq call.
  Matrix coefficients() const {
    Matrix e = rho_ * a1_ - qt_ * mu_.asDiagonal();
    e = dk_.asDiagonal() * e;
    Matrix b = gram_.q * (qt_ - e);
    b.diagonal().setZero();
    return b;
  }

 private:
  const GramFactor& gram_;
  double rho_;
  double sqrt_n_;
  Matrix qt_, p_, a1_, s1_, s2_, a1_qt_;
  Vector a1_sq_rows_;
  Vector dk_, mu_;
};

}  // namespace

B1Solution solve_b1_exact(const GramFactor& gram, const Matrix& target, double rho,
                          const SolverOptions& opts) {
  const Index d = gram.q.rows();
  if (target.rows() != d || target.cols() != d)
    throw Error(ErrorKind::InvalidInput, "B1 subproblem dimension mismatch");
  PerspectiveSystem sys(gram, target, rho);

  // F(s) = 1 - ||R(B(s))||^2 / s^2 is nondecreasing in s (derivative of a
  // convex function of s); its root is the optimal residual norm.
  auto value = [&](double s) { return 1.0 - sys.residual_sq(s) / (s * s); };

  B1Solution out;
  const double floor_s = opts.smoothing_eps;
  double s = std::sqrt(std::max(sys.residual_sq(1.0), floor_s * floor_s));
  s = std::max(s, floor_s);
  double lo = s, hi = s;
  double f_lo = value(s), f_hi = f_lo;
  int evals = 2;
  if (f_lo > 0) {
    while (f_lo > 0 && lo > floor_s) {
      hi = lo;
      f_hi = f_lo;
      lo = std::max(lo / 4.0, floor_s);
      f_lo = value(lo);
      ++evals;
    }
    if (f_lo >= 0) {
      // Residual can be driven to zero: the data term is minimized exactly.
      sys.residual_sq(floor_s);
      out.b = sys.coefficients();
      out.iterations = evals;
      out.converged = true;
      return out;
    }
  } else {
    while (f_hi <= 0) {
      lo = hi;
      f_lo = f_hi;
      hi *= 4.0;
      f_hi = value(hi);
      ++evals;
      if (evals > 200) throw Error(ErrorKind::NumericalFailure, "B1 bracket search diverged");
    }
  }

  // Illinois regula falsi on log s, with bisection when it stalls.
  double a = std::log(lo), b = std::log(hi);
  double fa = f_lo, fb = f_hi;
  int side = 0;
  double root = 0.5 * (a + b);
  for (int it = 0; it < opts.inner_max_iter; ++it) {
    root = (a * fb - b * fa) / (fb - fa);
    if (!(root > a && root < b)) root = 0.5 * (a + b);
    const double fr = value(std::exp(root));
    ++evals;
    if (fr == 0.0 || (b - a) < 1e-14) {
      out.converged = true;
      break;
    }
    if ((fr > 0) == (fb > 0)) {
      b = root;
      fb = fr;
      if (side == -1) fa /= 2;
      side = -1;
    } else {
      a = root;
      fa = fr;
      if (side == 1) fb /= 2;
      side = 1;
    }
    if (std::abs(fr) < 1e-15 || (b - a) < 1e-14) {
      out.converged = true;
      break;
    }
  }
  sys.residual_sq(std::exp(root));
  out.b = sys.coefficients();
  out.iterations = evals;
  out.stationarity = std::abs(value(std::exp(root)));
  return out;
}

B1Solution solve_b1_iterative(const Matrix& x, const Matrix& target, double rho,
                              const SolverOptions& opts, const Matrix& warm, double step_hint) {
  const Index d = x.cols();
  if (target.rows() != d || target.cols() != d || warm.rows() != d || warm.cols() != d)
    throw Error(ErrorKind::InvalidInput, "B1 subproblem dimension mismatch");
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(x.rows()));
  auto eval = [&](const Matrix& b, Matrix* grad) {
    const Matrix resid = x - x * b;
    const double rnorm = resid.norm();
    const Matrix diff = b - target;
    if (grad) {
      *grad = rho * diff;
      if (rnorm > opts.smoothing_eps)
        grad->noalias() -= (inv_sqrt_n / rnorm) * (x.transpose() * resid);
      grad->diagonal().setZero();
    }
    return inv_sqrt_n * rnorm + 0.5 * rho * diff.squaredNorm();
  };

  B1Solution out;
  Matrix cur = warm;
  cur.diagonal().setZero();
  double cur_val = eval(cur, nullptr);
  Matrix y = cur;
  Matrix grad(d, d);
  Matrix next(d, d);
  double lip = step_hint > rho ? step_hint : 2.0 * rho;
  const double sqrt_mu = std::sqrt(rho);

  for (int it = 1; it <= opts.inner_max_iter; ++it) {
    const double y_val = eval(y, &grad);
    lip = std::max(rho, 0.9 * lip);
    double next_val = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      next = y - grad / lip;
      next_val = eval(next, nullptr);
      const double model =
          y_val + grad.cwiseProduct(next - y).sum() + 0.5 * lip * (next - y).squaredNorm();
      if (next_val <= model + 1e-14 * std::abs(y_val)) break;
      lip *= 2.0;
    }
    const double gmap = lip * (next - y).norm();
    out.iterations = it;
    out.stationarity = gmap;
    if (next_val > cur_val) {
      // restart without momentum
      y = cur;
    } else {
      const double beta = (std::sqrt(lip) - sqrt_mu) / (std::sqrt(lip) + sqrt_mu);
      y = next + beta * (next - cur);
      cur.swap(next);
      cur_val = next_val;
    }
    if (gmap <= opts.inner_tol) {
      out.converged = true;
      break;
    }
  }
  out.b = std::move(cur);
  out.step_hint = lip;
  return out;
}

CoefficientMatrix solve_b1(const StandardizedPanel& panel, const Matrix& b2, const Matrix& dual,
                           double rho, const SolverOptions& opts) {
  opts.validate();
  if (!(rho > 0)) throw Error(ErrorKind::InvalidInput, "rho must be positive");
  const Index d = panel.d();
  if (b2.rows() != d || b2.cols() != d || dual.rows() != d || dual.cols() != d)
    throw Error(ErrorKind::InvalidInput, "B2 / dual dimension mismatch");
  const Matrix target = Matrix::Identity(d, d) - b2 - dual;
  const GramFactor gram(panel.values());
  auto sol = solve_b1_exact(gram, target, rho, opts);
  const double stat =
      b1_stationarity(panel.values(), target, rho, sol.b, opts.smoothing_eps);
  const double scale = std::max(1.0, rho * target.norm());
  if (!sol.converged || stat > opts.inner_tol * scale)
    throw Error(ErrorKind::SolverStalled,
                "B1 subproblem stationarity " + std::to_string(stat) + " exceeds tolerance");
  return CoefficientMatrix(std::move(sol.b));
}

FitResult admm_fit(const StandardizedPanel& panel, double delta, const SolverOptions& opts) {
  return admm_fit(panel.values(), delta, opts);
}

FitResult admm_fit(const Matrix& x, double delta, const SolverOptions& opts) {
  opts.validate();
  if (!(delta >= 0) || !std::isfinite(delta))
    throw Error(ErrorKind::InvalidInput, "delta must be finite and nonnegative");
  const Index d = x.cols();
  const Matrix eye = Matrix::Identity(d, d);
  const double root_delta = std::sqrt(delta);
  const GramFactor gram(x);

  AdmmState st;
  st.rho = opts.rho;
  st.b1 = Matrix::Zero(d, d);
  st.b2 = Matrix::Zero(d, d);
  st.dual = Matrix::Zero(d, d);
  st.best_objective = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= opts.max_iter; ++it) {
    auto inner = solve_b1_exact(gram, eye - st.b2 - st.dual, st.rho, opts);
    if (!inner.converged) ++st.inner_failures;
    st.b1 = std::move(inner.b);

    Matrix b2_next = spectral_prox(eye - st.b1 - st.dual, 2.0 * root_delta / st.rho);
    const Matrix gap = st.b1 + b2_next - eye;
    st.dual += gap;

    const double primal = gap.norm();
    const double dual = st.rho * (b2_next - st.b2).norm();
    st.b2 = std::move(b2_next);
    st.iteration = it;
    st.primal_residual.push_back(primal);
    st.dual_residual.push_back(dual);
    st.rho_history.push_back(st.rho);
    const double obj = dro_objective(x, st.b1, delta);
    st.objective.push_back(obj);
    st.best_objective = std::min(st.best_objective, obj);

    const double eps_pri = opts.tol_abs + opts.tol_rel * std::max({st.b1.norm(), st.b2.norm(),
                                                                   std::sqrt(double(d))});
    const double eps_dual = opts.tol_abs + opts.tol_rel * st.rho * st.dual.norm();
    if (primal <= eps_pri && dual <= eps_dual) {
      st.converged = true;
      break;
    }

    if (opts.adaptive_rho && it % opts.adapt_every == 0) {
      if (primal > 10.0 * dual) {
        st.rho *= 2.0;
        st.dual /= 2.0;
      } else if (dual > 10.0 * primal) {
        st.rho /= 2.0;
        st.dual *= 2.0;
      }
    }
  }

  CoefficientMatrix coefficients(st.b1);
  return FitResult{std::move(coefficients), std::move(st), delta, opts};
}

}  // namespace drvc
