#include "drvc/baselines.hpp"

#include "drvc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace drvc {

namespace {

struct LassoColumn {
  Vector b;
  int sweeps = 0;
  bool converged = false;
};

/// Coordinate descent for one node regression on the Gram matrix. `b` is the
/// warm start and must have b(j) = 0.
LassoColumn lasso_column(const Matrix& gram, Index j, double lambda, double gap_tol,
                         int max_sweeps, Vector b) {
  const Index d = gram.rows();
  const Vector c = gram.col(j);
  const double yy = gram(j, j);
  Vector g = c - gram * b;  // X^T r restricted to the design; g(j) unused
  const double half = lambda / 2;
  LassoColumn out;
  auto pass = [&](const std::vector<Index>& coords) {
    for (Index k : coords) {
      if (k == j || gram(k, k) <= 0) continue;
      const double rho = g(k) + gram(k, k) * b(k);
      double next = 0.0;
      if (rho > half) next = (rho - half) / gram(k, k);
      else if (rho < -half) next = (rho + half) / gram(k, k);
      const double delta = next - b(k);
      if (delta != 0.0) {
        g.noalias() -= delta * gram.col(k);
        b(k) = next;
      }
    }
  };
  std::vector<Index> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> active;
  int sweep = 0;
  while (sweep < max_sweeps) {
    ++sweep;
    pass(all);
    // On the current support with fixed signs the objective is quadratic;
    // move toward its minimizer, stopping at the first sign change.
    active.clear();
    for (Index k = 0; k < d; ++k)
      if (b(k) != 0.0) active.push_back(k);
    if (!active.empty()) {
      const auto m = static_cast<Index>(active.size());
      Matrix ga(m, m);
      Vector cur(m);
      for (Index r = 0; r < m; ++r) {
        for (Index q = 0; q < m; ++q) ga(r, q) = gram(active[r], active[q]);
        cur(r) = b(active[r]);
      }
      // Grad of the piece is -2 (g_A - half * sign); damped Newton direction
      // with an exact line search, capped at the first sign change.
      Vector resid(m);
      for (Index r = 0; r < m; ++r) resid(r) = g(active[r]) - half * (cur(r) > 0 ? 1.0 : -1.0);
      ga.diagonal().array() += 1e-12 * ga.trace() / static_cast<double>(m);
      const Eigen::LDLT<Matrix> ldlt(ga);
      const Vector dir = ldlt.solve(resid);
      for (Index r = 0; r < m; ++r) ga(r, r) = gram(active[r], active[r]);
      const double curv = dir.dot(ga * dir);
      const double slope = dir.dot(resid);
      if (ldlt.info() == Eigen::Success && dir.allFinite() && slope > 0) {
        double t = curv > 0 ? slope / curv : std::numeric_limits<double>::infinity();
        Index hit = -1;
        for (Index r = 0; r < m; ++r)
          if (dir(r) * cur(r) < 0 && -cur(r) / dir(r) < t) {
            t = -cur(r) / dir(r);
            hit = r;
          }
        if (std::isfinite(t)) {
          Vector next = cur + t * dir;
          if (hit >= 0) next(hit) = 0.0;
          for (Index r = 0; r < m; ++r) {
            if (next(r) * cur(r) < 0) next(r) = 0.0;
            const double delta = next(r) - cur(r);
            if (delta != 0.0) {
              g.noalias() -= delta * gram.col(active[r]);
              b(active[r]) = next(r);
            }
          }
          ++sweep;
          pass(all);
        }
      }
    }
    // Primal ||y - Xb||^2 + lambda ||b||_1 and the dual 2 nu^T y - ||nu||^2 at
    // nu = s r, with s scaling r into ||X^T nu||_inf <= lambda / 2.
    const double bc = b.dot(c);
    const double rr = std::max(0.0, yy - bc - b.dot(g));
    const double ry = yy - bc;
    double gmax = 0.0;
    for (Index k = 0; k < d; ++k)
      if (k != j) gmax = std::max(gmax, std::abs(g(k)));
    const double primal = rr + lambda * b.lpNorm<1>();
    double gap;
    if (lambda > 0) {
      const double s = gmax > half ? half / gmax : 1.0;
      const double dual = 2 * s * ry - s * s * rr;
      gap = primal - dual;
    } else {
      gap = gmax * gmax;  // least squares: stationarity stands in for the gap
    }
    out.sweeps = sweep;
    if (gap <= gap_tol) {
      out.converged = true;
      break;
    }
  }
  out.b = std::move(b);
  return out;
}

Matrix lasso_path_step(const Matrix& gram, double lambda, double gap_tol, int max_sweeps,
                       const Matrix& warm, std::vector<int>* sweeps) {
  const Index d = gram.rows();
  Matrix b(d, d);
  std::vector<int> counts(static_cast<std::size_t>(d), 0);
  std::vector<char> ok(static_cast<std::size_t>(d), 1);
  parallel_for(static_cast<std::size_t>(d), [&](std::size_t jj) {
    const Index j = static_cast<Index>(jj);
    Vector start = warm.col(j);
    start(j) = 0.0;
    auto col = lasso_column(gram, j, lambda, gap_tol, max_sweeps, std::move(start));
    b.col(j) = col.b;
    counts[jj] = col.sweeps;
    ok[jj] = col.converged;
  });
  for (Index j = 0; j < d; ++j)
    if (!ok[static_cast<std::size_t>(j)])
      throw Error(ErrorKind::SolverStalled, "lasso column " + std::to_string(j) + " did not converge");
  if (sweeps) *sweeps = std::move(counts);
  return b;
}

}  // namespace

LassoResult lasso_nodewise(const Matrix& x, double lambda, double gap_tol, int max_sweeps) {
  if (!(lambda >= 0)) throw Error(ErrorKind::InvalidInput, "lambda must be nonnegative");
  const Index d = x.cols();
  const Matrix gram = x.transpose() * x;
  // Cold starts at small lambda crawl when d > n; walk down a geometric path
  // from the full-shrinkage threshold with warm starts instead.
  Matrix warm = Matrix::Zero(d, d);
  const double top = lasso_lambda_max(x);
  LassoResult res;
  for (double step = top * 0.8; step > lambda && lambda > 0; step *= 0.8)
    warm = lasso_path_step(gram, step, gap_tol, max_sweeps, warm, nullptr);
  res.coefficients =
      CoefficientMatrix(lasso_path_step(gram, lambda, gap_tol, max_sweeps, warm, &res.sweeps));
  return res;
}

CoefficientMatrix lasso_nodewise(const StandardizedPanel& panel, double lambda) {
  return lasso_nodewise(panel.values(), lambda).coefficients;
}

double lasso_lambda_max(const Matrix& x) {
  Matrix gram = x.transpose() * x;
  gram.diagonal().setZero();
  return 2 * gram.cwiseAbs().maxCoeff();
}

std::vector<double> lasso_grid(const Matrix& x, int count, double ratio) {
  if (count < 1 || !(ratio > 0 && ratio <= 1))
    throw Error(ErrorKind::InvalidInput, "grid needs count >= 1 and ratio in (0, 1]");
  const double top = lasso_lambda_max(x);
  if (!(top > 0)) throw Error(ErrorKind::InvalidInput, "all off-diagonal inner products are zero");
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid[static_cast<std::size_t>(i)] = top * std::pow(ratio, frac);
  }
  return grid;
}

LassoCvResult lasso_cv(const StandardizedPanel& panel, const LassoConfig& config) {
  const Matrix& x = panel.values();
  const Index n = x.rows();
  const Index d = x.cols();
  if (config.cv_folds < 2) throw Error(ErrorKind::InvalidFolds, "need at least 2 folds");
  std::vector<double> grid = config.lambda_grid.empty() ? lasso_grid(x) : config.lambda_grid;
  for (double l : grid)
    if (!(l > 0)) throw Error(ErrorKind::InvalidInput, "lambda grid must be strictly positive");
  std::sort(grid.begin(), grid.end(), std::greater<>());

  const auto folds = static_cast<Index>(config.cv_folds);
  if (n / folds < 2) throw Error(ErrorKind::InvalidFolds, "a fold would hold fewer than 2 rows");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);

  LassoCvResult res;
  res.grid = grid;
  res.cv_error.assign(grid.size(), 0.0);
  if (grid.size() == 1) {
    res.lambda = grid.front();
    return res;
  }
  for (Index f = 0; f < folds; ++f) {
    std::vector<Index> train, valid;
    for (Index p = 0; p < n; ++p) (p % folds == f ? valid : train).push_back(order[static_cast<std::size_t>(p)]);
    Matrix xt(static_cast<Index>(train.size()), d), xv(static_cast<Index>(valid.size()), d);
    for (std::size_t r = 0; r < train.size(); ++r) xt.row(static_cast<Index>(r)) = x.row(train[r]);
    for (std::size_t r = 0; r < valid.size(); ++r) xv.row(static_cast<Index>(r)) = x.row(valid[r]);
    const Matrix gram = xt.transpose() * xt;
    Matrix b = Matrix::Zero(d, d);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      b = lasso_path_step(gram, grid[g], 1e-8, 100000, b, nullptr);
      const double err = (xv - xv * b).squaredNorm() / static_cast<double>(valid.size());
      res.cv_error[g] += err / static_cast<double>(folds);
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (res.cv_error[g] < res.cv_error[best]) best = g;
  res.lambda = grid[best];
  return res;
}

Matrix correlation(const Matrix& x) {
  const Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = centered.transpose() * centered;
  const Vector sd = cov.diagonal().cwiseSqrt();
  for (Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0)) throw Error(ErrorKind::ZeroVarianceColumn, "column " + std::to_string(j));
  Matrix rho = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  rho = 0.5 * (rho + rho.transpose()).eval();
  rho.diagonal().setOnes();
  return rho.cwiseMax(-1.0).cwiseMin(1.0);
}

DissimilarityMatrix cord_dissimilarity(const Matrix& rho) {
  const Index d = rho.rows();
  if (rho.cols() != d) throw Error(ErrorKind::InvalidInput, "correlation matrix must be square");
  if (d < 3) throw Error(ErrorKind::InsufficientVariables, "cord needs d >= 3");
  DissimilarityMatrix out{Matrix::Zero(d, d), DissimilarityKind::Cord};
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) {
      double minus = 0.0, plus = 0.0;
      for (Index l = 0; l < d; ++l) {
        if (l == i || l == j) continue;
        minus = std::max(minus, std::abs(rho(i, l) - rho(j, l)));
        plus = std::max(plus, std::abs(rho(i, l) + rho(j, l)));
      }
      out.values(i, j) = out.values(j, i) = std::min(minus, plus);
    }
  return out;
}

DissimilarityMatrix cord_dissimilarity(const StandardizedPanel& panel) {
  return cord_dissimilarity(correlation(panel.values()));
}

DissimilarityMatrix one_minus_rho_squared(const Matrix& rho) {
  if (rho.rows() != rho.cols()) throw Error(ErrorKind::InvalidInput, "correlation matrix must be square");
  DissimilarityMatrix out{(1.0 - rho.array().square()).matrix().cwiseMax(0.0),
                          DissimilarityKind::OneMinusRhoSquared};
  out.values.diagonal().setZero();
  return out;
}

DissimilarityMatrix one_minus_rho_squared(const StandardizedPanel& panel) {
  return one_minus_rho_squared(correlation(panel.values()));
}

namespace {

void check_k(Index d, int K) {
  if (K < 1 || K > d) throw Error(ErrorKind::InvalidK, "need 1 <= K <= d");
}

void check_dissimilarity(const Matrix& D) {
  if (D.rows() != D.cols()) throw Error(ErrorKind::InvalidInput, "dissimilarity must be square");
  if (!D.allFinite()) throw Error(ErrorKind::InvalidInput, "dissimilarity has non-finite entries");
}

}  // namespace

Partition acc_cluster(const DissimilarityMatrix& dissimilarity, int K) {
  const Matrix& D = dissimilarity.values;
  check_dissimilarity(D);
  const Index d = D.rows();
  check_k(d, K);
  // Lance-Williams average linkage over active clusters, O(d^3).
  Matrix link = D;
  std::vector<Index> size(static_cast<std::size_t>(d), 1);
  std::vector<Index> root(static_cast<std::size_t>(d));
  std::iota(root.begin(), root.end(), Index{0});
  std::vector<char> active(static_cast<std::size_t>(d), 1);
  for (Index clusters = d; clusters > K; --clusters) {
    Index bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < d; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Index j = i + 1; j < d; ++j)
        if (active[static_cast<std::size_t>(j)] && link(i, j) < best) {
          best = link(i, j);
          bi = i;
          bj = j;
        }
    }
    const double si = static_cast<double>(size[static_cast<std::size_t>(bi)]);
    const double sj = static_cast<double>(size[static_cast<std::size_t>(bj)]);
    for (Index k = 0; k < d; ++k) {
      if (!active[static_cast<std::size_t>(k)] || k == bi || k == bj) continue;
      link(bi, k) = link(k, bi) = (si * link(bi, k) + sj * link(bj, k)) / (si + sj);
    }
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    active[static_cast<std::size_t>(bj)] = 0;
    for (auto& r : root)
      if (r == bj) r = bi;
  }
  std::vector<int> raw(root.begin(), root.end());
  return Partition::from_labels(raw);
}

namespace {

double assignment_cost(const Matrix& D, const std::vector<Index>& medoids) {
  double cost = 0.0;
  for (Index i = 0; i < D.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index m : medoids) best = std::min(best, D(i, m));
    cost += best;
  }
  return cost;
}

}  // namespace

KMedoidsResult kmedoids(const DissimilarityMatrix& dissimilarity, int K) {
  const Matrix& D = dissimilarity.values;
  check_dissimilarity(D);
  const Index d = D.rows();
  check_k(d, K);

  std::vector<Index> medoids;
  std::vector<char> is_medoid(static_cast<std::size_t>(d), 0);
  Vector nearest = Vector::Constant(d, std::numeric_limits<double>::infinity());
  // Build: repeatedly add the point that lowers the total cost most.
  for (int step = 0; step < K; ++step) {
    Index pick = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < d; ++c) {
      if (is_medoid[static_cast<std::size_t>(c)]) continue;
      double cost = 0.0;
      for (Index i = 0; i < d; ++i) cost += std::min(nearest(i), D(i, c));
      if (cost < best) {
        best = cost;
        pick = c;
      }
    }
    medoids.push_back(pick);
    is_medoid[static_cast<std::size_t>(pick)] = 1;
    for (Index i = 0; i < d; ++i) nearest(i) = std::min(nearest(i), D(i, pick));
  }

  KMedoidsResult res;
  double cost = assignment_cost(D, medoids);
  res.cost_history.push_back(cost);
  // Swap: apply the best improving (medoid, non-medoid) exchange until none improves.
  for (;;) {
    double best = cost;
    std::size_t best_slot = 0;
    Index best_h = -1;
    for (std::size_t slot = 0; slot < medoids.size(); ++slot) {
      for (Index h = 0; h < d; ++h) {
        if (is_medoid[static_cast<std::size_t>(h)]) continue;
        std::vector<Index> trial = medoids;
        trial[slot] = h;
        const double c = assignment_cost(D, trial);
        if (c < best - 1e-12 * std::max(1.0, std::abs(best))) {
          best = c;
          best_slot = slot;
          best_h = h;
        }
      }
    }
    if (best_h < 0) break;
    is_medoid[static_cast<std::size_t>(medoids[best_slot])] = 0;
    is_medoid[static_cast<std::size_t>(best_h)] = 1;
    medoids[best_slot] = best_h;
    cost = best;
    res.cost_history.push_back(cost);
  }

  std::sort(medoids.begin(), medoids.end());
  std::vector<int> labels(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) {
    std::size_t arg = 0;
    for (std::size_t s = 1; s < medoids.size(); ++s)
      if (D(i, medoids[s]) < D(i, medoids[arg])) arg = s;
    // a medoid always belongs to its own cluster, even when distances tie
    for (std::size_t s = 0; s < medoids.size(); ++s)
      if (medoids[s] == i) arg = s;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(arg) + 1;
  }
  res.medoids = medoids;
  res.cost = cost;
  res.partition = Partition(std::move(labels), K);
  return res;
}

}  // namespace drvc
