#pragma once

#include "drvc/types.hpp"

#include <cstdint>
#include <vector>

namespace drvc {

enum class DissimilarityKind { Cord, OneMinusRhoSquared };

struct DissimilarityMatrix {
  Matrix values;  // symmetric, nonnegative, zero diagonal
  DissimilarityKind kind = DissimilarityKind::Cord;
};

struct LassoResult {
  CoefficientMatrix coefficients;
  std::vector<int> sweeps;  // coordinate-descent passes per column
};

/// Column j minimizes ||x_j - X b||^2 + lambda ||b||_1 with b_j = 0, by cyclic
/// coordinate descent on the Gram matrix until the duality gap is <= gap_tol.
LassoResult lasso_nodewise(const Matrix& x, double lambda, double gap_tol = 1e-8,
                           int max_sweeps = 100000);
CoefficientMatrix lasso_nodewise(const StandardizedPanel& panel, double lambda);

/// Smallest lambda with an all-zero solution: 2 max_{k != j} |x_k^T x_j|.
double lasso_lambda_max(const Matrix& x);

/// Descending log-spaced grid from lambda_max to ratio * lambda_max.
std::vector<double> lasso_grid(const Matrix& x, int count = 30, double ratio = 1e-3);

struct LassoConfig {
  std::vector<double> lambda_grid;  // empty: lasso_grid(x)
  int cv_folds = 5;
  std::uint64_t seed = 0;
};

struct LassoCvResult {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_error;  // mean validation squared residual, per grid value
};

/// Row-wise K-fold cross-validation; ties go to the larger lambda.
LassoCvResult lasso_cv(const StandardizedPanel& panel, const LassoConfig& config);

/// Sample correlation matrix.
Matrix correlation(const Matrix& x);

/// cord(i,j) = min(max_l |rho_il - rho_jl|, max_l |rho_il + rho_jl|), l outside {i, j}.
DissimilarityMatrix cord_dissimilarity(const Matrix& rho);
DissimilarityMatrix cord_dissimilarity(const StandardizedPanel& panel);

/// 1 - rho_ij^2.
DissimilarityMatrix one_minus_rho_squared(const Matrix& rho);
DissimilarityMatrix one_minus_rho_squared(const StandardizedPanel& panel);

/// Average-linkage agglomerative clustering on D, cut at K clusters. Stand-in
/// for the ACC construction step; ties merge the lowest index pair first.
Partition acc_cluster(const DissimilarityMatrix& dissimilarity, int K);

struct KMedoidsResult {
  Partition partition;
  std::vector<Index> medoids;
  double cost = 0.0;
  std::vector<double> cost_history;  // after build, then after each swap
};

/// PAM: greedy build, then best-improvement swaps until none improves.
/// Ties in build and swap go to the lowest index, so the result is deterministic.
KMedoidsResult kmedoids(const DissimilarityMatrix& dissimilarity, int K);

}  // namespace drvc
