#pragma once

#include "drvc/types.hpp"

#include <cstdint>
#include <optional>

namespace drvc {

/// Centers each column and scales it to unit sample standard deviation
/// (divisor n - 1). Throws ZeroVarianceColumn or InvalidData.
StandardizedPanel standardize(const Matrix& raw, std::vector<std::string> ids = {});

/// Uniform draw on [lo, hi]; lo == hi gives a fixed value.
struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters of the synthetic multi-factor block model sampler.
struct BlockModelParams {
  int K = 5;
  Index d = 100;
  Index n = 100;
  /// Unset: d_k uniform on 1..min(m_k - 1, n - 1). Set: every cluster uses it.
  std::optional<int> factors_per_cluster;
  /// With a fixed factor count, infeasible clusters (d_k >= m_k) trigger a
  /// resample of the cluster sizes when true and InvalidSpec when false.
  bool resample_infeasible = true;
  /// Squared loading on the hidden global factor, drawn per variable.
  UniformRange beta_h_sq{0.0, 0.0};
  /// Idiosyncratic variance, drawn per variable.
  UniformRange noise_var{0.1, 0.1};
  std::uint64_t seed = 0;
};

/// Generative parameters of a realised block model (population view).
struct BlockModelSpec {
  int K = 0;
  std::vector<Index> cluster_sizes;   // m_k
  std::vector<Index> factor_counts;   // d_k
  Matrix loadings;                    // A, d x D
  Matrix factor_cov;                  // Sigma_F, D x D
  Vector noise_var;                   // diag(Gamma)
  Vector common_loading;              // beta_H(i)
  std::vector<Index> factor_pool_ids; // pool index of each stacked factor
  std::uint64_t seed = 0;

  Index dim() const { return loadings.rows(); }
  Index factor_dim() const { return loadings.cols(); }
  /// Throws InvalidSpec when the invariants of the block model fail.
  void validate(const std::vector<int>& assignment) const;
};

struct GeneratedSample {
  StandardizedPanel panel;
  Partition truth;
  BlockModelSpec spec;
  Matrix raw;  // Y + U before standardization
};

GeneratedSample generate_block_model(const BlockModelParams& params);

/// A Sigma_F A^T + beta_H beta_H^T + Gamma.
CovarianceEstimate population_covariance(const BlockModelSpec& spec);

/// Population nodewise regression: column i regresses X_i on the others,
/// b_ji = -Theta_ji / Theta_ii for Theta = Sigma^{-1}.
CoefficientMatrix population_nodewise(const CovarianceEstimate& sigma);

/// Sample second-moment matrix X^T X / (n - 1).
CovarianceEstimate sample_second_moment(const StandardizedPanel& panel);

}  // namespace drvc
