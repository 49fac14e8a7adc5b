#pragma once

#include "drvc/types.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace drvc {

enum class UpsilonMethod {
  FullSampleCovariance,  // (a)
  WishartDiagonal,       // (b)
};

std::string_view to_string(UpsilonMethod method);
UpsilonMethod upsilon_method_from_string(std::string_view name);

/// Covariance of the vectorized outer product g(x) = x x^T.
/// Method (a) stores the full d^2 x d^2 matrix (index i + d*j for entry (i,j));
/// method (b) stores only the d x d variances sigma_ii sigma_jj + sigma_ij^2.
struct UpsilonEstimate {
  UpsilonMethod method = UpsilonMethod::WishartDiagonal;
  Index d = 0;
  Matrix values;
};

/// Default cap for method (a): 512 MiB of doubles.
inline constexpr std::uint64_t kDefaultUpsilonMemoryCap = 512ull << 20;

UpsilonEstimate estimate_upsilon(const StandardizedPanel& panel, UpsilonMethod method,
                                 std::uint64_t memory_cap_bytes = kDefaultUpsilonMemoryCap);

/// Wishart-diagonal variances from a covariance matrix.
UpsilonEstimate wishart_upsilon(const Matrix& sigma);

/// M draws of Rbar = 1/4 sum_i Z_i^T diag(sigma_inv_diag) Z_i with Z ~ N(0, Upsilon)
/// symmetric. Draw m uses its own stream derived from (seed, m).
Vector sample_rbar(const UpsilonEstimate& upsilon, const Vector& sigma_inv_diag, Index M,
                   std::uint64_t seed);

/// Empirical quantile with linear interpolation between order statistics
/// (position p * (N - 1) in the sorted sample).
double quantile(std::vector<double> sample, double p);

struct DeltaEstimate {
  double delta = 0.0;
  double alpha = 0.05;
  Index M = 1000;
  UpsilonMethod method = UpsilonMethod::WishartDiagonal;
  std::uint64_t seed = 0;
  Index n = 0;
  /// Quantiles of Rbar / n at probs.
  std::vector<double> probs;
  std::vector<double> quantiles;
};

struct DeltaOptions {
  double alpha = 0.05;
  Index M = 1000;
  UpsilonMethod method = UpsilonMethod::WishartDiagonal;
  std::uint64_t memory_cap_bytes = kDefaultUpsilonMemoryCap;
};

DeltaEstimate select_delta(const StandardizedPanel& panel, const DeltaOptions& opts,
                           std::uint64_t seed);

/// (1 - alpha) quantile of samples / n, with the diagnostic quantiles filled in.
DeltaEstimate delta_from_samples(const Vector& rbar, Index n, double alpha);

}  // namespace drvc
