#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace drvc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorKind {
  InvalidData,
  InvalidInput,
  ZeroVarianceColumn,
  InvalidSpec,
  SingularCovariance,
  SolverStalled,
  MemoryCapExceeded,
  InvalidUpsilon,
  InvalidFolds,
  InsufficientVariables,
  InvalidK,
  NumericalFailure,
  InvalidCsv,
  EmptyUniverse,
  InvalidCovariance,
  InsufficientHistory,
  InvalidConfig,
};

std::string_view to_string(ErrorKind kind);

/// True for kinds that come from numerical breakdown rather than bad input.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// n x d observation matrix whose columns have zero mean and unit sample
/// standard deviation (divisor n - 1). Only `standardize` and `adopt` create one.
class StandardizedPanel {
 public:
  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& column_ids() const noexcept { return ids_; }
  Index n() const noexcept { return values_.rows(); }
  Index d() const noexcept { return values_.cols(); }

  /// Wraps data that is already standardized; verifies the invariants
  /// (mean 1e-10, sd 1e-8) and throws InvalidData otherwise.
  static StandardizedPanel adopt(Matrix values, std::vector<std::string> ids = {});

 private:
  friend StandardizedPanel standardize(const Matrix& raw, std::vector<std::string> ids);
  StandardizedPanel(Matrix values, std::vector<std::string> ids);

  Matrix values_;
  std::vector<std::string> ids_;
};

std::vector<std::string> default_column_ids(Index d);

/// Cluster assignment with labels in 1..K.
class Partition {
 public:
  Partition() = default;
  Partition(std::vector<int> labels, int k);

  /// Relabels arbitrary integer labels to 1..K in order of first appearance.
  static Partition from_labels(const std::vector<int>& raw);

  const std::vector<int>& labels() const noexcept { return labels_; }
  int k() const noexcept { return k_; }
  Index size() const noexcept { return static_cast<Index>(labels_.size()); }
  int operator[](Index i) const { return labels_[static_cast<std::size_t>(i)]; }

  /// Some label in 1..K has no member.
  bool degenerate() const;
  std::vector<Index> members(int label) const;
  std::vector<Index> cluster_sizes() const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<int> labels_;
  int k_ = 0;
};

/// d x d regression coefficients with an exactly zero diagonal.
class CoefficientMatrix {
 public:
  CoefficientMatrix() = default;
  explicit CoefficientMatrix(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  Index dim() const noexcept { return values_.rows(); }

  /// I - B.
  Matrix complement() const;

 private:
  Matrix values_;
};

enum class CovarianceKind { Population, SampleSecondMoment };

struct CovarianceEstimate {
  Matrix matrix;
  CovarianceKind kind = CovarianceKind::Population;
};

/// Deterministic 64-bit mixer used to derive independent child seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace drvc
