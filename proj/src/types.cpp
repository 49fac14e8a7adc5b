#include "drvc/types.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace drvc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidData: return "InvalidData";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::SolverStalled: return "SolverStalled";
    case ErrorKind::MemoryCapExceeded: return "MemoryCapExceeded";
    case ErrorKind::InvalidUpsilon: return "InvalidUpsilon";
    case ErrorKind::InvalidFolds: return "InvalidFolds";
    case ErrorKind::InsufficientVariables: return "InsufficientVariables";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::InvalidCsv: return "InvalidCsv";
    case ErrorKind::EmptyUniverse: return "EmptyUniverse";
    case ErrorKind::InvalidCovariance: return "InvalidCovariance";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularCovariance:
    case ErrorKind::SolverStalled:
    case ErrorKind::NumericalFailure:
    case ErrorKind::InvalidCovariance:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

std::vector<std::string> default_column_ids(Index d) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) ids.push_back("x" + std::to_string(j + 1));
  return ids;
}

StandardizedPanel::StandardizedPanel(Matrix values, std::vector<std::string> ids)
    : values_(std::move(values)), ids_(std::move(ids)) {
  if (ids_.empty()) ids_ = default_column_ids(values_.cols());
  if (static_cast<Index>(ids_.size()) != values_.cols())
    throw Error(ErrorKind::InvalidInput, "column id count does not match panel width");
}

StandardizedPanel StandardizedPanel::adopt(Matrix values, std::vector<std::string> ids) {
  const Index n = values.rows();
  if (n < 2 || values.cols() < 2)
    throw Error(ErrorKind::InvalidData, "panel needs n >= 2 and d >= 2");
  if (!values.allFinite()) throw Error(ErrorKind::InvalidData, "non-finite entry");
  for (Index j = 0; j < values.cols(); ++j) {
    const double mean = values.col(j).mean();
    const double sd = std::sqrt((values.col(j).array() - mean).square().sum() /
                                static_cast<double>(n - 1));
    if (std::abs(mean) > 1e-10 || std::abs(sd - 1.0) > 1e-8)
      throw Error(ErrorKind::InvalidData,
                  "column " + std::to_string(j) + " is not standardized");
  }
  return StandardizedPanel(std::move(values), std::move(ids));
}

Partition::Partition(std::vector<int> labels, int k) : labels_(std::move(labels)), k_(k) {
  if (k_ < 1) throw Error(ErrorKind::InvalidK, "partition needs K >= 1");
  for (int l : labels_)
    if (l < 1 || l > k_)
      throw Error(ErrorKind::InvalidInput,
                  "label " + std::to_string(l) + " outside 1.." + std::to_string(k_));
}

Partition Partition::from_labels(const std::vector<int>& raw) {
  std::unordered_map<int, int> remap;
  std::vector<int> out;
  out.reserve(raw.size());
  for (int l : raw) {
    auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()) + 1);
    out.push_back(it->second);
  }
  const int k = std::max<int>(1, static_cast<int>(remap.size()));
  return Partition(std::move(out), k);
}

bool Partition::degenerate() const {
  auto sizes = cluster_sizes();
  return std::any_of(sizes.begin(), sizes.end(), [](Index s) { return s == 0; });
}

std::vector<Index> Partition::members(int label) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) out.push_back(static_cast<Index>(i));
  return out;
}

std::vector<Index> Partition::cluster_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(k_), 0);
  for (int l : labels_) ++sizes[static_cast<std::size_t>(l - 1)];
  return sizes;
}

CoefficientMatrix::CoefficientMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols())
    throw Error(ErrorKind::InvalidInput, "coefficient matrix must be square");
  if (!values_.allFinite()) throw Error(ErrorKind::NumericalFailure, "non-finite coefficient");
  values_.diagonal().setZero();
}

Matrix CoefficientMatrix::complement() const {
  Matrix h = -values_;
  h.diagonal().setOnes();
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 over a combination of both inputs
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace drvc
