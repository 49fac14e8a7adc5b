#pragma once

#include "drvc/types.hpp"

#include <cstdint>
#include <filesystem>

namespace drvc {

/// Symmetric nonnegative affinity with zero diagonal.
struct SimilarityMatrix {
  Matrix values;
};

/// C_ij = |b_ij| + |b_ji|.
template <class Derived>
Matrix symmetrize(const Eigen::MatrixBase<Derived>& b) {
  Matrix c = b.cwiseAbs() + b.transpose().cwiseAbs();
  c.diagonal().setZero();
  return c;
}

SimilarityMatrix symmetrize(const CoefficientMatrix& b);

struct SpectralOptions {
  int restarts = 10;
  int max_iter = 300;
  double isolated_floor = 1e-12;
};

/// Normalized spectral clustering: the K leading eigenvectors of
/// D^{-1/2} C D^{-1/2} (the bottom of the normalized Laplacian), rows scaled
/// to unit length, then k-means++ with restarts; the lowest inertia wins.
Partition spectral_cluster(const SimilarityMatrix& c, int K, std::uint64_t seed,
                           const SpectralOptions& opts = {});

struct KMeansResult {
  std::vector<int> labels;  // 0-based
  Matrix centers;
  double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeding; empty clusters are re-seeded at
/// the point farthest from its center.
KMeansResult kmeans(const Matrix& points, int K, std::uint64_t seed, int restarts = 10,
                    int max_iter = 300);

/// Adjusted mutual information with the hypergeometric expected MI and the
/// arithmetic mean of the entropies as normalizer.
double ami(const Partition& p, const Partition& q);

/// Writes C with its diagonal set to 2 and the rows/columns ordered by
/// cluster, plus `<path>.json` with the ordering and cluster boundaries.
void export_heatmap(const std::filesystem::path& path, const SimilarityMatrix& c,
                    const Partition& partition);

}  // namespace drvc
