#include "drvc/clusterer.hpp"

#include "drvc/io.hpp"
#include "drvc/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace drvc {

SimilarityMatrix symmetrize(const CoefficientMatrix& b) { return {symmetrize(b.values())}; }

namespace {

double sq_dist(const Matrix& points, Index i, const Matrix& centers, Index k) {
  return (points.row(i) - centers.row(k)).squaredNorm();
}

KMeansResult kmeans_once(const Matrix& points, int K, std::uint64_t seed, int max_iter) {
  const Index n = points.rows();
  std::mt19937_64 rng(seed);
  Matrix centers(K, points.cols());
  Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
  const Index first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
  centers.row(0) = points.row(first);
  for (int k = 1; k < K; ++k) {
    for (Index i = 0; i < n; ++i) dist(i) = std::min(dist(i), sq_dist(points, i, centers, k - 1));
    const double total = dist.sum();
    Index pick = n - 1;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (Index i = 0; i < n; ++i) {
        u -= dist(i);
        if (u < 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    }
    centers.row(k) = points.row(pick);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  Vector best_d(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int arg = 0;
      double bd = sq_dist(points, i, centers, 0);
      for (int k = 1; k < K; ++k) {
        const double dk = sq_dist(points, i, centers, k);
        if (dk < bd) {
          bd = dk;
          arg = k;
        }
      }
      best_d(i) = bd;
      if (labels[static_cast<std::size_t>(i)] != arg) {
        labels[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    // Empty clusters take the point farthest from its center; bounded by K moves.
    for (int attempt = 0; attempt < K; ++attempt) {
      std::vector<Index> counts(static_cast<std::size_t>(K), 0);
      for (int l : labels) ++counts[static_cast<std::size_t>(l)];
      const auto empty = std::find(counts.begin(), counts.end(), Index{0});
      if (empty == counts.end()) break;
      Index far = -1;
      for (Index i = 0; i < n; ++i)
        if (counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] > 1 &&
            (far < 0 || best_d(i) > best_d(far)))
          far = i;
      if (far < 0) break;
      labels[static_cast<std::size_t>(far)] = static_cast<int>(empty - counts.begin());
      best_d(far) = 0.0;
      changed = true;
    }
    if (!changed && iter > 0) break;
    centers.setZero();
    std::vector<Index> counts(static_cast<std::size_t>(K), 0);
    for (Index i = 0; i < n; ++i) {
      centers.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int k = 0; k < K; ++k)
      if (counts[static_cast<std::size_t>(k)] > 0)
        centers.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }
  KMeansResult res;
  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i)
    res.inertia += sq_dist(points, i, centers, labels[static_cast<std::size_t>(i)]);
  res.labels = std::move(labels);
  res.centers = std::move(centers);
  return res;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int K, std::uint64_t seed, int restarts, int max_iter) {
  if (K < 1 || K > points.rows()) throw Error(ErrorKind::InvalidK, "need 1 <= K <= number of points");
  if (restarts < 1) throw Error(ErrorKind::InvalidInput, "restarts must be >= 1");
  std::vector<KMeansResult> runs(static_cast<std::size_t>(restarts));
  parallel_for(runs.size(), [&](std::size_t r) {
    runs[r] = kmeans_once(points, K, derive_seed(seed, r), max_iter);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

Partition spectral_cluster(const SimilarityMatrix& c, int K, std::uint64_t seed,
                           const SpectralOptions& opts) {
  const Index d = c.values.rows();
  if (c.values.cols() != d) throw Error(ErrorKind::InvalidInput, "similarity must be square");
  if (K < 1 || K > d) throw Error(ErrorKind::InvalidK, "need 1 <= K <= d");
  if (!c.values.allFinite() || (c.values.array() < 0).any())
    throw Error(ErrorKind::InvalidInput, "similarity must be finite and nonnegative");
  if (K == 1) return Partition(std::vector<int>(static_cast<std::size_t>(d), 1), 1);

  Matrix w = 0.5 * (c.values + c.values.transpose());
  w.diagonal().setZero();
  for (Index i = 0; i < d; ++i) {
    if (w.row(i).sum() > 0) continue;
    for (Index j = 0; j < d; ++j)
      if (j != i) w(i, j) = w(j, i) = std::max(w(i, j), opts.isolated_floor);
  }
  const Vector inv_sqrt = w.rowwise().sum().cwiseSqrt().cwiseInverse();
  const Matrix m = inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success || !es.eigenvectors().allFinite())
    throw Error(ErrorKind::NumericalFailure, "eigendecomposition of the affinity failed");
  // eigenvalues ascend, so the largest K are the last columns
  Matrix embed = es.eigenvectors().rightCols(K);
  for (Index i = 0; i < d; ++i) {
    const double norm = embed.row(i).norm();
    if (norm > 0) embed.row(i) /= norm;
  }
  const auto km = kmeans(embed, K, seed, opts.restarts, opts.max_iter);
  std::vector<int> labels(km.labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = km.labels[i] + 1;
  return Partition(std::move(labels), K);
}

namespace {

struct Contingency {
  std::vector<double> a, b;  // row and column sums
  std::vector<std::vector<double>> table;
  double n = 0;
};

Contingency contingency(const Partition& p, const Partition& q) {
  std::map<int, std::size_t> pi, qi;
  for (int l : p.labels()) pi.emplace(l, pi.size());
  for (int l : q.labels()) qi.emplace(l, qi.size());
  Contingency c;
  c.table.assign(pi.size(), std::vector<double>(qi.size(), 0.0));
  c.a.assign(pi.size(), 0.0);
  c.b.assign(qi.size(), 0.0);
  for (Index t = 0; t < p.size(); ++t) {
    const std::size_t i = pi.at(p[t]);
    const std::size_t j = qi.at(q[t]);
    c.table[i][j] += 1;
    c.a[i] += 1;
    c.b[j] += 1;
  }
  c.n = static_cast<double>(p.size());
  return c;
}

double entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts)
    if (c > 0) h -= (c / n) * std::log(c / n);
  return h;
}

double expected_mi(const Contingency& c) {
  const double n = c.n;
  const double lg_n = std::lgamma(n + 1);
  double emi = 0.0;
  for (double a : c.a)
    for (double b : c.b) {
      const double start = std::max(1.0, a + b - n);
      const double stop = std::min(a, b);
      const double base = std::lgamma(a + 1) + std::lgamma(b + 1) + std::lgamma(n - a + 1) +
                          std::lgamma(n - b + 1) - lg_n;
      for (double nij = start; nij <= stop; nij += 1) {
        const double log_p = base - std::lgamma(nij + 1) - std::lgamma(a - nij + 1) -
                             std::lgamma(b - nij + 1) - std::lgamma(n - a - b + nij + 1);
        emi += (nij / n) * std::log(n * nij / (a * b)) * std::exp(log_p);
      }
    }
  return emi;
}

}  // namespace

double ami(const Partition& p, const Partition& q) {
  if (p.size() != q.size()) throw Error(ErrorKind::InvalidInput, "partitions differ in length");
  if (p.size() == 0) throw Error(ErrorKind::InvalidInput, "empty partition");
  const Contingency c = contingency(p, q);
  double mi = 0.0;
  for (std::size_t i = 0; i < c.a.size(); ++i)
    for (std::size_t j = 0; j < c.b.size(); ++j) {
      const double nij = c.table[i][j];
      if (nij > 0) mi += (nij / c.n) * std::log(c.n * nij / (c.a[i] * c.b[j]));
    }
  const double hp = entropy(c.a, c.n);
  const double hq = entropy(c.b, c.n);
  const double emi = expected_mi(c);
  const double denom = 0.5 * (hp + hq) - emi;
  if (std::abs(denom) < 1e-12) {
    const bool same = Partition::from_labels(p.labels()) == Partition::from_labels(q.labels());
    return same ? 1.0 : 0.0;
  }
  return (mi - emi) / denom;
}

void export_heatmap(const std::filesystem::path& path, const SimilarityMatrix& c,
                    const Partition& partition) {
  const Index d = c.values.rows();
  if (partition.size() != d) throw Error(ErrorKind::InvalidInput, "partition length mismatch");
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return partition[x] < partition[y]; });
  Matrix out(d, d);
  std::vector<std::string> header;
  for (Index i = 0; i < d; ++i) {
    header.push_back("v" + std::to_string(order[static_cast<std::size_t>(i)] + 1));
    for (Index j = 0; j < d; ++j)
      out(i, j) = i == j ? 2.0 : c.values(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  io::write_csv(path, out, header);
  std::vector<Index> boundaries;
  for (Index i = 1; i < d; ++i)
    if (partition[order[static_cast<std::size_t>(i)]] != partition[order[static_cast<std::size_t>(i - 1)]])
      boundaries.push_back(i);
  io::json side{{"order", order}, {"labels", partition.labels()}, {"boundaries", boundaries},
                {"diagonal_fill", 2.0}};
  io::write_json(path.string() + ".json", side);
}

}  // namespace drvc
