#include "drvc/portfolio.hpp"

#include "drvc/baselines.hpp"
#include "drvc/clusterer.hpp"
#include "drvc/datamodel.hpp"
#include "drvc/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace drvc {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  const bool shape = text.size() == 10 && text[4] == '-' && text[7] == '-';
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return res.ec == std::errc() && res.ptr == text.data() + pos + len;
  };
  if (!shape || !num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d))
    throw Error(ErrorKind::InvalidCsv, "unparseable date '" + text + "'");
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw Error(ErrorKind::InvalidCsv, "invalid date '" + text + "'");
  return date;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

void ReturnPanel::validate() const {
  if (static_cast<Index>(dates.size()) != returns.rows() ||
      static_cast<Index>(tickers.size()) != returns.cols() || missing.rows() != returns.rows() ||
      missing.cols() != returns.cols())
    throw Error(ErrorKind::InvalidData, "return panel dimensions disagree");
  for (std::size_t t = 1; t < dates.size(); ++t)
    if (!(dates[t - 1] < dates[t])) throw Error(ErrorKind::InvalidData, "dates must strictly increase");
  for (Index t = 0; t < returns.rows(); ++t)
    for (Index j = 0; j < returns.cols(); ++j)
      if (!std::isnan(returns(t, j)) && !(returns(t, j) > -1.0))
        throw Error(ErrorKind::InvalidData, "return <= -1 for " + tickers[static_cast<std::size_t>(j)]);
}

ReturnPanel ReturnPanel::select_columns(const std::vector<Index>& columns) const {
  ReturnPanel out;
  out.dates = dates;
  out.returns.resize(returns.rows(), static_cast<Index>(columns.size()));
  out.missing.resize(returns.rows(), static_cast<Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.tickers.push_back(tickers[static_cast<std::size_t>(columns[c])]);
    out.returns.col(static_cast<Index>(c)) = returns.col(columns[c]);
    out.missing.col(static_cast<Index>(c)) = missing.col(columns[c]);
  }
  return out;
}

namespace {

struct RawTable {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  Matrix values;
};

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

RawTable read_table(std::istream& in) {
  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (line.back() == ',') cells.emplace_back();
    if (header) {
      if (cells.size() < 2) throw Error(ErrorKind::InvalidCsv, "need a date column and at least one ticker");
      table.tickers.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    if (cells.size() != table.tickers.size() + 1)
      throw Error(ErrorKind::InvalidCsv, "ragged row " + std::to_string(line_no));
    table.dates.push_back(parse_date(cells[0]));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      if (s.empty() || s == "NA" || s == "NaN" || s == "nan") {
        row.push_back(kNaN);
        continue;
      }
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::InvalidCsv, "bad number '" + s + "' on line " + std::to_string(line_no));
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (header) throw Error(ErrorKind::InvalidCsv, "empty file");
  for (std::size_t t = 1; t < table.dates.size(); ++t)
    if (!(table.dates[t - 1] < table.dates[t]))
      throw Error(ErrorKind::InvalidCsv, "dates must strictly increase (" + format_date(table.dates[t]) + ")");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.tickers.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < rows[t].size(); ++j)
      table.values(static_cast<Index>(t), static_cast<Index>(j)) = rows[t][j];
  return table;
}

}  // namespace

ReturnPanel load_returns(std::istream& in, const LoadOptions& opts, LoadReport* report) {
  if (!(opts.max_missing >= 0 && opts.max_missing < 1))
    throw Error(ErrorKind::InvalidInput, "max_missing must lie in [0, 1)");
  RawTable table = read_table(in);
  const Index T = table.values.rows();
  const Index d = table.values.cols();
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  std::vector<Index> observed(static_cast<std::size_t>(d), 0);
  for (Index j = 0; j < d; ++j)
    observed[static_cast<std::size_t>(j)] = (table.values.col(j).array() == table.values.col(j).array()).count();

  std::vector<char> keep(static_cast<std::size_t>(d), 1);
  // share classes: the longest history per group survives, ties to the first ticker name
  std::map<std::string, Index> group_best;
  for (Index j = 0; j < d; ++j) {
    const auto it = opts.share_class.find(table.tickers[static_cast<std::size_t>(j)]);
    if (it == opts.share_class.end()) continue;
    auto [slot, fresh] = group_best.emplace(it->second, j);
    if (fresh) continue;
    const Index cur = slot->second;
    const auto oj = observed[static_cast<std::size_t>(j)], oc = observed[static_cast<std::size_t>(cur)];
    if (oj > oc || (oj == oc && table.tickers[static_cast<std::size_t>(j)] < table.tickers[static_cast<std::size_t>(cur)]))
      slot->second = j;
  }
  for (Index j = 0; j < d; ++j) {
    const auto it = opts.share_class.find(table.tickers[static_cast<std::size_t>(j)]);
    if (it != opts.share_class.end() && group_best.at(it->second) != j) {
      keep[static_cast<std::size_t>(j)] = 0;
      rep.dropped_share_class.push_back(table.tickers[static_cast<std::size_t>(j)]);
    }
  }
  const Index win = opts.window > 0 ? std::min(opts.window, T) : T;
  for (Index j = 0; j < d; ++j) {
    if (!keep[static_cast<std::size_t>(j)]) continue;
    const std::string& name = table.tickers[static_cast<std::size_t>(j)];
    if (observed[static_cast<std::size_t>(j)] < std::max<Index>(opts.min_history, 1)) {
      keep[static_cast<std::size_t>(j)] = 0;
      rep.dropped_history.push_back(name);
      continue;
    }
    const auto tail = table.values.col(j).tail(win).array();
    const double frac = static_cast<double>((tail != tail).count()) / static_cast<double>(win);
    if (frac > opts.max_missing) {
      keep[static_cast<std::size_t>(j)] = 0;
      rep.dropped_missing.push_back(name);
    }
  }
  std::vector<Index> cols;
  for (Index j = 0; j < d; ++j)
    if (keep[static_cast<std::size_t>(j)]) cols.push_back(j);
  if (cols.empty()) throw Error(ErrorKind::EmptyUniverse, "every ticker was filtered out");

  ReturnPanel panel;
  const Index k = static_cast<Index>(cols.size());
  for (Index c : cols) panel.tickers.push_back(table.tickers[static_cast<std::size_t>(c)]);

  if (opts.kind == InputKind::Price) {
    if (T < 2) throw Error(ErrorKind::InvalidCsv, "need at least two price rows");
    Matrix prices(T, k);
    for (Index c = 0; c < k; ++c) {
      Vector p = table.values.col(cols[static_cast<std::size_t>(c)]);
      Index first = -1, last = -1;
      for (Index t = 0; t < T; ++t)
        if (!std::isnan(p(t))) {
          if (!(p(t) > 0)) throw Error(ErrorKind::InvalidData, "nonpositive price for " + panel.tickers[static_cast<std::size_t>(c)]);
          if (first < 0) first = t;
          last = t;
        }
      for (Index t = first + 1; t < last; ++t) {
        if (!std::isnan(p(t))) continue;
        Index next = t + 1;
        while (std::isnan(p(next))) ++next;
        const double w = 1.0 / static_cast<double>(next - t + 1);
        p(t) = p(t - 1) + w * (p(next) - p(t - 1));
      }
      prices.col(c) = p;
    }
    panel.dates.assign(table.dates.begin() + 1, table.dates.end());
    panel.returns = prices.bottomRows(T - 1).array() / prices.topRows(T - 1).array() - 1.0;
    panel.missing = panel.returns.array() != panel.returns.array();
  } else {
    panel.dates = table.dates;
    panel.returns.resize(T, k);
    panel.missing.resize(T, k);
    for (Index c = 0; c < k; ++c) {
      Vector r = table.values.col(cols[static_cast<std::size_t>(c)]);
      Index first = -1, last = -1;
      for (Index t = 0; t < T; ++t)
        if (!std::isnan(r(t))) {
          if (first < 0) first = t;
          last = t;
        }
      for (Index t = 0; t < T; ++t) {
        panel.missing(t, c) = std::isnan(r(t));
        if (std::isnan(r(t)) && t > first && t < last) r(t) = 0.0;
      }
      panel.returns.col(c) = r;
    }
  }
  panel.validate();
  return panel;
}

ReturnPanel load_returns(const std::filesystem::path& path, const LoadOptions& opts,
                         LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidCsv, "cannot open " + path.string());
  return load_returns(in, opts, report);
}

Partition hierarchical_cluster(const Matrix& window, int K1, int K2,
                               const HierarchicalOptions& opts, std::uint64_t seed) {
  const Index d = window.cols();
  if (K1 < 1 || K2 < 1 || static_cast<Index>(K1) * K2 > d)
    throw Error(ErrorKind::InvalidK, "need K1, K2 >= 1 and K1 * K2 <= d");
  const StandardizedPanel panel = standardize(window);
  Partition top(std::vector<int>(static_cast<std::size_t>(d), 1), 1);
  if (K1 > 1) {
    const DeltaEstimate delta = select_delta(panel, opts.delta, derive_seed(seed, 0));
    const FitResult fit = admm_fit(panel, delta.delta, opts.solver);
    top = spectral_cluster(symmetrize(fit.coefficients), K1, derive_seed(seed, 1));
  }
  std::vector<int> flat(static_cast<std::size_t>(d), 0);
  for (int k = 1; k <= top.k(); ++k) {
    const std::vector<Index> members = top.members(k);
    const auto m = static_cast<Index>(members.size());
    std::vector<int> sub(members.size(), 1);
    if (K2 > 1 && m <= K2) {
      std::iota(sub.begin(), sub.end(), 1);
    } else if (K2 > 1) {
      Matrix cols(window.rows(), m);
      for (Index c = 0; c < m; ++c) cols.col(c) = window.col(members[static_cast<std::size_t>(c)]);
      sub = acc_cluster(cord_dissimilarity(correlation(cols)), K2).labels();
    }
    for (std::size_t c = 0; c < members.size(); ++c)
      flat[static_cast<std::size_t>(members[c])] = (k - 1) * K2 + sub[c];
  }
  return Partition::from_labels(flat);
}

std::vector<Index> select_low_vol(const Matrix& window, const std::vector<std::string>& tickers,
                                  const Partition& partition) {
  const Index d = window.cols();
  if (partition.size() != d || static_cast<Index>(tickers.size()) != d)
    throw Error(ErrorKind::InvalidInput, "partition does not cover the window's tickers");
  if (window.rows() < 2) throw Error(ErrorKind::InsufficientHistory, "need two rows for a variance");
  const Matrix centered = window.rowwise() - window.colwise().mean();
  const Vector var = centered.colwise().squaredNorm() / static_cast<double>(window.rows() - 1);
  std::vector<Index> picks;
  for (int k = 1; k <= partition.k(); ++k) {
    const auto members = partition.members(k);
    if (members.empty()) {
      std::clog << "select_low_vol: cluster " << k << " is empty, skipped\n";
      continue;
    }
    Index best = members.front();
    for (Index i : members)
      if (var(i) < var(best) ||
          (var(i) == var(best) && tickers[static_cast<std::size_t>(i)] < tickers[static_cast<std::size_t>(best)]))
        best = i;
    picks.push_back(best);
  }
  return picks;
}

Vector project_simplex(const Vector& v) {
  const Index k = v.size();
  if (k == 0) throw Error(ErrorKind::InvalidInput, "empty vector");
  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (Index i = 0; i < k; ++i) {
    cumsum += u[static_cast<std::size_t>(i)];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

double min_variance_kkt(const Matrix& s, const Vector& w) {
  const Vector g = s * w;
  const double nu = w.dot(g);
  double res = 0.0;
  for (Index i = 0; i < w.size(); ++i)
    res = std::max(res, w(i) > 0 ? std::abs(g(i) - nu) : std::max(0.0, nu - g(i)));
  return res;
}

WeightVector min_variance_weights(const CovarianceEstimate& sigma) {
  const Index k = sigma.matrix.rows();
  if (k == 0 || sigma.matrix.cols() != k) throw Error(ErrorKind::InvalidInput, "covariance must be square and nonempty");
  if (!sigma.matrix.allFinite()) throw Error(ErrorKind::InvalidCovariance, "non-finite covariance");
  Matrix s = 0.5 * (sigma.matrix + sigma.matrix.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < -1e-8)
    throw Error(ErrorKind::InvalidCovariance, "covariance has eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  if (es.eigenvalues().minCoeff() < 0)
    s = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();

  WeightVector out;
  if (k == 1) {
    out.weights = Vector::Ones(1);
    return out;
  }
  const double lmax = std::max(es.eigenvalues().maxCoeff(), 1e-300);
  const double step = 1.0 / (2.0 * lmax);
  Vector w = Vector::Constant(k, 1.0 / static_cast<double>(k));
  Vector y = w;
  double t = 1.0;
  for (int it = 1; it <= 5000; ++it) {
    const Vector next = project_simplex(y - step * 2.0 * (s * y));
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / tn) * (next - w);
    const double moved = (next - w).lpNorm<Eigen::Infinity>();
    w = next;
    t = tn;
    out.iterations = it;
    if (moved < 1e-13) break;
  }

  // Active-set polish: exact minimizer on the support, stepping back to the
  // boundary whenever a weight would turn negative.
  std::vector<char> in(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) in[static_cast<std::size_t>(i)] = w(i) > 1e-12;
  for (int iter = 0; iter < 10 * static_cast<int>(k) + 10; ++iter) {
    std::vector<Index> sup;
    for (Index i = 0; i < k; ++i)
      if (in[static_cast<std::size_t>(i)]) sup.push_back(i);
    const auto m = static_cast<Index>(sup.size());
    Matrix kkt = Matrix::Zero(m + 1, m + 1);
    for (Index a = 0; a < m; ++a) {
      for (Index b = 0; b < m; ++b) kkt(a, b) = 2.0 * s(sup[static_cast<std::size_t>(a)], sup[static_cast<std::size_t>(b)]);
      kkt(a, m) = kkt(m, a) = 1.0;
    }
    Vector rhs = Vector::Zero(m + 1);
    rhs(m) = 1.0;
    const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    Vector target = Vector::Zero(k);
    for (Index a = 0; a < m; ++a) target(sup[static_cast<std::size_t>(a)]) = sol(a);
    if (!target.allFinite()) break;
    if (target.minCoeff() >= 0) {
      w = target / target.sum();
      const Vector g = s * w;
      const double nu = w.dot(g);
      Index add = -1;
      for (Index i = 0; i < k; ++i)
        if (!in[static_cast<std::size_t>(i)] && g(i) < nu - 1e-15 * std::max(1.0, std::abs(nu)) &&
            (add < 0 || g(i) < g(add)))
          add = i;
      if (add < 0) break;
      in[static_cast<std::size_t>(add)] = 1;
      continue;
    }
    double alpha = 1.0;
    for (Index i = 0; i < k; ++i)
      if (target(i) < 0) alpha = std::min(alpha, w(i) / (w(i) - target(i)));
    w += alpha * (target - w);
    for (Index i = 0; i < k; ++i)
      if (w(i) <= 1e-15) {
        w(i) = 0.0;
        in[static_cast<std::size_t>(i)] = 0;
      }
    w /= w.sum();
  }
  out.weights = w;
  out.kkt_residual = min_variance_kkt(s, w);
  return out;
}

Frequency frequency_from_string(const std::string& name) {
  if (name == "daily") return Frequency::Daily;
  if (name == "monthly") return Frequency::Monthly;
  if (name == "quarterly") return Frequency::Quarterly;
  if (name == "annual" || name == "annually" || name == "yearly") return Frequency::Annual;
  throw Error(ErrorKind::InvalidInput, "unknown rebalance frequency '" + name + "'");
}

std::string to_string(Frequency f) {
  switch (f) {
    case Frequency::Daily: return "daily";
    case Frequency::Monthly: return "monthly";
    case Frequency::Quarterly: return "quarterly";
    case Frequency::Annual: return "annual";
  }
  return "annual";
}

std::vector<Index> rebalance_rows(const std::vector<Date>& dates, const Schedule& schedule) {
  if (schedule.anchor_month < 1 || schedule.anchor_month > 12)
    throw Error(ErrorKind::InvalidInput, "anchor month must lie in 1..12");
  auto key = [&](const Date& dt) -> long {
    const long months = static_cast<long>(static_cast<int>(dt.year())) * 12 +
                        static_cast<long>(static_cast<unsigned>(dt.month())) - schedule.anchor_month;
    auto floor_div = [](long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    switch (schedule.frequency) {
      case Frequency::Daily: return 0;
      case Frequency::Monthly: return months;
      case Frequency::Quarterly: return floor_div(months, 3);
      case Frequency::Annual: return floor_div(months, 12);
    }
    return 0;
  };
  std::vector<Index> rows;
  for (std::size_t t = 0; t < dates.size(); ++t)
    if (schedule.frequency == Frequency::Daily || t == 0 || key(dates[t]) != key(dates[t - 1]))
      rows.push_back(static_cast<Index>(t));
  return rows;
}

BacktestLedger run_backtest(const ReturnPanel& panel, const Schedule& schedule, Index lookback,
                            const Allocator& allocator) {
  if (lookback < 1) throw Error(ErrorKind::InvalidInput, "lookback must be >= 1");
  const Index T = panel.periods();
  const Index d = panel.assets();
  std::vector<Index> rows;
  for (Index t : rebalance_rows(panel.dates, schedule))
    if (t >= lookback - 1 && t < T - 1) rows.push_back(t);
  if (rows.empty())
    throw Error(ErrorKind::InsufficientHistory,
                "no rebalance date has " + std::to_string(lookback) + " rows of history and a day to hold");
  const Index t0 = rows.front();
  BacktestLedger ledger;
  ledger.dates.assign(panel.dates.begin() + t0, panel.dates.end());
  ledger.returns.resize(T - 1 - t0);
  ledger.vami.resize(T - t0);
  ledger.vami(0) = kVamiBase;
  Vector w = Vector::Zero(d);
  std::size_t next = 0;
  for (Index t = t0; t < T - 1; ++t) {
    if (next < rows.size() && rows[next] == t) {
      ++next;
      const Allocation alloc = allocator(panel, t, lookback);
      if (alloc.assets.size() != static_cast<std::size_t>(alloc.weights.size()) || alloc.assets.empty())
        throw Error(ErrorKind::InvalidInput, "allocation assets and weights disagree");
      if ((alloc.weights.array() < 0).any() || std::abs(alloc.weights.sum() - 1.0) > 1e-10)
        throw Error(ErrorKind::InvalidInput, "allocation weights must be nonnegative and sum to 1");
      w.setZero();
      RebalanceRecord rec{t, panel.dates[static_cast<std::size_t>(t)], {}, alloc.weights};
      for (std::size_t a = 0; a < alloc.assets.size(); ++a) {
        w(alloc.assets[a]) += alloc.weights(static_cast<Index>(a));
        rec.tickers.push_back(panel.tickers[static_cast<std::size_t>(alloc.assets[a])]);
      }
      ledger.rebalances.push_back(std::move(rec));
    }
    Vector r = panel.returns.row(t + 1).transpose();
    for (Index j = 0; j < d; ++j)
      if (std::isnan(r(j))) r(j) = 0.0;
    const double rp = w.dot(r);
    ledger.returns(t - t0) = rp;
    ledger.vami(t - t0 + 1) = ledger.vami(t - t0) * (1.0 + rp);
    if (1.0 + rp > 0) w = (w.array() * (1.0 + r.array())).matrix() / (1.0 + rp);
  }
  return ledger;
}

namespace {

double sample_sd(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace

MetricsReport compute_metrics(const BacktestLedger& ledger, const std::optional<Vector>& benchmark) {
  const Vector& r = ledger.returns;
  const Index T = r.size();
  if (T < 2) throw Error(ErrorKind::InsufficientHistory, "need at least two periods for metrics");
  if (ledger.vami.size() != T + 1 || static_cast<Index>(ledger.dates.size()) != T + 1)
    throw Error(ErrorKind::InvalidInput, "ledger series lengths disagree");
  MetricsReport m;
  m.periods = T;
  m.ending_vami = ledger.vami(T);
  m.ann_return = std::pow(m.ending_vami / kVamiBase, kAnnualization / static_cast<double>(T)) - 1.0;
  std::vector<double> all(r.data(), r.data() + T), neg;
  for (double v : all) {
    if (v > 0) ++m.positive_periods;
    else {
      ++m.negative_periods;
      if (v < 0) neg.push_back(v);
    }
  }
  m.ann_volatility = sample_sd(all) * std::sqrt(kAnnualization);
  if (m.ann_volatility > 0) m.sharpe = m.ann_return / m.ann_volatility;
  if (neg.size() >= 2) {
    m.ann_downside_volatility = sample_sd(neg) * std::sqrt(kAnnualization);
    if (*m.ann_downside_volatility > 0) m.sortino = m.ann_return / *m.ann_downside_volatility;
  }

  double peak = ledger.vami(0);
  Index peak_at = 0, dd_peak = 0, dd_valley = 0;
  for (Index t = 1; t <= T; ++t) {
    if (ledger.vami(t) > peak) {
      peak = ledger.vami(t);
      peak_at = t;
    }
    const double dd = 1.0 - ledger.vami(t) / peak;
    if (dd > m.max_drawdown) {
      m.max_drawdown = dd;
      dd_peak = peak_at;
      dd_valley = t;
    }
  }
  if (m.max_drawdown > 0) {
    m.calmar = m.ann_return / m.max_drawdown;
    m.peak_date = ledger.dates[static_cast<std::size_t>(dd_peak)];
    m.valley_date = ledger.dates[static_cast<std::size_t>(dd_valley)];
    for (Index t = dd_valley + 1; t <= T; ++t)
      if (ledger.vami(t) >= ledger.vami(dd_peak)) {
        m.recovery_days = t - dd_valley;
        break;
      }
  }

  if (benchmark) {
    const Vector& b = *benchmark;
    if (b.size() != T) throw Error(ErrorKind::InvalidInput, "benchmark length differs from the ledger");
    const Vector rc = r.array() - r.mean();
    const Vector bc = b.array() - b.mean();
    const double cov = rc.dot(bc) / static_cast<double>(T - 1);
    const double vb = bc.squaredNorm() / static_cast<double>(T - 1);
    const double vr = rc.squaredNorm() / static_cast<double>(T - 1);
    if (vb > 0) m.beta = cov / vb;
    if (vb > 0 && vr > 0) m.correlation = cov / std::sqrt(vb * vr);
  }
  return m;
}

BacktestResult backtest(const ReturnPanel& panel, const BacktestOptions& opts) {
  panel.validate();
  Index bench = -1;
  if (opts.benchmark) {
    const auto it = std::find(panel.tickers.begin(), panel.tickers.end(), *opts.benchmark);
    if (it == panel.tickers.end()) throw Error(ErrorKind::InvalidInput, "benchmark column '" + *opts.benchmark + "' not found");
    bench = it - panel.tickers.begin();
  }
  Allocator allocate = [&](const ReturnPanel& p, Index t, Index lookback) {
    const Index start = t - lookback + 1;
    std::vector<Index> universe;
    for (Index j = 0; j < p.assets(); ++j) {
      if (j == bench) continue;
      if (p.missing.col(j).segment(start, lookback).any()) continue;
      const auto col = p.returns.col(j).segment(start, lookback);
      if ((col.array() - col.mean()).square().sum() <= 0) continue;
      universe.push_back(j);
    }
    if (universe.empty())
      throw Error(ErrorKind::EmptyUniverse, "no asset has a complete window at " + format_date(p.dates[static_cast<std::size_t>(t)]));
    Matrix window(lookback, static_cast<Index>(universe.size()));
    std::vector<std::string> names;
    for (std::size_t c = 0; c < universe.size(); ++c) {
      window.col(static_cast<Index>(c)) = p.returns.col(universe[c]).segment(start, lookback);
      names.push_back(p.tickers[static_cast<std::size_t>(universe[c])]);
    }
    const Partition part = hierarchical_cluster(window, opts.K1, opts.K2, opts.cluster,
                                                derive_seed(opts.seed, static_cast<std::uint64_t>(t)));
    const std::vector<Index> picks = select_low_vol(window, names, part);
    Matrix chosen(lookback, static_cast<Index>(picks.size()));
    for (std::size_t c = 0; c < picks.size(); ++c) chosen.col(static_cast<Index>(c)) = window.col(picks[c]);
    const Matrix centered = chosen.rowwise() - chosen.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(lookback - 1);
    const WeightVector wv = min_variance_weights({cov, CovarianceKind::SampleSecondMoment});
    Allocation alloc;
    for (Index pick : picks) alloc.assets.push_back(universe[static_cast<std::size_t>(pick)]);
    alloc.weights = wv.weights;
    return alloc;
  };
  BacktestResult res;
  res.ledger = run_backtest(panel, opts.schedule, opts.lookback, allocate);
  std::optional<Vector> bench_returns;
  if (bench >= 0) {
    Vector b = panel.returns.col(bench).tail(res.ledger.returns.size());
    for (Index t = 0; t < b.size(); ++t)
      if (std::isnan(b(t))) b(t) = 0.0;
    bench_returns = std::move(b);
  }
  res.metrics = compute_metrics(res.ledger, bench_returns);
  return res;
}

SyntheticMarket synthetic_market(const SyntheticMarketParams& p) {
  if (p.periods < 2 || p.sectors < 1 || p.assets_per_sector < 1)
    throw Error(ErrorKind::InvalidInput, "synthetic market needs periods >= 2 and at least one asset");
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index d = static_cast<Index>(p.sectors) * p.assets_per_sector;
  SyntheticMarket mk;
  for (int s = 0; s < p.sectors; ++s)
    for (Index a = 0; a < p.assets_per_sector; ++a) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "S%d_%02ld", s + 1, static_cast<long>(a + 1));
      mk.tickers.emplace_back(buf);
    }
  mk.tickers.emplace_back("MKT");
  Vector beta(d), idio(d), sector_load(d);
  for (Index i = 0; i < d; ++i) {
    beta(i) = 0.6 + 0.6 * unif(rng);
    sector_load(i) = 0.7 + 0.6 * unif(rng);
    idio(i) = p.idio_vol * (0.5 + unif(rng));
  }
  std::chrono::sys_days day{std::chrono::year{2015} / std::chrono::January / 5};
  mk.prices.resize(p.periods + 1, d + 1);
  mk.prices.row(0).setConstant(100.0);
  mk.dates.push_back(Date{day});
  for (Index t = 1; t <= p.periods; ++t) {
    do {
      day += std::chrono::days{1};
    } while (std::chrono::weekday{day} == std::chrono::Saturday || std::chrono::weekday{day} == std::chrono::Sunday);
    mk.dates.push_back(Date{day});
    const double market = p.market_vol * normal(rng);
    Vector sector(p.sectors);
    for (int s = 0; s < p.sectors; ++s) sector(s) = p.sector_vol * normal(rng);
    for (Index i = 0; i < d; ++i) {
      const double r = p.drift + beta(i) * market + sector_load(i) * sector(i / p.assets_per_sector) +
                       idio(i) * normal(rng);
      mk.prices(t, i) = mk.prices(t - 1, i) * (1.0 + std::max(r, -0.5));
    }
    mk.prices(t, d) = mk.prices(t - 1, d) * (1.0 + p.drift + market);
  }
  return mk;
}

void write_prices(const std::filesystem::path& path, const SyntheticMarket& market,
                  const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path.string());
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "date";
  for (const auto& t : market.tickers) out << ',' << t;
  out << '\n';
  for (Index t = 0; t < market.prices.rows(); ++t) {
    out << format_date(market.dates[static_cast<std::size_t>(t)]);
    for (Index j = 0; j < market.prices.cols(); ++j) out << ',' << io::format_double(market.prices(t, j));
    out << '\n';
  }
}

}  // namespace drvc
