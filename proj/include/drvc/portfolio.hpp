#pragma once

#include "drvc/delta_select.hpp"
#include "drvc/dro_solver.hpp"
#include "drvc/types.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace drvc {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD; throws InvalidCsv.
Date parse_date(const std::string& text);
std::string format_date(const Date& date);

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// T x d simple daily returns. Cells before a ticker's first observation are
/// NaN and masked.
struct ReturnPanel {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  Matrix returns;
  BoolMatrix missing;

  Index periods() const { return returns.rows(); }
  Index assets() const { return returns.cols(); }
  /// Throws InvalidData when dates are not strictly increasing or a present
  /// return is <= -1.
  void validate() const;
  ReturnPanel select_columns(const std::vector<Index>& columns) const;
};

enum class InputKind { Price, Return };

struct LoadOptions {
  InputKind kind = InputKind::Price;
  /// Minimum number of observed days per ticker.
  Index min_history = 0;
  /// Tickers with more missing cells than this fraction of the last `window`
  /// rows are dropped (0 = whole file).
  double max_missing = 0.05;
  Index window = 500;
  /// ticker -> share-class group; each group keeps its longest history.
  std::map<std::string, std::string> share_class;
};

struct LoadReport {
  std::vector<std::string> dropped_history;
  std::vector<std::string> dropped_missing;
  std::vector<std::string> dropped_share_class;
};

/// Reads `date,TICKER1,TICKER2,...`. Prices: interior gaps are linearly
/// interpolated on the price path, then converted to simple returns (the first
/// date is consumed). Returns: interior gaps are set to 0 and stay masked.
ReturnPanel load_returns(const std::filesystem::path& path, const LoadOptions& opts,
                         LoadReport* report = nullptr);
ReturnPanel load_returns(std::istream& in, const LoadOptions& opts, LoadReport* report = nullptr);

struct HierarchicalOptions {
  DeltaOptions delta;
  SolverOptions solver;
};

/// Top level: DRO nodewise fit with data-driven delta, spectral clustering into
/// K1. Second level: average-linkage on cord inside each top cluster into K2
/// (clusters with at most K2 members split into singletons). Returns the flat
/// partition, labels renumbered in order of first appearance.
Partition hierarchical_cluster(const Matrix& window, int K1, int K2,
                               const HierarchicalOptions& opts, std::uint64_t seed);

/// Index of the lowest sample-variance column in each cluster; ties go to the
/// lexicographically first ticker. Empty clusters are skipped.
std::vector<Index> select_low_vol(const Matrix& window, const std::vector<std::string>& tickers,
                                  const Partition& partition);

struct WeightVector {
  Vector weights;
  int iterations = 0;
  double kkt_residual = 0.0;
};

/// argmin w^T S w on the probability simplex: accelerated projected gradient,
/// then an active-set polish on the support for an exact KKT point.
/// Throws InvalidCovariance when S has an eigenvalue below -1e-8.
WeightVector min_variance_weights(const CovarianceEstimate& sigma);

/// Euclidean projection onto {w >= 0, sum w = 1}.
Vector project_simplex(const Vector& v);

/// max over the support of |g_i - nu| and over the rest of (nu - g_i)_+,
/// with g = S w and nu = w^T S w.
double min_variance_kkt(const Matrix& s, const Vector& w);

enum class Frequency { Daily, Monthly, Quarterly, Annual };
Frequency frequency_from_string(const std::string& name);
std::string to_string(Frequency f);

struct Schedule {
  Frequency frequency = Frequency::Annual;
  int anchor_month = 1;  // first month of the year/quarter cycle
};

/// Rows that open a new period (the first trading day of each month, quarter
/// or year); every row for Daily.
std::vector<Index> rebalance_rows(const std::vector<Date>& dates, const Schedule& schedule);

struct Allocation {
  std::vector<Index> assets;  // panel columns
  Vector weights;
};

/// Chooses holdings from the trailing window (rows [t - lookback + 1, t]).
using Allocator = std::function<Allocation(const ReturnPanel& panel, Index t, Index lookback)>;

struct RebalanceRecord {
  Index row = 0;
  Date date;
  std::vector<std::string> tickers;
  Vector weights;
};

struct BacktestLedger {
  std::vector<Date> dates;  // dates[0] is the first rebalance (VAMI base)
  Vector returns;           // returns(t) earned on dates[t + 1]
  Vector vami;              // vami(0) = 1000
  std::vector<RebalanceRecord> rebalances;
};

/// Holds each allocation from the day after its rebalance row, letting weights
/// drift with returns until the next rebalance. Missing returns of a held
/// asset count as 0.
BacktestLedger run_backtest(const ReturnPanel& panel, const Schedule& schedule, Index lookback,
                            const Allocator& allocator);

struct MetricsReport {
  Index periods = 0;
  double ending_vami = 1000.0;
  double ann_return = 0.0;
  double ann_volatility = 0.0;
  std::optional<double> ann_downside_volatility;
  std::optional<double> sharpe;
  std::optional<double> sortino;
  std::optional<double> calmar;
  double max_drawdown = 0.0;
  std::optional<Date> peak_date;
  std::optional<Date> valley_date;
  std::optional<Index> recovery_days;  // unset while still under water
  Index positive_periods = 0;
  Index negative_periods = 0;
  std::optional<double> correlation;
  std::optional<double> beta;
};

inline constexpr double kAnnualization = 252.0;
inline constexpr double kVamiBase = 1000.0;

/// Risk-free rate 0. ann_return is the geometric annualized growth of VAMI;
/// downside volatility is the standard deviation of the negative days.
MetricsReport compute_metrics(const BacktestLedger& ledger,
                              const std::optional<Vector>& benchmark = std::nullopt);

struct BacktestOptions {
  Schedule schedule;
  Index lookback = 500;
  int K1 = 5;
  int K2 = 2;
  HierarchicalOptions cluster;
  std::optional<std::string> benchmark;
  std::uint64_t seed = 0;
};

struct BacktestResult {
  BacktestLedger ledger;
  MetricsReport metrics;
};

/// The full pipeline: at each rebalance keep assets with a complete window,
/// cluster hierarchically, pick the lowest-volatility member per cluster and
/// hold the long-only minimum-variance mix of the picks.
BacktestResult backtest(const ReturnPanel& panel, const BacktestOptions& opts);

struct SyntheticMarketParams {
  Index periods = 1000;
  int sectors = 4;
  Index assets_per_sector = 6;
  double market_vol = 0.008;
  double sector_vol = 0.006;
  double idio_vol = 0.01;
  double drift = 0.0003;
  std::uint64_t seed = 0;
};

/// Sector-factor price panel on a weekday calendar starting 2015-01-05, with
/// a market column named "MKT" for benchmarking.
struct SyntheticMarket {
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  Matrix prices;
};
SyntheticMarket synthetic_market(const SyntheticMarketParams& params);

void write_prices(const std::filesystem::path& path, const SyntheticMarket& market,
                  const std::string& comment = {});

}  // namespace drvc
