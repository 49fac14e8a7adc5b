#include "drvc/experiment.hpp"

#include "drvc/baselines.hpp"
#include "drvc/clusterer.hpp"
#include "drvc/datamodel.hpp"
#include "drvc/delta_select.hpp"
#include "drvc/dro_solver.hpp"
#include "drvc/parallel.hpp"
#include "drvc/portfolio.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace drvc::experiment {

namespace fs = std::filesystem;

namespace {

json solver_defaults() {
  const SolverOptions o;
  return {{"rho", o.rho},           {"tol_abs", o.tol_abs},
          {"tol_rel", o.tol_rel},   {"max_iter", o.max_iter},
          {"inner_tol", o.inner_tol}, {"inner_max_iter", o.inner_max_iter},
          {"smoothing_eps", o.smoothing_eps}, {"adaptive_rho", o.adaptive_rho},
          {"adapt_every", o.adapt_every}};
}

json delta_defaults() {
  return {{"alpha", 0.05}, {"M", 1000}, {"upsilon", "b"}, {"memory_cap_mb", 512}};
}

json with(json base, const json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  return base;
}

const std::map<std::string, json>& defaults() {
  static const std::map<std::string, json> table = [] {
    std::map<std::string, json> t;
    t["simulate"] = {{"kind", "block"},
                     {"K", 5},
                     {"d", 100},
                     {"n", 100},
                     {"factors_per_cluster", nullptr},
                     {"beta_h_sq", {0.0, 0.0}},
                     {"noise_var", {0.1, 0.1}},
                     {"periods", 1000},
                     {"sectors", 4},
                     {"assets_per_sector", 6},
                     {"out_dir", "simulate_out"}};
    t["fit-dro"] = with(delta_defaults(), {{"panel", ""},
                                           {"delta", "auto"},
                                           {"solver", solver_defaults()},
                                           {"trace", false},
                                           {"out_dir", "fit_out"}});
    t["select-delta"] = with(delta_defaults(), {{"panel", ""}, {"out", "delta.json"}});
    t["cluster"] = with(delta_defaults(), {{"input", ""},
                                           {"input_kind", "panel"},
                                           {"method", "dro"},
                                           {"K", 5},
                                           {"solver", solver_defaults()},
                                           {"lasso_folds", 5},
                                           {"lasso_grid_size", 30},
                                           {"heatmap", false},
                                           {"out_dir", "cluster_out"}});
    t["evaluate"] = {{"partition", ""}, {"truth", ""}, {"out", "evaluation.json"}};
    t["sim-study"] = with(delta_defaults(), {{"grid_param", "noise_var"},
                                             {"grid", {0.1}},
                                             {"trials", 5},
                                             {"K", 5},
                                             {"d", 100},
                                             {"n", 100},
                                             {"factors_per_cluster", nullptr},
                                             {"noise_var", {0.1, 0.1}},
                                             {"beta_h_sq", {0.0, 0.0}},
                                             {"methods", {"dro", "lasso", "acc", "kmedoids"}},
                                             {"solver", solver_defaults()},
                                             {"lasso_folds", 5},
                                             {"lasso_grid_size", 30},
                                             {"workers", 0},
                                             {"out_dir", "study_out"}});
    t["backtest"] = with(delta_defaults(), {{"prices", ""},
                                            {"input_kind", "price"},
                                            {"min_history", 0},
                                            {"max_missing", 0.05},
                                            {"window", 500},
                                            {"share_class", json::object()},
                                            {"frequency", "annual"},
                                            {"anchor_month", 1},
                                            {"lookback", 500},
                                            {"K1", 5},
                                            {"K2", 2},
                                            {"benchmark", nullptr},
                                            {"solver", solver_defaults()},
                                            {"out_dir", "backtest_out"}});
    return t;
  }();
  return table;
}

/// Keys whose values are free-form (not checked against the defaults).
bool free_form(const std::string& key) { return key == "share_class"; }

void merge_checked(json& target, const json& source, const std::string& where) {
  if (!source.is_object()) throw Error(ErrorKind::InvalidConfig, where + "must be a JSON object");
  for (auto it = source.begin(); it != source.end(); ++it) {
    if (!target.contains(it.key()))
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + where + it.key() + "'");
    json& slot = target[it.key()];
    if (slot.is_object() && !free_form(it.key()))
      merge_checked(slot, it.value(), where + it.key() + ".");
    else
      slot = it.value();
  }
}

template <class T>
T get(const json& cfg, const std::string& key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "config key '" + key + "': " + e.what());
  }
}

std::string required_path(const json& cfg, const std::string& key) {
  const auto path = get<std::string>(cfg, key);
  if (path.empty()) throw Error(ErrorKind::InvalidConfig, "config key '" + key + "' is required");
  return path;
}

UniformRange range(const json& cfg, const std::string& key) {
  const auto v = get<std::vector<double>>(cfg, key);
  if (v.size() != 2) throw Error(ErrorKind::InvalidConfig, "config key '" + key + "' needs [lo, hi]");
  return {v[0], v[1]};
}

SolverOptions solver_from(const json& cfg) {
  const json& s = cfg.at("solver");
  SolverOptions o;
  o.rho = get<double>(s, "rho");
  o.tol_abs = get<double>(s, "tol_abs");
  o.tol_rel = get<double>(s, "tol_rel");
  o.max_iter = get<int>(s, "max_iter");
  o.inner_tol = get<double>(s, "inner_tol");
  o.inner_max_iter = get<int>(s, "inner_max_iter");
  o.smoothing_eps = get<double>(s, "smoothing_eps");
  o.adaptive_rho = get<bool>(s, "adaptive_rho");
  o.adapt_every = get<int>(s, "adapt_every");
  o.validate();
  return o;
}

DeltaOptions delta_from(const json& cfg) {
  DeltaOptions o;
  o.alpha = get<double>(cfg, "alpha");
  o.M = get<Index>(cfg, "M");
  o.method = upsilon_method_from_string(get<std::string>(cfg, "upsilon"));
  o.memory_cap_bytes = get<std::uint64_t>(cfg, "memory_cap_mb") << 20;
  return o;
}

BlockModelParams block_params(const json& cfg, std::uint64_t seed) {
  BlockModelParams p;
  p.K = get<int>(cfg, "K");
  p.d = get<Index>(cfg, "d");
  p.n = get<Index>(cfg, "n");
  if (!cfg.at("factors_per_cluster").is_null()) p.factors_per_cluster = get<int>(cfg, "factors_per_cluster");
  p.beta_h_sq = range(cfg, "beta_h_sq");
  p.noise_var = range(cfg, "noise_var");
  p.seed = seed;
  return p;
}

struct Provenance {
  std::string hash;
  std::optional<std::uint64_t> seed;

  json to_json() const {
    return {{"config_hash", hash}, {"seed", seed ? json(*seed) : json(nullptr)}};
  }
  std::string comment() const {
    return "config_hash=" + hash + " seed=" + (seed ? std::to_string(*seed) : std::string("none"));
  }
};

void write_doc(const fs::path& path, json doc, const Provenance& prov) {
  doc["provenance"] = prov.to_json();
  io::write_json(path, doc);
}

fs::path prepare_dir(const json& cfg) {
  const fs::path dir = get<std::string>(cfg, "out_dir");
  fs::create_directories(dir);
  return dir;
}

StandardizedPanel load_panel(const std::string& path) {
  io::LabeledMatrix m = io::read_csv(path, true);
  return standardize(m.values, m.header);
}

json delta_json(const DeltaEstimate& e) {
  return {{"delta", e.delta},       {"alpha", e.alpha},         {"M", e.M},
          {"method", std::string(to_string(e.method))},           {"seed", e.seed},
          {"n", e.n},               {"quantile_probs", e.probs}, {"rbar_over_n_quantiles", e.quantiles}};
}

json options_json(const SolverOptions& o) {
  return {{"rho", o.rho},           {"tol_abs", o.tol_abs},
          {"tol_rel", o.tol_rel},   {"max_iter", o.max_iter},
          {"inner_tol", o.inner_tol}, {"inner_max_iter", o.inner_max_iter},
          {"smoothing_eps", o.smoothing_eps}, {"adaptive_rho", o.adaptive_rho},
          {"adapt_every", o.adapt_every}};
}

/// One clustering method applied to a panel; child seeds keep the methods'
/// random streams independent.
Partition cluster_panel(const std::string& method, const StandardizedPanel& panel, int K,
                        const json& cfg, std::uint64_t seed) {
  if (method == "dro") {
    const DeltaEstimate delta = select_delta(panel, delta_from(cfg), derive_seed(seed, 0));
    const FitResult fit = admm_fit(panel, delta.delta, solver_from(cfg));
    return spectral_cluster(symmetrize(fit.coefficients), K, derive_seed(seed, 1));
  }
  if (method == "lasso") {
    LassoConfig lc;
    lc.cv_folds = get<int>(cfg, "lasso_folds");
    lc.lambda_grid = lasso_grid(panel.values(), get<int>(cfg, "lasso_grid_size"));
    lc.seed = derive_seed(seed, 2);
    const double lambda = lasso_cv(panel, lc).lambda;
    return spectral_cluster(symmetrize(lasso_nodewise(panel, lambda)), K, derive_seed(seed, 3));
  }
  if (method == "acc") return acc_cluster(cord_dissimilarity(panel), K);
  if (method == "kmedoids") return kmedoids(one_minus_rho_squared(panel), K).partition;
  throw Error(ErrorKind::InvalidConfig, "unknown clustering method '" + method + "'");
}

json run_simulate(const json& cfg, std::uint64_t seed, const Provenance& prov) {
  const fs::path dir = prepare_dir(cfg);
  const auto kind = get<std::string>(cfg, "kind");
  if (kind == "returns") {
    SyntheticMarketParams p;
    p.periods = get<Index>(cfg, "periods");
    p.sectors = get<int>(cfg, "sectors");
    p.assets_per_sector = get<Index>(cfg, "assets_per_sector");
    p.seed = seed;
    const SyntheticMarket mk = synthetic_market(p);
    write_prices(dir / "prices.csv", mk, prov.comment());
    json out{{"prices", (dir / "prices.csv").string()}, {"periods", p.periods},
             {"tickers", mk.tickers}};
    write_doc(dir / "market.json", out, prov);
    return out;
  }
  if (kind != "block") throw Error(ErrorKind::InvalidConfig, "simulate kind must be 'block' or 'returns'");
  const GeneratedSample s = generate_block_model(block_params(cfg, seed));
  io::write_panel(dir / "panel.csv", s.panel, prov.comment());
  io::write_csv(dir / "raw.csv", s.raw, s.panel.column_ids(), prov.comment());
  write_doc(dir / "truth.json", io::to_json(s.truth), prov);
  write_doc(dir / "spec.json", io::to_json(s.spec), prov);
  return {{"panel", (dir / "panel.csv").string()}, {"truth", (dir / "truth.json").string()},
          {"cluster_sizes", s.spec.cluster_sizes}, {"factor_counts", s.spec.factor_counts}};
}

json run_select_delta(const json& cfg, std::uint64_t seed, const Provenance& prov) {
  const StandardizedPanel panel = load_panel(required_path(cfg, "panel"));
  const DeltaEstimate e = select_delta(panel, delta_from(cfg), seed);
  json out = delta_json(e);
  const fs::path path = get<std::string>(cfg, "out");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_doc(path, out, prov);
  return out;
}

json run_fit(const json& cfg, std::optional<std::uint64_t> seed, const Provenance& prov) {
  const StandardizedPanel panel = load_panel(required_path(cfg, "panel"));
  const fs::path dir = prepare_dir(cfg);
  json out;
  double delta = 0.0;
  if (cfg.at("delta").is_string()) {
    if (get<std::string>(cfg, "delta") != "auto")
      throw Error(ErrorKind::InvalidConfig, "delta must be a number or \"auto\"");
    const DeltaEstimate e = select_delta(panel, delta_from(cfg), *seed);
    delta = e.delta;
    out["delta_selection"] = delta_json(e);
  } else {
    delta = get<double>(cfg, "delta");
  }
  const SolverOptions opts = solver_from(cfg);
  const FitResult fit = admm_fit(panel, delta, opts);
  io::write_csv(dir / "B.csv", fit.coefficients.values(), panel.column_ids(), prov.comment());
  out["delta"] = delta;
  out["options"] = options_json(opts);
  out["iterations"] = fit.state.iteration;
  out["converged"] = fit.state.converged;
  out["final_rho"] = fit.state.rho;
  out["objective"] = dro_objective(panel, fit.coefficients, delta);
  out["primal_residual"] = fit.state.primal_residual;
  out["dual_residual"] = fit.state.dual_residual;
  write_doc(dir / "fit.json", out, prov);
  if (get<bool>(cfg, "trace")) {
    const auto iters = static_cast<Index>(fit.state.primal_residual.size());
    Matrix trace(iters, 5);
    for (Index i = 0; i < iters; ++i) {
      const auto u = static_cast<std::size_t>(i);
      trace.row(i) << static_cast<double>(i + 1), fit.state.primal_residual[u],
          fit.state.dual_residual[u], fit.state.rho_history[u], fit.state.objective[u];
    }
    io::write_csv(dir / "trace.csv", trace,
                  {"iteration", "primal_residual", "dual_residual", "rho", "objective"}, prov.comment());
  }
  json summary{{"delta", delta}, {"iterations", fit.state.iteration},
               {"converged", fit.state.converged}, {"objective", out["objective"]}};
  return summary;
}

json run_cluster(const json& cfg, std::optional<std::uint64_t> seed, const Provenance& prov) {
  const fs::path dir = prepare_dir(cfg);
  const auto kind = get<std::string>(cfg, "input_kind");
  const auto method = get<std::string>(cfg, "method");
  const int K = get<int>(cfg, "K");
  const std::string input = required_path(cfg, "input");
  Partition part;
  std::optional<Matrix> similarity;
  std::vector<std::string> ids;
  if (kind == "similarity" || kind == "coefficients") {
    if (method != "spectral")
      throw Error(ErrorKind::InvalidConfig, "a similarity or coefficient input needs method 'spectral'");
    io::LabeledMatrix m = io::read_csv(input, true);
    ids = m.header;
    if (m.values.rows() != m.values.cols() || !m.values.allFinite())
      throw Error(ErrorKind::InvalidInput, "input matrix must be square and finite");
    similarity = kind == "coefficients" ? symmetrize(m.values) : m.values;
    part = spectral_cluster({*similarity}, K, *seed);
  } else if (kind == "panel") {
    const StandardizedPanel panel = load_panel(input);
    ids = panel.column_ids();
    if (method == "dro" && get<bool>(cfg, "heatmap")) {
      const DeltaEstimate delta = select_delta(panel, delta_from(cfg), derive_seed(*seed, 0));
      similarity = symmetrize(admm_fit(panel, delta.delta, solver_from(cfg)).coefficients.values());
      part = spectral_cluster({*similarity}, K, derive_seed(*seed, 1));
    } else {
      part = cluster_panel(method, panel, K, cfg, *seed);
    }
  } else {
    throw Error(ErrorKind::InvalidConfig, "input_kind must be panel, similarity or coefficients");
  }
  json out = io::to_json(part);
  out["ids"] = ids;
  out["method"] = method;
  write_doc(dir / "partition.json", out, prov);
  if (get<bool>(cfg, "heatmap") && similarity) export_heatmap(dir / "heatmap.csv", {*similarity}, part);
  return {{"partition", (dir / "partition.json").string()}, {"K", part.k()},
          {"cluster_sizes", part.cluster_sizes()}};
}

json run_evaluate(const json& cfg, const Provenance& prov) {
  const Partition p = io::partition_from_json(io::read_json(required_path(cfg, "partition")));
  const Partition q = io::partition_from_json(io::read_json(required_path(cfg, "truth")));
  json out{{"ami", ami(p, q)}, {"n", p.size()}};
  const fs::path path = get<std::string>(cfg, "out");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_doc(path, out, prov);
  return out;
}

json run_sim_study(const json& cfg, std::uint64_t seed, const Provenance& prov) {
  const fs::path dir = prepare_dir(cfg);
  const auto param = get<std::string>(cfg, "grid_param");
  if (param != "noise_var" && param != "beta_h_sq")
    throw Error(ErrorKind::InvalidConfig, "grid_param must be noise_var or beta_h_sq");
  const auto grid = get<std::vector<double>>(cfg, "grid");
  const int trials = get<int>(cfg, "trials");
  const auto methods = get<std::vector<std::string>>(cfg, "methods");
  if (grid.empty() || trials < 1 || methods.empty())
    throw Error(ErrorKind::InvalidConfig, "sim-study needs a grid, trials >= 1 and methods");
  for (const auto& m : methods)
    if (m != "dro" && m != "lasso" && m != "acc" && m != "kmedoids")
      throw Error(ErrorKind::InvalidConfig, "unknown clustering method '" + m + "'");
  // validate everything a worker will read before launching any
  (void)solver_from(cfg);
  (void)delta_from(cfg);
  (void)block_params(cfg, 0);
  const int K = get<int>(cfg, "K");

  struct Row {
    double ami = std::nan("");
    std::string status = "ok";
  };
  const std::size_t cells = grid.size() * static_cast<std::size_t>(trials);
  std::vector<std::vector<Row>> rows(cells, std::vector<Row>(methods.size()));
  std::vector<std::uint64_t> seeds(cells);
  parallel_for(
      cells,
      [&](std::size_t cell) {
        const std::size_t g = cell / static_cast<std::size_t>(trials);
        const std::size_t t = cell % static_cast<std::size_t>(trials);
        const std::uint64_t trial_seed = derive_seed(derive_seed(seed, g), t);
        seeds[cell] = trial_seed;
        json point = cfg;
        point[param] = {grid[g], grid[g]};
        try {
          const GeneratedSample s = generate_block_model(block_params(point, trial_seed));
          for (std::size_t m = 0; m < methods.size(); ++m) {
            try {
              const Partition p = cluster_panel(methods[m], s.panel, K, cfg, derive_seed(trial_seed, 100 + m));
              rows[cell][m].ami = ami(p, s.truth);
            } catch (const Error& e) {
              rows[cell][m].status = std::string(to_string(e.kind()));
            }
          }
        } catch (const Error& e) {
          for (auto& r : rows[cell]) r.status = std::string(to_string(e.kind()));
        }
      },
      get<std::size_t>(cfg, "workers"));

  std::ofstream lng(dir / "long.csv");
  lng << "# " << prov.comment() << '\n' << "method,grid_param,grid_value,trial,seed,ami,status\n";
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto& r = rows[cell][m];
      lng << methods[m] << ',' << param << ',' << io::format_double(grid[cell / static_cast<std::size_t>(trials)])
          << ',' << cell % static_cast<std::size_t>(trials) + 1 << ',' << seeds[cell] << ','
          << (std::isnan(r.ami) ? std::string() : io::format_double(r.ami)) << ',' << r.status << '\n';
    }
  std::ofstream sum(dir / "summary.csv");
  sum << "# " << prov.comment() << '\n' << "method,grid_param,grid_value,mean_ami,sd_ami,trials_ok\n";
  json summary = json::array();
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> v;
      for (int t = 0; t < trials; ++t) {
        const auto& r = rows[g * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)][m];
        if (!std::isnan(r.ami)) v.push_back(r.ami);
      }
      double mean = std::nan(""), sd = std::nan("");
      if (!v.empty()) {
        mean = 0.0;
        for (double a : v) mean += a / static_cast<double>(v.size());
        if (v.size() > 1) {
          double ss = 0.0;
          for (double a : v) ss += (a - mean) * (a - mean);
          sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
        }
      }
      auto fmt = [](double x) { return std::isnan(x) ? std::string() : io::format_double(x); };
      sum << methods[m] << ',' << param << ',' << io::format_double(grid[g]) << ',' << fmt(mean) << ','
          << fmt(sd) << ',' << v.size() << '\n';
      summary.push_back({{"method", methods[m]}, {"grid_value", grid[g]},
                         {"mean_ami", std::isnan(mean) ? json(nullptr) : json(mean)},
                         {"trials_ok", v.size()}});
    }
  return {{"long", (dir / "long.csv").string()}, {"summary", (dir / "summary.csv").string()},
          {"means", summary}};
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const MetricsReport& m) {
  return {{"Ending VAMI", m.ending_vami},
          {"Annualized Return", m.ann_return},
          {"Annualized Volatility", m.ann_volatility},
          {"Annualized Downside Volatility", opt_json(m.ann_downside_volatility)},
          {"Sharpe Ratio", opt_json(m.sharpe)},
          {"Sortino Ratio", opt_json(m.sortino)},
          {"Calmar Ratio", opt_json(m.calmar)},
          {"Max Drawdown", m.max_drawdown},
          {"Peak-To-Valley", m.peak_date ? json::array({format_date(*m.peak_date), format_date(*m.valley_date)})
                                         : json(nullptr)},
          {"Recovery", m.recovery_days ? json(*m.recovery_days) : json(nullptr)},
          {"Correlation vs Benchmark", opt_json(m.correlation)},
          {"Beta vs Benchmark", opt_json(m.beta)},
          {"Positive Periods", m.positive_periods},
          {"Negative Periods", m.negative_periods},
          {"Periods", m.periods},
          {"conventions", {{"risk_free_rate", 0.0}, {"annualization", kAnnualization}, {"vami_base", kVamiBase},
                           {"recovery_unit", "trading days"}}}};
}

json run_backtest_cmd(const json& cfg, std::uint64_t seed, const Provenance& prov) {
  const fs::path dir = prepare_dir(cfg);
  LoadOptions lo;
  const auto kind = get<std::string>(cfg, "input_kind");
  if (kind == "price") lo.kind = InputKind::Price;
  else if (kind == "return") lo.kind = InputKind::Return;
  else throw Error(ErrorKind::InvalidConfig, "input_kind must be price or return");
  lo.min_history = get<Index>(cfg, "min_history");
  lo.max_missing = get<double>(cfg, "max_missing");
  lo.window = get<Index>(cfg, "window");
  lo.share_class = get<std::map<std::string, std::string>>(cfg, "share_class");
  BacktestOptions bo;
  bo.schedule.frequency = frequency_from_string(get<std::string>(cfg, "frequency"));
  bo.schedule.anchor_month = get<int>(cfg, "anchor_month");
  bo.lookback = get<Index>(cfg, "lookback");
  bo.K1 = get<int>(cfg, "K1");
  bo.K2 = get<int>(cfg, "K2");
  bo.cluster.delta = delta_from(cfg);
  bo.cluster.solver = solver_from(cfg);
  if (!cfg.at("benchmark").is_null()) bo.benchmark = get<std::string>(cfg, "benchmark");
  bo.seed = seed;
  LoadReport report;
  const ReturnPanel panel = load_returns(required_path(cfg, "prices"), lo, &report);
  const BacktestResult res = backtest(panel, bo);

  std::ofstream ledger(dir / "ledger.csv");
  ledger << "# " << prov.comment() << '\n' << "date,portfolio_return,vami\n";
  ledger << format_date(res.ledger.dates[0]) << ",," << io::format_double(res.ledger.vami(0)) << '\n';
  for (Index t = 0; t < res.ledger.returns.size(); ++t)
    ledger << format_date(res.ledger.dates[static_cast<std::size_t>(t + 1)]) << ','
           << io::format_double(res.ledger.returns(t)) << ',' << io::format_double(res.ledger.vami(t + 1))
           << '\n';
  json rebal = json::array();
  for (const auto& r : res.ledger.rebalances) {
    std::vector<double> w(r.weights.data(), r.weights.data() + r.weights.size());
    rebal.push_back({{"date", format_date(r.date)}, {"tickers", r.tickers}, {"weights", w}});
  }
  write_doc(dir / "rebalances.json",
            {{"rebalances", rebal},
             {"dropped", {{"history", report.dropped_history},
                          {"missing", report.dropped_missing},
                          {"share_class", report.dropped_share_class}}}},
            prov);
  json metrics = metrics_json(res.metrics);
  write_doc(dir / "metrics.json", metrics, prov);
  return metrics;
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"simulate", "fit-dro",   "select-delta", "cluster",
                                                 "evaluate", "sim-study", "backtest"};
  return names;
}

bool needs_seed(const std::string& command, const json& config) {
  if (command == "evaluate") return false;
  if (command == "fit-dro") return config.at("delta").is_string();
  return true;
}

json default_config(const std::string& command) {
  const auto it = defaults().find(command);
  if (it == defaults().end()) throw Error(ErrorKind::InvalidConfig, "unknown command '" + command + "'");
  return it->second;
}

json resolve_config(const std::string& command, const json& overrides) {
  json cfg = default_config(command);
  if (!overrides.is_null()) merge_checked(cfg, overrides, "");
  return cfg;
}

std::string provenance_hash(const json& config, std::optional<std::uint64_t> seed) {
  return io::config_hash({{"config", config}, {"seed", seed ? json(*seed) : json(nullptr)}});
}

json run(const std::string& command, const Invocation& inv) {
  const json cfg = resolve_config(command, inv.config);
  if (needs_seed(command, cfg) && !inv.seed)
    throw Error(ErrorKind::InvalidConfig, "command '" + command + "' needs --seed");
  const Provenance prov{provenance_hash(cfg, inv.seed), inv.seed};
  if (cfg.contains("out_dir")) {
    fs::create_directories(get<std::string>(cfg, "out_dir"));
    write_doc(fs::path(get<std::string>(cfg, "out_dir")) / "config.json", {{"command", command}, {"config", cfg}}, prov);
  }
  json out;
  if (command == "simulate") out = run_simulate(cfg, *inv.seed, prov);
  else if (command == "fit-dro") out = run_fit(cfg, inv.seed, prov);
  else if (command == "select-delta") out = run_select_delta(cfg, *inv.seed, prov);
  else if (command == "cluster") out = run_cluster(cfg, inv.seed, prov);
  else if (command == "evaluate") out = run_evaluate(cfg, prov);
  else if (command == "sim-study") out = run_sim_study(cfg, *inv.seed, prov);
  else out = run_backtest_cmd(cfg, *inv.seed, prov);
  out["provenance"] = prov.to_json();
  return out;
}

}  // namespace drvc::experiment
