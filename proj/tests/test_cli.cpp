#include "drvc/experiment.hpp"
#include "drvc/portfolio.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drvc;
namespace fs = std::filesystem;
using experiment::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(DRVC_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + DRVC_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json run(const std::string& command, json config, std::optional<std::uint64_t> seed) {
  experiment::Invocation inv;
  inv.config = std::move(config);
  inv.seed = seed;
  return experiment::run(command, inv);
}

/// Small block-model panel written by the simulate command.
fs::path simulated_panel(const fs::path& dir) {
  run("simulate", {{"d", 12}, {"K", 3}, {"n", 40}, {"out_dir", (dir / "sim").string()}}, 3);
  return dir / "sim" / "panel.csv";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("select-delta is reproducible") {
    const auto dir = scratch_dir("delta");
    const auto panel = simulated_panel(dir);
    const json cfg{{"panel", panel.string()}, {"M", 200}};
    auto a = cfg, b = cfg;
    a["out"] = (dir / "a.json").string();
    b["out"] = (dir / "b.json").string();
    const json ra = run("select-delta", a, 11);
    const json rb = run("select-delta", b, 11);
    CHECK(ra.at("delta").get<double>() == rb.at("delta").get<double>());
    CHECK(ra.at("delta").get<double>() > 0);
    const json rc = run("select-delta", a, 12);
    CHECK(rc.at("delta").get<double>() != ra.at("delta").get<double>());
  }

  TEST_CASE("identical runs write identical artifacts") {
    const auto dir = scratch_dir("artifacts");
    const std::vector<std::string> files = {"panel.csv", "raw.csv", "truth.json", "spec.json", "config.json"};
    const std::string args = "simulate --seed 9 --set d=12 --set K=3 --set n=30 --set out_dir=" + dir.string();
    REQUIRE(cli(args) == 0);
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(slurp(dir / f));
    REQUIRE(cli(args) == 0);
    for (std::size_t i = 0; i < files.size(); ++i) CHECK(slurp(dir / files[i]) == first[i]);
    CHECK(first[0].rfind("# config_hash=", 0) == 0);
    CHECK(first[0].find("seed=9") != std::string::npos);
  }

  TEST_CASE("exit codes") {
    const auto dir = scratch_dir("exit");
    CHECK(cli("simulate --seed 1 --set out_dir=" + (dir / "ok").string() + " --set d=10 --set K=2 --set n=20") == 0);
    CHECK(cli("simulate --seed 1 --set Kay=4") == 2);
    CHECK(cli("simulate --seed 1 --set solver.rho=2") == 2);
    CHECK(cli("simulate --set out_dir=" + (dir / "noseed").string()) == 2);
    CHECK(cli("no-such-command") == 2);
    CHECK(cli("fit-dro --set panel=" + (dir / "missing.csv").string() + " --set delta=0.1 --set out_dir=" +
              (dir / "fit").string()) == 2);
    CHECK(cli("simulate --print-config") == 0);
  }

  TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(experiment::resolve_config("cluster", {{"methd", "dro"}}), Error);
    CHECK_THROWS_AS(experiment::resolve_config("fit-dro", {{"solver", {{"rh0", 1}}}}), Error);
    const json ok = experiment::resolve_config("fit-dro", {{"solver", {{"rho", 2.0}}}});
    CHECK(ok.at("solver").at("rho").get<double>() == 2.0);
    CHECK(ok.at("solver").at("max_iter").get<int>() == SolverOptions{}.max_iter);
  }

  TEST_CASE("clustering a saved coefficient matrix with K=1") {
    const auto dir = scratch_dir("cluster");
    const auto panel = simulated_panel(dir);
    run("fit-dro", {{"panel", panel.string()}, {"delta", 0.05}, {"out_dir", (dir / "fit").string()}}, std::nullopt);
    const json r = run("cluster",
                       {{"input", (dir / "fit" / "B.csv").string()},
                        {"input_kind", "coefficients"},
                        {"method", "spectral"},
                        {"K", 1},
                        {"out_dir", (dir / "part").string()}},
                       4);
    CHECK(r.at("K").get<int>() == 1);
    const Partition p = io::partition_from_json(io::read_json(dir / "part" / "partition.json"));
    CHECK(p.k() == 1);
    CHECK(p.size() == 12);
    CHECK(p.cluster_sizes() == std::vector<Index>{12});
  }

  TEST_CASE("evaluate scores a partition against itself") {
    const auto dir = scratch_dir("evaluate");
    simulated_panel(dir);
    const auto truth = (dir / "sim" / "truth.json").string();
    const json r = run("evaluate", {{"partition", truth}, {"truth", truth}, {"out", (dir / "e.json").string()}},
                       std::nullopt);
    CHECK(r.at("ami").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("backtest on a three-day panel matches the drift oracle") {
    const auto dir = scratch_dir("backtest");
    // five days of history, a rebalance on the first trading day of 2021,
    // then three days held
    const std::vector<std::string> dates = {"2020-12-25", "2020-12-28", "2020-12-29", "2020-12-30",
                                            "2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07"};
    Matrix r(8, 2);
    r << 0.01, -0.02, -0.015, 0.01, 0.02, 0.005, -0.01, -0.012, 0.004, 0.008, 0.1, -0.05, 0.02, 0.03, -0.04, 0.01;
    {
      std::ofstream out(dir / "returns.csv");
      out << "date,AAA,BBB\n";
      for (Index t = 0; t < 8; ++t)
        out << dates[std::size_t(t)] << ',' << io::format_double(r(t, 0)) << ',' << io::format_double(r(t, 1)) << '\n';
    }
    const json m = run("backtest",
                       {{"prices", (dir / "returns.csv").string()},
                        {"input_kind", "return"},
                        {"window", 8},
                        {"lookback", 5},
                        {"K1", 1},
                        {"K2", 2},
                        {"out_dir", (dir / "out").string()}},
                       1);

    // two singleton clusters, so both assets are held at the two-asset minimum-variance mix
    const Matrix win = r.topRows(5);
    const Matrix c = win.rowwise() - win.colwise().mean();
    const Matrix s = c.transpose() * c / 4.0;
    const double w0 = std::clamp((s(1, 1) - s(0, 1)) / (s(0, 0) + s(1, 1) - 2 * s(0, 1)), 0.0, 1.0);
    double a = 1000 * w0, b = 1000 * (1 - w0);
    std::vector<double> vami{1000};
    for (Index t = 5; t < 8; ++t) {
      a *= 1 + r(t, 0);
      b *= 1 + r(t, 1);
      vami.push_back(a + b);
    }

    const auto rebal = io::read_json(dir / "out" / "rebalances.json").at("rebalances");
    REQUIRE(rebal.size() == 1);
    CHECK(rebal[0].at("date").get<std::string>() == "2021-01-04");
    CHECK(rebal[0].at("weights")[0].get<double>() == doctest::Approx(w0).epsilon(1e-8));

    std::ifstream ledger(dir / "out" / "ledger.csv");
    std::string line;
    std::getline(ledger, line);
    CHECK(line.rfind("# config_hash=", 0) == 0);
    std::getline(ledger, line);
    CHECK(line == "date,portfolio_return,vami");
    for (std::size_t t = 0; t < vami.size(); ++t) {
      REQUIRE(std::getline(ledger, line));
      CHECK(line.substr(0, 10) == dates[4 + t]);
      const double v = std::stod(line.substr(line.rfind(',') + 1));
      CHECK(v == doctest::Approx(vami[t]).epsilon(1e-8));
    }
    CHECK(m.at("Ending VAMI").get<double>() == doctest::Approx(vami.back()).epsilon(1e-8));
  }

  TEST_CASE("sim-study reruns are byte-identical and ignore the worker count") {
    const auto dir = scratch_dir("study");
    json cfg{{"trials", 1},           {"d", 20}, {"K", 4},       {"n", 40}, {"grid", {0.1, 0.5}},
             {"lasso_grid_size", 8}, {"M", 200}, {"workers", 1}, {"out_dir", dir.string()}};
    run("sim-study", cfg, 21);
    const std::string lng = slurp(dir / "long.csv"), sum = slurp(dir / "summary.csv");
    run("sim-study", cfg, 21);
    CHECK(slurp(dir / "long.csv") == lng);
    CHECK(slurp(dir / "summary.csv") == sum);
    // the config hash covers the worker count; the rows must not depend on it
    cfg["workers"] = 4;
    run("sim-study", cfg, 21);
    auto body = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
    CHECK(body(slurp(dir / "long.csv")) == body(lng));
  }

  TEST_CASE("noiseless single-factor study reaches AMI 1 for every method") {
    const auto dir = scratch_dir("noiseless");
    const json r = run("sim-study",
                       {{"trials", 1},
                        {"d", 20},
                        {"K", 4},
                        {"n", 50},
                        {"factors_per_cluster", 1},
                        {"noise_var", {0.0, 0.0}},
                        {"grid", {0.0}},
                        {"out_dir", (dir / "s").string()}},
                       5);
    REQUIRE(r.at("means").size() == 4);
    for (const auto& row : r.at("means"))
      CHECK(row.at("mean_ami").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("a failed trial is recorded and the study continues") {
    const auto dir = scratch_dir("partial");
    // K larger than d makes the generator reject every trial
    const json r = run("sim-study",
                       {{"trials", 2}, {"d", 3}, {"K", 5}, {"n", 20}, {"grid", {0.1}}, {"out_dir", (dir / "s").string()}},
                       1);
    for (const auto& row : r.at("means")) CHECK(row.at("trials_ok").get<int>() == 0);
    const std::string lng = slurp(dir / "s" / "long.csv");
    CHECK(lng.find(",ok\n") == std::string::npos);
  }
}
