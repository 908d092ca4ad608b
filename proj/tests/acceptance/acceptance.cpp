// Acceptance run: one PASS, FAIL or SKIP line per criterion.
//
//   acceptance [--only 1,3,6] [--work DIR] [--nc-config PATH]
//
// Exit status is 0 when no criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "CLI11.hpp"
#include "shmev/math.hpp"
#include "shmev/metrics.hpp"
#include "shmev/model/gev_model.hpp"
#include "shmev/model/gradient_check.hpp"
#include "shmev/model/hmev_model.hpp"
#include "shmev/model/shmev_model.hpp"
#include "shmev/pipeline.hpp"
#include "shmev/predictive.hpp"
#include "shmev/sampler/diagnostics.hpp"
#include "shmev/sampler/hmc.hpp"
#include "shmev/simulation.hpp"

using namespace shmev;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::Pass : Status::Fail, detail}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path source_dir() { return SHMEV_SOURCE_DIR; }

config::RunConfig load_config(const std::string& name, std::uint64_t seed) {
  auto cfg = config::load((source_dir() / "configs" / name).string());
  cfg.seed = seed;
  return cfg;
}

void run_command(const config::RunConfig& base, const fs::path& out, const std::string& command,
                 const std::string& model = "shmev") {
  auto cfg = base;
  cfg.model = model;
  pipeline::Context ctx(cfg, out, command);
  pipeline::run(ctx);
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  simulation::ScenarioConfig sc;
  sc.n_sites = 5;
  sc.train_blocks = 5;
  sc.test_blocks = 1;
  sc.seed = 5;
  const auto sim = simulation::simulate_scenario(sc);
  RandomStream rng(101);
  constexpr int kPoints = 20;
  std::map<std::string, double> worst;

  const model::ShmevModel sh(sim.train, model::ShmevPriorSpec::defaults(sim.train.n_coefficients()));
  const auto& L = sh.layout();
  for (int r = 0; r < kPoints; ++r) {
    auto x = sh.initial_point();
    for (std::size_t i = 0; i < L.n_top_level(); ++i) x[i] += 0.1 * rng.normal();
    for (std::size_t i = L.n_top_level(); i < L.dim(); ++i) x[i] += 0.05 * rng.normal();
    worst["shmev"] = std::max(worst["shmev"], model::check_gradient(sh, x).max_relative_error);
  }

  std::vector<OrdinaryEventRecord> blocks;
  std::vector<double> maxima;
  for (std::size_t j = 0; j < sim.train.n_blocks(); ++j) {
    blocks.push_back(sim.train.record(0, j));
    maxima.push_back(simulation::block_maximum(sim.train.record(0, j)));
  }
  const model::HmevModel hm(blocks, model::HmevPriorSpec::from_blocks(blocks, sim.train.block_size(), 0.75, 10.0),
                            sim.train.block_size());
  for (int r = 0; r < kPoints; ++r) {
    auto x = hm.initial_point();
    for (auto& v : x) v += 0.05 * rng.normal();
    worst["hmev"] = std::max(worst["hmev"], model::check_gradient(hm, x).max_relative_error);
  }

  const model::GevModel gm(maxima, model::GevPriorSpec::from_maxima(maxima));
  for (int r = 0; r < kPoints; ++r) {
    auto x = gm.initial_point();
    x[0] += 2.0 * rng.normal();
    x[1] += 0.1 * rng.normal();
    x[2] = 0.05 * rng.normal();
    worst["gev"] = std::max(worst["gev"], model::check_gradient(gm, x).max_relative_error);
  }

  bool ok = true;
  std::string detail = "max relative error";
  for (const auto& [name, e] : worst) {
    ok = ok && e < 1e-5;
    detail += " " + name + "=" + fmt(e, 3);
  }
  return verdict(ok, detail + " (limit 1e-5, 20 points each)");
}

// ---------------------------------------------------------------- 2

struct StandardNormal {
  std::size_t d = 10;
  [[nodiscard]] std::size_t dim() const { return d; }
  double log_density_gradient(std::span<const double> x, std::span<double> g) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      lp -= 0.5 * x[i] * x[i];
      g[i] = -x[i];
    }
    return lp;
  }
};

Outcome calibration() {
  const StandardNormal target;
  const sampler::SamplerConfig cfg;
  const std::vector<double> center(target.dim(), 0.0);
  const auto draws = sampler::run_hmc(target, cfg, sampler::perturbed_inits(center, cfg.n_chains, cfg.seed));
  const auto diag = sampler::rhat_ess(draws);
  double worst_mean = 0.0, worst_var = 0.0, worst_rhat = 0.0;
  bool rhat_ok = true;
  for (std::size_t i = 0; i < target.dim(); ++i) {
    const auto col = draws.column(i);
    worst_mean = std::max(worst_mean, std::abs(mean(col)));
    worst_var = std::max(worst_var, std::abs(sample_variance(col) - 1.0));
    if (!diag[i].rhat) {
      rhat_ok = false;
      continue;
    }
    worst_rhat = std::max(worst_rhat, *diag[i].rhat);
  }
  const bool ok = draws.size() == 4000 && worst_mean <= 0.05 && worst_var <= 0.10 && rhat_ok && worst_rhat < 1.01;
  return verdict(ok, "B=" + std::to_string(draws.size()) + " max|mean|=" + fmt(worst_mean) +
                         " (limit 0.05) max|var-1|=" + fmt(worst_var) + " (limit 0.10) max R-hat=" + fmt(worst_rhat, 5) +
                         " (limit 1.01) seed=" + std::to_string(cfg.seed));
}

// ---------------------------------------------------------------- 3

Outcome predictive_cdf() {
  constexpr double shape = 0.86, scale = 10.5, wet = 0.283;
  constexpr std::size_t n_oracle = 1000000;
  constexpr int kBlock = 366;
  std::mt19937_64 eng(77);
  std::binomial_distribution<int> count(kBlock, wet);
  std::weibull_distribution<double> mag(shape, scale);
  std::vector<double> oracle(n_oracle);
  for (auto& m : oracle) {
    const int n = count(eng);
    m = 0.0;
    for (int i = 0; i < n; ++i) m = std::max(m, mag(eng));
  }
  std::sort(oracle.begin(), oracle.end());

  constexpr double kTiny = 1e-12;
  const std::vector<predictive::LayerDraw> layer(1000, predictive::LayerDraw{shape, kTiny, scale, kTiny, wet});
  const auto ens = predictive::MaximaEnsemble::simulate(layer, predictive::PredictiveConfig{}, 3);
  std::vector<double> y;
  for (std::size_t k = 1; k < 2000; ++k) y.push_back(oracle[k * n_oracle / 2000]);
  y.erase(std::unique(y.begin(), y.end()), y.end());
  const auto est = predictive::predictive_cdf(ens, y);
  double ks = 0.0;
  const auto n = static_cast<double>(n_oracle);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto hi = static_cast<double>(std::upper_bound(oracle.begin(), oracle.end(), y[i]) - oracle.begin());
    const auto lo = static_cast<double>(std::lower_bound(oracle.begin(), oracle.end(), y[i]) - oracle.begin());
    ks = std::max({ks, std::abs(est.pooled[i] - hi / n), std::abs(est.pooled[i] - lo / n)});
  }
  return verdict(ks < 0.01, "KS distance=" + fmt(ks) + " (limit 0.01) over " + std::to_string(y.size()) + " points");
}

// ---------------------------------------------------------------- 4

Outcome recovery(const fs::path& work) {
  constexpr int kReplicates = 10;
  double total = 0.0;
  std::size_t n_params = 0;
  std::map<std::string, int> misses;
  for (int r = 0; r < kReplicates; ++r) {
    const auto cfg = load_config("wei.json", 1000 + static_cast<std::uint64_t>(r));
    const auto out = work / ("recovery_" + std::to_string(r));
    run_command(cfg, out, "simulate");
    run_command(cfg, out, "fit");
    const auto truth_json = pipeline::read_json(out / "simulate" / "truth.json");
    const auto names = truth_json.at("parameter_names").get<std::vector<std::string>>();
    auto truth = truth_json.at("standardized_truth").get<std::vector<double>>();
    const auto draws = sampler::trace_import((out / "fit_shmev" / "draws.csv").string());
    const model::ShmevLayout layout(3, 1, 1);
    const auto draw_names = layout.names(false);
    n_params = truth.size();
    int covered = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool log_scale = draw_names[i].rfind("log_", 0) == 0;
      const double t = log_scale ? std::log(truth[i]) : truth[i];
      const auto col = draws.column(draws.index_of(draw_names[i]));
      const bool in = empirical_quantile(col, 0.05) <= t && t <= empirical_quantile(col, 0.95);
      covered += in;
      if (!in) ++misses[names[i]];
    }
    const double frac = covered / static_cast<double>(truth.size());
    total += frac;
    std::cout << "  replicate " << r << ": coverage " << covered << "/" << truth.size() << std::endl;
    fs::remove_all(out);
  }
  const double avg = total / kReplicates;
  std::string detail = "mean 90% coverage=" + fmt(avg, 3) + " (limit 0.80) over " + std::to_string(n_params) +
                       " top-level parameters, 10 replicates; misses:";
  for (const auto& [n, c] : misses) detail += " " + n + "x" + std::to_string(c);
  return verdict(avg >= 0.8, detail);
}

// ---------------------------------------------------------------- 5

Outcome versus_gev(const fs::path& work) {
  auto cfg = load_config("wei.json", 1);
  cfg.evaluate.models = {"shmev", "gev"};
  if (cfg.evaluate.threshold != 2.0 || cfg.simulate->scenario.test_blocks != 100) {
    return {Status::Fail, "configs/wei.json must use threshold 2 and 100 test blocks"};
  }
  const auto out = work / "versus_gev";
  run_command(cfg, out, "simulate");
  run_command(cfg, out, "fit", "shmev");
  run_command(cfg, out, "fit", "gev");
  run_command(cfg, out, "evaluate");
  std::map<std::string, std::map<std::string, double>> width;
  std::map<std::string, double> median_fse;
  const auto report = (out / "evaluate" / "report.csv").string();
  auto in = csv::open_input(report);
  const auto header = csv::read_header(in, report);
  auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  for (std::string line; std::getline(in, line);) {
    const auto f = csv::split(line);
    const std::string site(f.at(col("site"))), model(f.at(col("model")));
    if (site == "median") {
      median_fse[model] = csv::parse_double(f.at(col("fse"))).value_or(NAN);
    } else if (const auto v = csv::parse_double(f.at(col("width")))) {
      width[site][model] = *v;
    }
  }
  int narrower = 0, compared = 0;
  for (const auto& [site, w] : width) {
    if (!w.contains("shmev") || !w.contains("gev")) continue;
    ++compared;
    narrower += w.at("shmev") < w.at("gev");
  }
  fs::remove_all(out);
  if (compared == 0) return {Status::Fail, "no site with qualifying test maxima"};
  const double frac = narrower / static_cast<double>(compared);
  const bool ok = median_fse.at("shmev") < median_fse.at("gev") && frac >= 0.7;
  return verdict(ok, "median FSE shmev=" + fmt(median_fse.at("shmev")) + " gev=" + fmt(median_fse.at("gev")) +
                         "; narrower 90% band at " + std::to_string(narrower) + "/" + std::to_string(compared) +
                         " sites (limit 70%)");
}

// ---------------------------------------------------------------- 6

Outcome metric_cases() {
  const std::vector<double> y = {20.0, 50.0, 80.0};
  std::vector<std::vector<double>> over, pm, flat;
  for (double v : y) {
    over.push_back({1.1 * v, 1.1 * v, 1.1 * v});
    pm.push_back({0.9 * v, 1.1 * v});
    flat.push_back(std::vector<double>(50, 1.3 * v));
  }
  const auto a = metrics::score(over, y, 10, 2.0);
  const auto b = metrics::score(pm, y, 10, 2.0);
  const auto c = metrics::score(flat, y, 10, 2.0);
  const bool ok = std::abs(*a.fse - 0.1) < 1e-12 && std::abs(*b.fse - 0.1) < 1e-12 && std::abs(*b.bias) < 1e-12 &&
                  *c.width == 0.0;
  return verdict(ok, "over-predictor FSE=" + fmt(*a.fse, 12) + "; two-draw FSE=" + fmt(*b.fse, 12) +
                         " bias=" + fmt(*b.bias, 3) + "; degenerate width=" + fmt(*c.width));
}

// ---------------------------------------------------------------- 7

Outcome nc_replication(const fs::path& work, const fs::path& nc_config) {
  if (!fs::exists(nc_config)) return {Status::Skip, "no configuration at " + nc_config.string()};
  auto cfg = config::load(nc_config.string());
  for (const auto& e : cfg.data->events) {
    if (!fs::exists(cfg.resolve(e))) return {Status::Skip, "station archive extract not found: " + cfg.resolve(e)};
  }
  if (!fs::exists(cfg.resolve(cfg.data->covariates))) {
    return {Status::Skip, "covariate table not found: " + cfg.resolve(cfg.data->covariates)};
  }
  const auto out = work / "nc";
  run_command(cfg, out, "fit");
  const auto draws = sampler::trace_import((out / "fit_shmev" / "draws.csv").string());
  struct Target {
    const char* name;
    bool exp_scale;
    double value;
    double tol;
  };
  const Target targets[] = {{"beta_gamma[0]", false, 0.86, 0.1},  {"beta_delta[0]", false, 10.5, 1.0},
                            {"beta_lambda[0]", false, -0.93, 0.1}, {"log_sigma_gamma", true, 0.09, 0.05},
                            {"log_sigma_delta", true, 2.19, 0.5}};
  bool ok = true;
  std::string detail = "posterior means:";
  for (const auto& t : targets) {
    auto col = draws.column(draws.index_of(t.name));
    if (t.exp_scale) {
      for (double& v : col) v = std::exp(v);
    }
    const double m = mean(col);
    ok = ok && std::abs(m - t.value) <= t.tol;
    detail += std::string(" ") + (t.exp_scale ? std::string(t.name).substr(4) : t.name) + "=" + fmt(m) + " (target " +
              fmt(t.value) + " +/- " + fmt(t.tol) + ")";
  }
  return verdict(ok, detail);
}

// ---------------------------------------------------------------- 8

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[e.path().lexically_relative(root).string()] = pipeline::read_file(e.path());
  }
  return files;
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const fs::path& work) {
  const auto config = (source_dir() / "configs" / "wei_small.json").string();
  const std::vector<std::string> steps = {"simulate",          "fit --model shmev", "fit --model hmev",
                                          "fit --model gev",   "diagnose --model shmev", "diagnose --model hmev",
                                          "predict",           "map",               "evaluate"};
  for (const char* run : {"a", "b"}) {
    const auto out = work / "determinism" / run;
    for (const auto& step : steps) {
      const std::string cmd = std::string(SHMEV_CLI) + " " + step + " --config " + config + " --out " + out.string() +
                              " > /dev/null";
      if (const int code = shell(cmd); code != 0) {
        return {Status::Fail, "'" + step + "' exited with " + std::to_string(code)};
      }
    }
  }
  const auto a = tree(work / "determinism" / "a");
  const auto b = tree(work / "determinism" / "b");
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a) {
    if (!b.contains(name) || b.at(name) != bytes) differing.push_back(name);
  }
  for (const auto& [name, bytes] : b) {
    if (!a.contains(name)) differing.push_back(name);
  }
  fs::remove_all(work / "determinism");
  std::string detail = std::to_string(a.size()) + " artifacts from " + std::to_string(steps.size()) +
                       " commands compared byte for byte";
  if (!differing.empty()) detail += "; differing: " + differing.front() + " and " + std::to_string(differing.size() - 1) + " more";
  return verdict(differing.empty() && !a.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "shmev_acceptance").string();
  std::string nc_config = (source_dir() / "configs" / "nc.json").string();
  app.add_option("--only", only, "Criteria to run")->delimiter(',')->check(CLI::Range(1, 8));
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--nc-config", nc_config, "Configuration for the North Carolina replication");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const fs::path w = work;
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", 60, gradients},
      {2, "sampler calibration", 60, calibration},
      {3, "predictive cdf oracle", 120, predictive_cdf},
      {4, "parameter recovery", 1800, [&] { return recovery(w); }},
      {5, "sHMEV versus GEV", 2700, [&] { return versus_gev(w); }},
      {6, "metric unit cases", 1, metric_cases},
      {7, "NC replication", 1800, [&] { return nc_replication(w, nc_config); }},
      {8, "determinism", 0, [&] { return determinism(w); }},
  };

  fs::create_directories(w);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt(secs, 3) + " s";
    if (c.limit_seconds > 0) {
      timing += " of " + fmt(c.limit_seconds, 5) + " s";
      if (o.status == Status::Pass && secs >= c.limit_seconds) {
        o.status = Status::Fail;
        o.detail += "; over the runtime budget";
      }
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failures += o.status == Status::Fail;
    std::cout << "[" << tag << "] " << c.id << " " << c.name << ": " << o.detail << " [" << timing << "]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
