#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/config.hpp"
#include "shmev/csv.hpp"
#include "shmev/elicitation.hpp"
#include "shmev/error.hpp"
#include "shmev/ingest.hpp"
#include "shmev/metrics.hpp"
#include "shmev/model/gev_model.hpp"
#include "shmev/model/hmev_model.hpp"
#include "shmev/model/shmev_model.hpp"
#include "shmev/predictive.hpp"
#include "shmev/random.hpp"
#include "shmev/sampler/diagnostics.hpp"
#include "shmev/sampler/hmc.hpp"
#include "shmev/sampler/trace.hpp"
#include "shmev/simulation.hpp"

// Command implementations behind the command-line tool. Each command writes
// one directory below the run directory:
//
//   simulate/        events.csv covariates.csv test_maxima.csv truth.json
//   fit_<model>/     draws.csv | sites/<id>.csv, sites.json, snapshot.json,
//                    prior.json, sampler.json, qc_ledger.csv, rejects.tsv,
//                    test_maxima.csv
//   diagnose_<model>/ diagnostics.csv summary.json
//   predict/         quantiles.csv
//   map/             return_levels.csv raster.json
//   evaluate/        report.csv points.csv
//
// plus a manifest.json. Directories are staged under <name>.partial and
// renamed only when the command succeeds.

namespace shmev::pipeline {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- hashing

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string file_hash(const fs::path& p) { return hex(fnv1a(read_file(p))); }

inline json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline void write_json(const json& j, const fs::path& p) {
  auto out = csv::open_output(p.string());
  out << j.dump(2) << '\n';
  csv::finish(out, p.string());
}

// ---------------------------------------------------------------- context

struct Context {
  config::RunConfig cfg;
  fs::path out;  // run directory
  std::string command;
  json effective;  // fully defaulted configuration without the run directory
  std::vector<std::pair<std::string, std::string>> inputs;

  Context(config::RunConfig c, fs::path out_dir, std::string cmd)
      : cfg(std::move(c)), out(std::move(out_dir)), command(std::move(cmd)), effective(config::to_json(cfg)) {
    effective.erase("output");
  }

  [[nodiscard]] std::string config_hash() const { return hex(fnv1a(effective.dump())); }

  /// Registers an input file for the manifest and returns its path.
  std::string input(const fs::path& p) {
    if (!fs::exists(p)) throw DataError("missing input " + p.string());
    auto rel = p.lexically_relative(out);
    const bool inside = !rel.empty() && rel.begin()->string() != "..";
    inputs.emplace_back(inside ? "<run>/" + rel.generic_string() : p.generic_string(), file_hash(p));
    return p.string();
  }
};

/// Staging directory for one command's artifacts.
class Stage {
 public:
  Stage(Context& ctx, const std::string& name) : ctx_(ctx), final_(ctx.out / name), tmp_(ctx.out / (name + ".partial")) {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  Stage(const Stage&) = delete;
  Stage& operator=(const Stage&) = delete;
  ~Stage() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  [[nodiscard]] std::string file(const std::string& name) const {
    const auto p = tmp_ / name;
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void commit(json extra = json::object()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(tmp_)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    json outputs = json::array();
    for (const auto& f : files) {
      outputs.push_back({{"file", f.lexically_relative(tmp_).generic_string()},
                         {"bytes", fs::file_size(f)},
                         {"fnv1a64", file_hash(f)}});
    }
    json inputs = json::array();
    for (const auto& [p, h] : ctx_.inputs) inputs.push_back({{"path", p}, {"fnv1a64", h}});
    json manifest = {{"tool", "shmev"},
                     {"command", ctx_.command},
                     {"seed", ctx_.cfg.seed},
                     {"config_hash", ctx_.config_hash()},
                     {"config", ctx_.effective},
                     {"inputs", inputs},
                     {"outputs", outputs},
                     {"versions", versions()}};
    if (!extra.empty()) manifest["details"] = std::move(extra);
    write_json(manifest, tmp_ / "manifest.json");
    fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

  static json versions() {
    return {{"shmev", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"config_schema", config::kSchemaVersion}};
  }

 private:
  Context& ctx_;
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

// ---------------------------------------------------------------- maxima files

using MaximaTable = std::map<std::string, std::vector<double>>;

inline void write_maxima(const MaximaTable& t, const std::string& path) {
  auto out = csv::open_output(path);
  out << "station,index,maximum\n";
  for (const auto& [id, v] : t) {
    for (std::size_t j = 0; j < v.size(); ++j) out << id << ',' << j << ',' << csv::format(v[j]) << '\n';
  }
  csv::finish(out, path);
}

inline MaximaTable read_maxima(const std::string& path) {
  auto in = csv::open_input(path);
  const auto header = csv::read_header(in, path);
  if (header != std::vector<std::string>{"station", "index", "maximum"}) {
    throw DataError(path + ": expected header station,index,maximum");
  }
  MaximaTable t;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(csv::trim(line));
    const auto v = f.size() == 3 ? csv::parse_double(f[2]) : std::nullopt;
    if (!v || !std::isfinite(*v) || *v < 0.0 || csv::trim(f[0]).empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    t[std::string(csv::trim(f[0]))].push_back(*v);
  }
  return t;
}

// ---------------------------------------------------------------- simulate

inline void simulate(Context& ctx) {
  if (!ctx.cfg.simulate) throw ConfigError("simulate: config has no simulate section");
  auto sc = ctx.cfg.simulate->scenario;
  sc.seed = ctx.cfg.seed;
  const auto sim = simulation::simulate_scenario(sc);
  Stage stage(ctx, "simulate");
  const auto records = ingest::dataset_to_records(sim.train, ctx.cfg.simulate->first_year);
  ingest::write_events(records, stage.file("events.csv"));
  ingest::write_covariates(records, stage.file("covariates.csv"));
  MaximaTable test;
  for (std::size_t s = 0; s < sim.sites.size(); ++s) test[sim.sites[s].id] = sim.test_maxima[s];
  write_maxima(test, stage.file("test_maxima.csv"));

  const model::ShmevLayout layout(sim.train.n_coefficients(), 0, 0);
  auto names = layout.names(false);
  names[names.size() - 2] = "sigma_gamma";
  names[names.size() - 1] = "sigma_delta";
  json truth = {{"scenario", simulation::to_string(sc.scenario)},
                {"sites", sim.sites},
                {"snapshot", sim.snapshot},
                {"parameter_names", names},
                {"standardized_truth", simulation::standardized_truth(sc, sim.snapshot)},
                {"rejected_draws", sim.rejected_draws},
                {"rejected_sites", sim.rejected_sites},
                {"empty_test_blocks", sim.empty_test_blocks}};
  write_json(truth, stage.file("truth.json"));
  stage.commit({{"n_sites", sim.sites.size()}, {"train_blocks", sc.train_blocks}, {"test_blocks", sc.test_blocks}});
}

// ---------------------------------------------------------------- training data

struct Training {
  ingest::QcResult qc;
  ingest::BuiltDataset built;
  std::vector<SiteCovariates> holdout_sites;  // retained stations outside the training set
  MaximaTable holdout_maxima;                 // retained years after the training window, or all
                                              // retained years with data.test_include_training
  double wet_threshold = 0.0;
};

inline Training load_training(Context& ctx) {
  config::DataSection d;
  if (ctx.cfg.data) {
    d = *ctx.cfg.data;
    for (auto& e : d.events) e = ctx.cfg.resolve(e);
    d.covariates = ctx.cfg.resolve(d.covariates);
  } else if (ctx.cfg.simulate) {
    d.events = {(ctx.out / "simulate" / "events.csv").string()};
    d.covariates = (ctx.out / "simulate" / "covariates.csv").string();
    d.qc.min_years = 0;
    d.train_years = ctx.cfg.simulate->scenario.train_blocks;
    d.covariate_names = {"lon", "lat"};
  } else {
    throw ConfigError("fit: config needs a data section or a simulate section");
  }
  for (const auto& e : d.events) ctx.input(e);
  ctx.input(d.covariates);

  Training t;
  t.wet_threshold = d.qc.wet_threshold;
  t.qc = ingest::load_and_qc(d.events, d.covariates, d.qc);
  std::vector<ingest::StationRecord> train, rest;
  if (d.stations.empty()) {
    train = t.qc.stations;
  } else {
    for (const auto& id : d.stations) {
      const auto it = std::find_if(t.qc.stations.begin(), t.qc.stations.end(),
                                   [&](const ingest::StationRecord& r) { return r.id == id; });
      if (it == t.qc.stations.end()) throw DataError("data.stations: station " + id + " not retained by QC");
    }
    for (const auto& r : t.qc.stations) {
      (std::find(d.stations.begin(), d.stations.end(), r.id) != d.stations.end() ? train : rest).push_back(r);
    }
  }
  if (train.empty()) throw DataError("fit: no stations passed QC");
  t.built = ingest::build_dataset(train, static_cast<std::size_t>(d.train_years), d.covariate_names, t.wet_threshold);
  for (const auto& r : rest) {
    std::vector<double> raw;
    bool complete = true;
    for (const auto& name : d.covariate_names) {
      const auto v = ingest::covariate_value(r, name);
      complete = complete && v.has_value();
      if (v) raw.push_back(*v);
    }
    if (complete) t.holdout_sites.push_back({r.id, raw, t.built.snapshot.standardize(raw)});
  }
  for (const auto& r : t.qc.stations) {
    const auto skip = d.test_include_training ? std::size_t{0} : static_cast<std::size_t>(d.train_years);
    auto m = ingest::annual_maxima(r, skip, t.wet_threshold);
    if (!m.empty()) t.holdout_maxima[r.id] = std::move(m);
  }
  return t;
}

inline json sites_json(const std::vector<SiteCovariates>& sites) {
  json a = json::array();
  for (const auto& s : sites) a.push_back({{"id", s.id}, {"raw", s.raw}, {"row", s.row}});
  return a;
}

inline json chain_stats_json(const sampler::PosteriorDraws& d) {
  json a = json::array();
  for (const auto& s : d.stats) {
    a.push_back({{"mean_accept", s.mean_accept},
                 {"divergences", s.divergences},
                 {"warmup_divergences", s.warmup_divergences},
                 {"step_size", s.step_size}});
  }
  return a;
}

inline sampler::SamplerConfig sampler_config(const Context& ctx, std::uint64_t seed) {
  auto sc = ctx.cfg.sampler.sampler;
  sc.seed = seed;
  sc.n_threads = ctx.cfg.threads;
  return sc;
}

template <class Model>
sampler::PosteriorDraws run_model(const Context& ctx, const Model& m, std::uint64_t seed) {
  const auto sc = sampler_config(ctx, seed);
  return sampler::run_hmc(m, sc, sampler::perturbed_inits(m.initial_point(), sc.n_chains, seed), m.parameter_names());
}

inline std::vector<double> training_maxima(const Dataset& data, std::size_t s) {
  std::vector<double> y;
  for (std::size_t j = 0; j < data.n_blocks(); ++j) y.push_back(simulation::block_maximum(data.record(s, j)));
  return y;
}

inline model::ShmevPriorSpec shmev_prior(const Context& ctx, const Dataset& data, json& prior_json) {
  const auto& p = ctx.cfg.prior;
  if (p.method == "explicit") {
    try {
      p.spec->validate(data.n_coefficients());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("prior.spec: ") + e.what());
    } catch (const DomainError& e) {
      throw ConfigError(std::string("prior.spec: ") + e.what());
    }
    prior_json = {{"method", "explicit"}, {"spec", *p.spec}};
    return *p.spec;
  }
  if (p.method == "elicit") {
    const auto r = elicitation::elicit_priors(data, p.rules);
    json stations = json::array();
    for (const auto& s : r.stations) {
      stations.push_back({{"id", s.id}, {"shape", s.shape}, {"scale", s.scale}, {"wet_rate", s.wet_rate}});
    }
    prior_json = {{"method", "elicit"}, {"spec", r.prior}, {"stations", stations}, {"log", r.log}};
    return r.prior;
  }
  const auto spec = model::ShmevPriorSpec::defaults(data.n_coefficients());
  prior_json = {{"method", "default"}, {"spec", spec}};
  return spec;
}

inline void fit(Context& ctx) {
  const std::string& name = ctx.cfg.model;
  auto t = load_training(ctx);
  const auto& data = t.built.data;
  Stage stage(ctx, "fit_" + name);
  ingest::write_ledger(t.qc.ledger, stage.file("qc_ledger.csv"));
  ingest::write_rejects(t.qc.rejects, stage.file("rejects.tsv"));
  write_json(t.built.snapshot, stage.file("snapshot.json"));
  write_maxima(t.holdout_maxima, stage.file("test_maxima.csv"));
  json sites = {{"model", name},
                {"n_coefficients", data.n_coefficients()},
                {"n_sites", data.n_sites()},
                {"n_blocks", data.n_blocks()},
                {"block_size", data.block_size()},
                {"covariate_names", data.covariate_names()},
                {"training", sites_json(data.sites())},
                {"holdout", sites_json(t.holdout_sites)},
                {"training_years", t.built.years}};
  write_json(sites, stage.file("sites.json"));

  json stats;
  std::size_t divergences = 0;
  if (name == "shmev") {
    json prior_json;
    const auto prior = shmev_prior(ctx, data, prior_json);
    write_json(prior_json, stage.file("prior.json"));
    const model::ShmevModel m(data, prior);
    auto d = run_model(ctx, m, ctx.cfg.seed);
    if (!ctx.cfg.sampler.store_latent) d = d.leading(m.layout().n_top_level());
    sampler::trace_export(d, stage.file("draws.csv"));
    stats = chain_stats_json(d);
    for (const auto& s : d.stats) divergences += s.divergences;
  } else {
    json priors = json::object();
    stats = json::object();
    for (std::size_t s = 0; s < data.n_sites(); ++s) {
      const auto& id = data.sites()[s].id;
      const auto seed = derive_seed(ctx.cfg.seed, {static_cast<std::uint64_t>(s)});
      sampler::PosteriorDraws d;
      if (name == "hmev") {
        std::vector<OrdinaryEventRecord> blocks(data.records().begin() + static_cast<std::ptrdiff_t>(s * data.n_blocks()),
                                                data.records().begin() +
                                                    static_cast<std::ptrdiff_t>((s + 1) * data.n_blocks()));
        std::vector<double> pooled;
        for (const auto& b : blocks) pooled.insert(pooled.end(), b.magnitudes.begin(), b.magnitudes.end());
        const auto mom = elicitation::weibull_mom(pooled);
        const auto prior =
            model::HmevPriorSpec::from_blocks(blocks, data.block_size(), mom.params.shape, mom.params.scale);
        priors[id] = prior;
        const model::HmevModel m(blocks, prior, data.block_size());
        d = run_model(ctx, m, seed);
        if (!ctx.cfg.sampler.store_latent) d = d.leading(model::HmevModel::kTopLevel);
      } else {
        const auto y = training_maxima(data, s);
        const auto prior = model::GevPriorSpec::from_maxima(y);
        priors[id] = prior;
        const model::GevModel m(y, prior);
        d = run_model(ctx, m, seed);
      }
      sampler::trace_export(d, stage.file("sites/" + id + ".csv"));
      stats[id] = chain_stats_json(d);
      for (const auto& st : d.stats) divergences += st.divergences;
    }
    write_json({{"method", "per_site"}, {"sites", priors}}, stage.file("prior.json"));
  }
  write_json({{"chains", stats}, {"divergences", divergences}}, stage.file("sampler.json"));
  stage.commit({{"model", name},
                {"n_sites", data.n_sites()},
                {"n_blocks", data.n_blocks()},
                {"post_warmup_divergences", divergences},
                {"rejects", t.qc.rejects.size()}});
}

// ---------------------------------------------------------------- fitted models

/// A fit directory read back for prediction.
struct FittedModel {
  std::string name;
  fs::path dir;
  json sites;
  StandardizationSnapshot snapshot;
  sampler::PosteriorDraws shmev_draws;
  std::map<std::string, sampler::PosteriorDraws> site_draws;

  [[nodiscard]] int block_size() const { return sites.at("block_size").get<int>(); }

  [[nodiscard]] model::ShmevLayout layout() const {
    return model::ShmevLayout(sites.at("n_coefficients").get<std::size_t>(), sites.at("n_sites").get<std::size_t>(),
                              sites.at("n_blocks").get<std::size_t>());
  }

  [[nodiscard]] std::vector<std::string> training_ids() const {
    std::vector<std::string> ids;
    for (const auto& s : sites.at("training")) ids.push_back(s.at("id").get<std::string>());
    return ids;
  }

  [[nodiscard]] bool covers(const std::string& id) const {
    return name == "shmev" ? row_of(id).has_value() : site_draws.count(id) > 0;
  }

  /// Standardized covariate row of a training or held-out station.
  [[nodiscard]] std::optional<std::vector<double>> row_of(const std::string& id) const {
    for (const char* group : {"training", "holdout"}) {
      for (const auto& s : sites.at(group)) {
        if (s.at("id").get<std::string>() == id) return s.at("row").get<std::vector<double>>();
      }
    }
    return std::nullopt;
  }
};

inline FittedModel load_fit(Context& ctx, const std::string& name) {
  FittedModel f;
  f.name = name;
  f.dir = ctx.out / ("fit_" + name);
  if (!fs::exists(f.dir / "manifest.json")) {
    throw DataError("no completed " + name + " fit in " + ctx.out.string() + " (run `fit` with model " + name + ")");
  }
  f.sites = read_json(ctx.input(f.dir / "sites.json"));
  f.snapshot = read_json(ctx.input(f.dir / "snapshot.json")).get<StandardizationSnapshot>();
  if (name == "shmev") {
    f.shmev_draws = sampler::trace_import(ctx.input(f.dir / "draws.csv"));
  } else {
    for (const auto& id : f.training_ids()) {
      f.site_draws[id] = sampler::trace_import(ctx.input(f.dir / "sites" / (id + ".csv")));
    }
  }
  return f;
}

inline predictive::PredictiveConfig predictive_config(const Context& ctx, int block_size) {
  predictive::PredictiveConfig pc;
  pc.n_future_blocks = ctx.cfg.predict.n_future_blocks;
  pc.block_size = block_size;
  pc.seed = ctx.cfg.seed;
  return pc;
}

/// Per-draw quantiles of the block-maxima distribution of one station, or
/// nullopt when the model has no fit there.
inline std::optional<std::vector<std::vector<double>>> station_quantiles(const Context& ctx, const FittedModel& f,
                                                                         const std::string& id,
                                                                         std::span<const double> probs) {
  const auto pc = predictive_config(ctx, f.block_size());
  if (f.name == "shmev") {
    const auto row = f.row_of(id);
    if (!row) return std::nullopt;
    const auto layer = predictive::shmev_layer_draws(f.shmev_draws, f.layout(), *row);
    return predictive::MaximaEnsemble::simulate(layer, pc, predictive::row_key(*row)).draw_quantiles(probs);
  }
  const auto it = f.site_draws.find(id);
  if (it == f.site_draws.end()) return std::nullopt;
  if (f.name == "gev") return predictive::GevEnsemble::from_draws(it->second).draw_quantiles(probs);
  const auto layer = predictive::hmev_layer_draws(it->second);
  return predictive::MaximaEnsemble::simulate(layer, pc, fnv1a(id)).draw_quantiles(probs);
}

// ---------------------------------------------------------------- diagnose

inline void diagnose(Context& ctx) {
  const auto f = load_fit(ctx, ctx.cfg.model);
  Stage stage(ctx, "diagnose_" + f.name);
  auto out = csv::open_output(stage.file("diagnostics.csv"));
  out << "site,param,mean,sd,q05,q50,q95,rhat,ess,degenerate\n";
  double max_rhat = 0.0, min_ess = std::numeric_limits<double>::infinity();
  std::size_t n_params = 0, n_rhat_high = 0, n_degenerate = 0;
  auto emit = [&](const std::string& site, const sampler::PosteriorDraws& d) {
    const auto diag = sampler::rhat_ess(d);
    for (std::size_t p = 0; p < d.dim(); ++p) {
      const auto col = d.column(p);
      const double m = mean(col);
      const double sd = std::sqrt(sample_variance(col));
      const auto& g = diag[p];
      out << site << ',' << d.names[p] << ',' << csv::format(m) << ',' << csv::format(sd) << ','
          << csv::format(empirical_quantile(col, 0.05)) << ',' << csv::format(empirical_quantile(col, 0.5)) << ','
          << csv::format(empirical_quantile(col, 0.95)) << ',' << (g.rhat ? csv::format(*g.rhat) : "NA") << ','
          << (g.degenerate ? "NA" : csv::format(g.ess)) << ',' << (g.degenerate ? 1 : 0) << '\n';
      ++n_params;
      if (g.degenerate) {
        ++n_degenerate;
        continue;
      }
      if (g.rhat) {
        max_rhat = std::max(max_rhat, *g.rhat);
        if (*g.rhat > 1.01) ++n_rhat_high;
      }
      min_ess = std::min(min_ess, g.ess);
    }
  };
  if (f.name == "shmev") {
    emit("all", f.shmev_draws);
  } else {
    for (const auto& [id, d] : f.site_draws) emit(id, d);
  }
  csv::finish(out, stage.file("diagnostics.csv"));
  const auto sampler_json = read_json(ctx.input(f.dir / "sampler.json"));
  json summary = {{"model", f.name},
                  {"parameters", n_params},
                  {"max_rhat", max_rhat},
                  {"min_ess", std::isfinite(min_ess) ? json(min_ess) : json()},
                  {"rhat_above_1.01", n_rhat_high},
                  {"degenerate", n_degenerate},
                  {"post_warmup_divergences", sampler_json.at("divergences")}};
  write_json(summary, stage.file("summary.json"));
  stage.commit(summary);
}

// ---------------------------------------------------------------- predict

inline void predict(Context& ctx) {
  std::vector<FittedModel> fits;
  for (const auto& m : ctx.cfg.predict.models) fits.push_back(load_fit(ctx, m));
  const auto probs = predictive::return_probabilities(ctx.cfg.predict.periods);
  Stage stage(ctx, "predict");
  auto out = csv::open_output(stage.file("quantiles.csv"));
  out << "site,model,T,prob,mean,q05,q95\n";
  for (const auto& f : fits) {
    std::vector<std::string> ids = f.training_ids();
    if (f.name == "shmev") {
      for (const auto& s : f.sites.at("holdout")) ids.push_back(s.at("id").get<std::string>());
    }
    for (const auto& id : ids) {
      const auto q = station_quantiles(ctx, f, id, probs);
      for (std::size_t k = 0; k < probs.size(); ++k) {
        const auto s = predictive::summarize((*q)[k]);
        out << id << ',' << f.name << ',' << csv::format(ctx.cfg.predict.periods[k]) << ',' << csv::format(probs[k])
            << ',' << csv::format(s.mean) << ',' << csv::format(s.q05) << ',' << csv::format(s.q95) << '\n';
      }
    }
  }
  csv::finish(out, stage.file("quantiles.csv"));
  stage.commit({{"M_g", ctx.cfg.predict.n_future_blocks}, {"models", ctx.cfg.predict.models}});
}

// ---------------------------------------------------------------- map

inline void map(Context& ctx) {
  if (!ctx.cfg.map) throw ConfigError("map: config has no map section");
  const auto& mc = *ctx.cfg.map;
  const auto f = load_fit(ctx, "shmev");
  auto points = predictive::read_raster_points(ctx.input(ctx.cfg.resolve(mc.raster)));
  const auto snap_path = mc.snapshot.empty() ? (f.dir / "snapshot.json").string() : ctx.cfg.resolve(mc.snapshot);
  const auto declared = read_json(ctx.input(snap_path)).get<StandardizationSnapshot>();
  const auto raster = predictive::standardize_raster(std::move(points), declared);
  const auto pc = predictive_config(ctx, f.block_size());
  const auto field = predictive::return_level_map(f.shmev_draws, f.layout(), f.snapshot, raster, mc.periods, pc);
  Stage stage(ctx, "map");
  predictive::write_return_levels(field, raster, stage.file("return_levels.csv"));
  const auto meta = predictive::raster_metadata(field, pc, f.snapshot);
  write_json(meta, stage.file("raster.json"));
  stage.commit({{"points", raster.points.size()}, {"empty_block_flag", field.empty_blocks > 0}});
}

// ---------------------------------------------------------------- evaluate

inline void evaluate(Context& ctx) {
  const auto& ec = ctx.cfg.evaluate;
  std::string test_path;
  if (!ec.test_maxima.empty()) {
    test_path = ctx.cfg.resolve(ec.test_maxima);
  } else if (ctx.cfg.simulate) {
    test_path = (ctx.out / "simulate" / "test_maxima.csv").string();
  } else {
    test_path = (ctx.out / ("fit_" + ec.models.front()) / "test_maxima.csv").string();
  }
  const auto test = read_maxima(ctx.input(test_path));
  std::vector<FittedModel> fits;
  for (const auto& m : ec.models) fits.push_back(load_fit(ctx, m));

  Stage stage(ctx, "evaluate");
  auto points = csv::open_output(stage.file("points.csv"));
  points << "site,model,observed,prob,T,mean,q05,q95\n";
  std::vector<metrics::ReportRow> rows;
  for (const auto& f : fits) {
    for (const auto& [id, y] : test) {
      if (y.empty()) continue;
      const auto rt = metrics::empirical_return_times(y);
      const auto idx = metrics::qualifying(rt, ec.threshold);
      std::vector<double> probs, observed;
      for (std::size_t j : idx) {
        probs.push_back(rt[j].prob);
        observed.push_back(y[j]);
      }
      if (!f.covers(id)) continue;
      std::vector<std::vector<double>> q;
      if (!probs.empty()) q = *station_quantiles(ctx, f, id, probs);
      rows.push_back({id, f.name, metrics::score(q, observed, y.size(), ec.threshold)});
      for (std::size_t k = 0; k < probs.size(); ++k) {
        const auto s = predictive::summarize(q[k]);
        points << id << ',' << f.name << ',' << csv::format(observed[k]) << ',' << csv::format(probs[k]) << ','
               << csv::format(rt[idx[k]].period) << ',' << csv::format(s.mean) << ',' << csv::format(s.q05) << ','
               << csv::format(s.q95) << '\n';
      }
    }
  }
  csv::finish(points, stage.file("points.csv"));
  if (rows.empty()) throw DataError("evaluate: no test station has a fitted model");
  metrics::write_report(rows, stage.file("report.csv"));
  json medians = json::object();
  for (const auto& m : ec.models) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(); };
    medians[m] = {{"fse", opt(metrics::median_of(rows, m, &metrics::SiteMetrics::fse))},
                  {"bias", opt(metrics::median_of(rows, m, &metrics::SiteMetrics::bias))},
                  {"width", opt(metrics::median_of(rows, m, &metrics::SiteMetrics::width))}};
  }
  stage.commit({{"threshold", ec.threshold}, {"M_g", ctx.cfg.predict.n_future_blocks}, {"medians", medians}});
}

// ---------------------------------------------------------------- dispatch

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"simulate", "fit", "diagnose", "predict", "map", "evaluate"};
  return c;
}

inline void run(Context& ctx) {
  if (ctx.command == "simulate") return simulate(ctx);
  if (ctx.command == "fit") return fit(ctx);
  if (ctx.command == "diagnose") return diagnose(ctx);
  if (ctx.command == "predict") return predict(ctx);
  if (ctx.command == "map") return map(ctx);
  if (ctx.command == "evaluate") return evaluate(ctx);
  throw ConfigError("unknown command " + ctx.command);
}

}  // namespace shmev::pipeline
