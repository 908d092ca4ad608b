#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/elicitation.hpp"
#include "shmev/error.hpp"
#include "shmev/ingest.hpp"
#include "shmev/model/shmev_model.hpp"
#include "shmev/sampler/hmc.hpp"
#include "shmev/simulation.hpp"

// Schema-versioned JSON run configuration. Every section is optional and
// defaulted; unknown keys anywhere are rejected.
//
//   schema_version, seed, threads, output
//   simulate  scenario generator
//   data      event/covariate files, QC policy, training window
//   prior     default | elicit | explicit
//   sampler   HMC settings
//   fit       model: shmev | hmev | gev
//   predict   M_g, return periods, models
//   map       raster, snapshot, return periods
//   evaluate  models, return-time threshold, test maxima

namespace shmev::config {

inline constexpr int kSchemaVersion = 1;

namespace detail {

/// Reads keys of one JSON object and rejects those never asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  void get_u64(const std::string& key, std::uint64_t& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) throw ConfigError(path(key) + ": expected a non-negative integer");
    out = j_.at(key).get<std::uint64_t>();
  }

  void get_int(const std::string& key, int& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
    out = j_.at(key).get<int>();
  }

  [[nodiscard]] const nlohmann::json* child(const std::string& key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  [[nodiscard]] std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!known_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> known_;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace detail

struct SimulateSection {
  simulation::ScenarioConfig scenario;
  int first_year = 2001;  // calendar year of the first training block in exported files
};

struct DataSection {
  std::vector<std::string> events;
  std::string covariates;
  ingest::QcPolicy qc;
  int train_years = 20;
  std::vector<std::string> covariate_names{"lon", "lat", "alt", "dist_coast"};
  std::vector<std::string> stations;  // training subset; empty: all retained stations
  bool test_include_training = false;  // test maxima from the full record
};

struct PriorSection {
  std::string method = "default";
  elicitation::Rules rules;
  std::optional<model::ShmevPriorSpec> spec;
};

struct SamplerSection {
  sampler::SamplerConfig sampler;
  bool store_latent = false;
};

struct PredictSection {
  int n_future_blocks = 100;
  std::vector<double> periods{2, 5, 10, 20, 50, 100};
  std::vector<std::string> models{"shmev"};
};

struct MapSection {
  std::string raster;
  std::string snapshot;  // empty: the fit's training snapshot
  std::vector<double> periods{10, 50, 100};
};

struct EvaluateSection {
  std::vector<std::string> models{"shmev"};
  double threshold = 2.0;
  std::string test_maxima;  // empty: simulate output, else the fit's held-out years
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output = "run";
  std::optional<SimulateSection> simulate;
  std::optional<DataSection> data;
  PriorSection prior;
  SamplerSection sampler;
  std::string model = "shmev";
  PredictSection predict;
  std::optional<MapSection> map;
  EvaluateSection evaluate;
  std::filesystem::path base_dir;  // relative input paths resolve against it

  [[nodiscard]] std::string resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (base_dir / path).lexically_normal().string();
  }
};

inline const std::set<std::string>& model_names() {
  static const std::set<std::string> names{"shmev", "hmev", "gev"};
  return names;
}

inline void check_model(const std::string& m, const std::string& where) {
  detail::require(model_names().count(m) > 0, where + ": unknown model '" + m + "' (expected shmev, hmev or gev)");
}

inline void check_periods(const std::vector<double>& periods, const std::string& where) {
  detail::require(!periods.empty(), where + ": at least one return period required");
  for (double t : periods) detail::require(t > 1.0 && std::isfinite(t), where + ": return periods must exceed 1");
}

inline void parse_trend(detail::Section& s, const std::string& key, simulation::Trend& t) {
  if (const auto* j = s.child(key)) {
    try {
      t = j->get<simulation::Trend>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(s.path(key) + ": " + e.what());
    }
  }
}

inline SimulateSection parse_simulate(const nlohmann::json& j) {
  detail::Section s(j, "simulate");
  SimulateSection out;
  auto& sc = out.scenario;
  std::string scenario = simulation::to_string(sc.scenario);
  s.get("scenario", scenario);
  sc.scenario = simulation::scenario_from_string(scenario);
  s.get_int("n_sites", sc.n_sites);
  s.get_int("train_blocks", sc.train_blocks);
  s.get_int("test_blocks", sc.test_blocks);
  s.get_int("block_size", sc.block_size);
  s.get_int("first_year", out.first_year);
  parse_trend(s, "shape_trend", sc.shape_trend);
  s.get("shape_gumbel_scale", sc.shape_gumbel_scale);
  parse_trend(s, "scale_trend", sc.scale_trend);
  s.get("scale_gumbel_scale", sc.scale_gumbel_scale);
  parse_trend(s, "count_trend", sc.count_trend);
  s.get("gp_alpha", sc.gp_alpha);
  s.get("gp_nu", sc.gp_nu);
  s.get("gp_alpha_shape", sc.gp_alpha_shape);
  parse_trend(s, "gm_shape_trend", sc.gm_shape_trend);
  s.get("gm_shape_gumbel_scale", sc.gm_shape_gumbel_scale);
  parse_trend(s, "gm_scale_trend", sc.gm_scale_trend);
  s.get("gm_scale_gumbel_scale", sc.gm_scale_gumbel_scale);
  s.finish();
  sc.validate();
  detail::require(sc.block_size == kDefaultBlockSize, "simulate.block_size: exported files use daily years of 366");
  detail::require(out.first_year >= 1 && out.first_year + sc.train_blocks <= 9999, "simulate.first_year: out of range");
  return out;
}

inline DataSection parse_data(const nlohmann::json& j) {
  detail::Section s(j, "data");
  DataSection out;
  if (const auto* e = s.child("events")) {
    if (e->is_string()) {
      out.events = {e->get<std::string>()};
    } else {
      try {
        out.events = e->get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("data.events: " + std::string(ex.what()));
      }
    }
  }
  s.get("covariates", out.covariates);
  if (const auto* q = s.child("qc")) {
    detail::Section qs(*q, "data.qc");
    qs.get_int("max_missing_days", out.qc.max_missing_days);
    qs.get_int("min_years", out.qc.min_years);
    qs.get("drop_flagged", out.qc.drop_flagged);
    qs.get("wet_threshold", out.qc.wet_threshold);
    qs.finish();
  }
  s.get_int("train_years", out.train_years);
  s.get("covariate_names", out.covariate_names);
  s.get("stations", out.stations);
  s.get("test_include_training", out.test_include_training);
  s.finish();
  detail::require(!out.events.empty(), "data.events: at least one event file required");
  detail::require(!out.covariates.empty(), "data.covariates: covariate file required");
  detail::require(out.train_years >= 1, "data.train_years: must be >= 1");
  for (const auto& c : out.covariate_names) {
    detail::require(c == "lat" || c == "lon" || c == "alt" || c == "dist_coast",
                    "data.covariate_names: unknown covariate '" + c + "'");
  }
  out.qc.validate();
  return out;
}

inline PriorSection parse_prior(const nlohmann::json& j) {
  detail::Section s(j, "prior");
  PriorSection out;
  s.get("method", out.method);
  detail::require(out.method == "default" || out.method == "elicit" || out.method == "explicit",
                  "prior.method: expected default, elicit or explicit");
  if (const auto* r = s.child("elicitation")) {
    detail::Section rs(*r, "prior.elicitation");
    auto& rules = out.rules;
    if (const auto* si = rs.child("shape_intercept")) {
      if (si->is_null()) {
        rules.shape_intercept.reset();
      } else {
        detail::require(si->is_number(), "prior.elicitation.shape_intercept: expected a number or null");
        rules.shape_intercept = si->get<double>();
      }
    }
    rs.get("relative_half_width", rules.relative_half_width);
    rs.get("sigma_delta_fraction", rules.sigma_delta_fraction);
    rs.get("sigma_gamma_fraction", rules.sigma_gamma_fraction);
    rs.get("inverse_gamma_shape", rules.inverse_gamma_shape);
    rs.get("collinear_sd_factor", rules.collinear_sd_factor);
    rs.get("intervals", rules.intervals);
    rs.finish();
    rules.validate();
  }
  if (const auto* sp = s.child("spec")) {
    try {
      out.spec = sp->get<model::ShmevPriorSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("prior.spec: " + std::string(e.what()));
    }
  }
  s.finish();
  detail::require(out.method != "explicit" || out.spec.has_value(), "prior.spec: required for method explicit");
  return out;
}

inline SamplerSection parse_sampler(const nlohmann::json& j) {
  detail::Section s(j, "sampler");
  SamplerSection out;
  auto& c = out.sampler;
  s.get_int("chains", c.n_chains);
  s.get_int("iterations", c.n_iterations);
  s.get("warmup_fraction", c.warmup_fraction);
  s.get_int("leapfrog_steps", c.leapfrog_steps);
  s.get("step_jitter", c.step_jitter);
  s.get("target_accept", c.target_accept);
  s.get("max_energy_error", c.max_energy_error);
  s.get("store_latent", out.store_latent);
  s.finish();
  try {
    c.validate();
  } catch (const StructuralError& e) {
    throw ConfigError(e.what());
  }
  return out;
}

inline RunConfig parse(const nlohmann::json& j, std::filesystem::path base_dir = {}) {
  detail::Section s(j, "config");
  RunConfig cfg;
  cfg.base_dir = std::move(base_dir);
  if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
  s.get_int("schema_version", cfg.schema_version);
  if (cfg.schema_version != kSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(cfg.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  s.get_u64("seed", cfg.seed);
  s.get_int("threads", cfg.threads);
  detail::require(cfg.threads >= 0, "config.threads: must be >= 0");
  s.get("output", cfg.output);
  if (const auto* x = s.child("simulate")) cfg.simulate = parse_simulate(*x);
  if (const auto* x = s.child("data")) cfg.data = parse_data(*x);
  if (const auto* x = s.child("prior")) cfg.prior = parse_prior(*x);
  if (const auto* x = s.child("sampler")) cfg.sampler = parse_sampler(*x);
  if (const auto* x = s.child("fit")) {
    detail::Section fs(*x, "fit");
    fs.get("model", cfg.model);
    fs.finish();
    check_model(cfg.model, "fit.model");
  }
  if (const auto* x = s.child("predict")) {
    detail::Section ps(*x, "predict");
    ps.get_int("M_g", cfg.predict.n_future_blocks);
    ps.get("periods", cfg.predict.periods);
    ps.get("models", cfg.predict.models);
    ps.finish();
  }
  detail::require(cfg.predict.n_future_blocks >= 1, "predict.M_g: must be >= 1");
  check_periods(cfg.predict.periods, "predict.periods");
  for (const auto& m : cfg.predict.models) check_model(m, "predict.models");
  if (const auto* x = s.child("map")) {
    detail::Section ms(*x, "map");
    MapSection m;
    ms.get("raster", m.raster);
    ms.get("snapshot", m.snapshot);
    ms.get("periods", m.periods);
    ms.finish();
    detail::require(!m.raster.empty(), "map.raster: raster file required");
    check_periods(m.periods, "map.periods");
    cfg.map = m;
  }
  if (const auto* x = s.child("evaluate")) {
    detail::Section es(*x, "evaluate");
    es.get("models", cfg.evaluate.models);
    es.get("threshold", cfg.evaluate.threshold);
    es.get("test_maxima", cfg.evaluate.test_maxima);
    es.finish();
  }
  detail::require(!cfg.evaluate.models.empty(), "evaluate.models: at least one model required");
  for (const auto& m : cfg.evaluate.models) check_model(m, "evaluate.models");
  detail::require(cfg.evaluate.threshold >= 1.0, "evaluate.threshold: must be >= 1");
  s.finish();
  if (cfg.prior.method == "explicit" && cfg.data) {
    try {
      cfg.prior.spec->validate(cfg.data->covariate_names.size() + 1);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("prior.spec: ") + e.what());
    }
  }
  return cfg;
}

inline RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse(j, std::filesystem::path(path).parent_path());
}

/// Fully defaulted configuration; parsing it back yields the same run.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output"] = c.output;
  if (c.simulate) {
    const auto& sc = c.simulate->scenario;
    j["simulate"] = {{"scenario", simulation::to_string(sc.scenario)},
                     {"n_sites", sc.n_sites},
                     {"train_blocks", sc.train_blocks},
                     {"test_blocks", sc.test_blocks},
                     {"block_size", sc.block_size},
                     {"first_year", c.simulate->first_year},
                     {"shape_trend", sc.shape_trend},
                     {"shape_gumbel_scale", sc.shape_gumbel_scale},
                     {"scale_trend", sc.scale_trend},
                     {"scale_gumbel_scale", sc.scale_gumbel_scale},
                     {"count_trend", sc.count_trend},
                     {"gp_alpha", sc.gp_alpha},
                     {"gp_nu", sc.gp_nu},
                     {"gp_alpha_shape", sc.gp_alpha_shape},
                     {"gm_shape_trend", sc.gm_shape_trend},
                     {"gm_shape_gumbel_scale", sc.gm_shape_gumbel_scale},
                     {"gm_scale_trend", sc.gm_scale_trend},
                     {"gm_scale_gumbel_scale", sc.gm_scale_gumbel_scale}};
  }
  if (c.data) {
    const auto& d = *c.data;
    j["data"] = {{"events", d.events},
                 {"covariates", d.covariates},
                 {"qc",
                  {{"max_missing_days", d.qc.max_missing_days},
                   {"min_years", d.qc.min_years},
                   {"drop_flagged", d.qc.drop_flagged},
                   {"wet_threshold", d.qc.wet_threshold}}},
                 {"train_years", d.train_years},
                 {"covariate_names", d.covariate_names},
                 {"stations", d.stations},
                 {"test_include_training", d.test_include_training}};
  }
  const auto& r = c.prior.rules;
  nlohmann::json prior = {{"method", c.prior.method},
                          {"elicitation",
                           {{"shape_intercept", r.shape_intercept ? nlohmann::json(*r.shape_intercept) : nlohmann::json()},
                            {"relative_half_width", r.relative_half_width},
                            {"sigma_delta_fraction", r.sigma_delta_fraction},
                            {"sigma_gamma_fraction", r.sigma_gamma_fraction},
                            {"inverse_gamma_shape", r.inverse_gamma_shape},
                            {"collinear_sd_factor", r.collinear_sd_factor},
                            {"intervals", r.intervals}}}};
  if (c.prior.spec) prior["spec"] = *c.prior.spec;
  j["prior"] = prior;
  const auto& sc = c.sampler.sampler;
  j["sampler"] = {{"chains", sc.n_chains},
                  {"iterations", sc.n_iterations},
                  {"warmup_fraction", sc.warmup_fraction},
                  {"leapfrog_steps", sc.leapfrog_steps},
                  {"step_jitter", sc.step_jitter},
                  {"target_accept", sc.target_accept},
                  {"max_energy_error", sc.max_energy_error},
                  {"store_latent", c.sampler.store_latent}};
  j["fit"] = {{"model", c.model}};
  j["predict"] = {{"M_g", c.predict.n_future_blocks}, {"periods", c.predict.periods}, {"models", c.predict.models}};
  if (c.map) j["map"] = {{"raster", c.map->raster}, {"snapshot", c.map->snapshot}, {"periods", c.map->periods}};
  j["evaluate"] = {
      {"models", c.evaluate.models}, {"threshold", c.evaluate.threshold}, {"test_maxima", c.evaluate.test_maxima}};
  return j;
}

}  // namespace shmev::config
