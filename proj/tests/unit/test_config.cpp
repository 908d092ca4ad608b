#include <gtest/gtest.h>

#include "shmev/config.hpp"

using namespace shmev;
using nlohmann::json;

namespace {

json minimal() { return {{"schema_version", 1}}; }

json with(const std::string& section, json body) {
  auto j = minimal();
  j[section] = std::move(body);
  return j;
}

}  // namespace

TEST(Config, MinimalUsesDefaults) {
  const auto c = config::parse(minimal());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.model, "shmev");
  EXPECT_EQ(c.sampler.sampler.n_chains, 4);
  EXPECT_EQ(c.sampler.sampler.n_iterations, 2000);
  EXPECT_EQ(c.sampler.sampler.leapfrog_steps, 32);
  EXPECT_EQ(c.predict.n_future_blocks, 100);
  EXPECT_EQ(c.evaluate.threshold, 2.0);
  EXPECT_FALSE(c.simulate.has_value());
  EXPECT_FALSE(c.data.has_value());
}

TEST(Config, SchemaVersionIsRequiredAndChecked) {
  EXPECT_THROW(config::parse(json::object()), ConfigError);
  EXPECT_THROW(config::parse({{"schema_version", 2}}), ConfigError);
  EXPECT_THROW(config::parse(json::array()), ConfigError);
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  auto top = minimal();
  top["sed"] = 3;
  EXPECT_THROW(config::parse(top), ConfigError);
  EXPECT_THROW(config::parse(with("sampler", {{"itertions", 10}})), ConfigError);
  EXPECT_THROW(config::parse(with("simulate", {{"n_site", 3}})), ConfigError);
  EXPECT_THROW(config::parse(with("prior", {{"elicitation", {{"half_width", 0.5}}}})), ConfigError);
  EXPECT_THROW(config::parse(with("data", {{"events", "e.csv"}, {"covariates", "c.csv"}, {"qc", {{"min_year", 3}}}})),
               ConfigError);
  EXPECT_THROW(config::parse(with("fit", {{"models", "gev"}})), ConfigError);
}

TEST(Config, NegativeMgIsAValidationError) {
  EXPECT_THROW(config::parse(with("predict", {{"M_g", -1}})), ConfigError);
  EXPECT_THROW(config::parse(with("predict", {{"M_g", 0}})), ConfigError);
  EXPECT_NO_THROW(config::parse(with("predict", {{"M_g", 1}})));
}

TEST(Config, InvalidValues) {
  EXPECT_THROW(config::parse(with("sampler", {{"chains", 0}})), ConfigError);
  EXPECT_THROW(config::parse(with("sampler", {{"chains", "four"}})), ConfigError);
  EXPECT_THROW(config::parse(with("sampler", {{"target_accept", 1.5}})), ConfigError);
  EXPECT_THROW(config::parse(with("fit", {{"model", "gpd"}})), ConfigError);
  EXPECT_THROW(config::parse(with("evaluate", {{"models", {"shmev", "x"}}})), ConfigError);
  EXPECT_THROW(config::parse(with("predict", {{"periods", {0.5}}})), ConfigError);
  EXPECT_THROW(config::parse(with("simulate", {{"scenario", "WEIBULL"}})), ConfigError);
  EXPECT_THROW(config::parse(with("simulate", {{"n_sites", 0}})), ConfigError);
  EXPECT_THROW(config::parse(with("simulate", {{"shape_trend", {1, 2}}})), ConfigError);
  EXPECT_THROW(config::parse(with("prior", {{"method", "explicit"}})), ConfigError);
  EXPECT_THROW(config::parse(with("prior", {{"method", "flat"}})), ConfigError);
  EXPECT_THROW(config::parse(with("data", {{"events", "e.csv"}})), ConfigError);
  EXPECT_THROW(config::parse(with("data", {{"events", "e.csv"}, {"covariates", "c.csv"}, {"covariate_names", {"elev"}}})),
               ConfigError);
  EXPECT_THROW(config::parse(with("map", {{"periods", {10}}})), ConfigError);
  auto neg = minimal();
  neg["seed"] = -4;
  EXPECT_THROW(config::parse(neg), ConfigError);
  neg["seed"] = 1.5;
  EXPECT_THROW(config::parse(neg), ConfigError);
}

TEST(Config, EffectiveConfigRoundTrips) {
  json j = minimal();
  j["seed"] = 77;
  j["simulate"] = {{"scenario", "WEI_gp"}, {"n_sites", 9}, {"scale_trend", {8.0, 1.0, 0.5}}};
  j["data"] = {{"events", {"a.csv", "b.csv"}}, {"covariates", "c.csv"}, {"train_years", 12}, {"stations", {"X"}}};
  j["prior"] = {{"method", "elicit"},
                {"elicitation", {{"shape_intercept", nullptr}, {"intervals", {{"beta_delta[0]", {8.0, 12.0}}}}}}};
  j["map"] = {{"raster", "r.csv"}};
  const auto c = config::parse(j);
  EXPECT_EQ(c.simulate->scenario.scenario, simulation::Scenario::WeiGp);
  EXPECT_EQ(c.simulate->scenario.scale_trend.b0, 8.0);
  EXPECT_EQ(c.data->events.size(), 2u);
  EXPECT_FALSE(c.prior.rules.shape_intercept.has_value());
  EXPECT_EQ(c.prior.rules.intervals.at("beta_delta[0]").upper, 12.0);
  const auto e = config::to_json(c);
  EXPECT_EQ(config::to_json(config::parse(e)), e);
}

TEST(Config, ExplicitPriorIsValidatedAgainstCovariates) {
  const auto spec = model::ShmevPriorSpec::defaults(2);
  json j = minimal();
  j["prior"] = {{"method", "explicit"}, {"spec", spec}};
  j["data"] = {{"events", "e.csv"}, {"covariates", "c.csv"}, {"covariate_names", {"lat"}}};
  EXPECT_NO_THROW(config::parse(j));
  j["data"]["covariate_names"] = {"lat", "lon"};
  EXPECT_THROW(config::parse(j), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
  auto c = config::parse(minimal(), "/etc/runs");
  EXPECT_EQ(c.resolve("data/e.csv"), "/etc/runs/data/e.csv");
  EXPECT_EQ(c.resolve("/abs/e.csv"), "/abs/e.csv");
}
