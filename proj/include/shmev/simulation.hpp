#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/dataset.hpp"
#include "shmev/distributions.hpp"
#include "shmev/error.hpp"
#include "shmev/math.hpp"
#include "shmev/random.hpp"

// Synthetic rainfall generators: sites uniform in the unit square with
// coordinates z1 = lon and z2 = lat, spatial trends b0 + b1 z1 + b2 z2 on the
// parameter layers, binomial wet-day counts and ordinary events drawn block
// by block.

namespace shmev::simulation {

enum class Scenario { Wei, WeiGp, Gm };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Wei: return "WEI";
    case Scenario::WeiGp: return "WEI_gp";
    case Scenario::Gm: return "GM";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "WEI") return Scenario::Wei;
  if (s == "WEI_gp") return Scenario::WeiGp;
  if (s == "GM") return Scenario::Gm;
  throw ConfigError("unknown scenario '" + s + "' (expected WEI, WEI_gp or GM)");
}

struct Trend {
  double b0 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  [[nodiscard]] double at(double z1, double z2) const { return b0 + b1 * z1 + b2 * z2; }
};

struct ScenarioConfig {
  Scenario scenario = Scenario::Wei;
  int n_sites = 27;
  int train_blocks = 20;
  int test_blocks = 100;
  int block_size = kDefaultBlockSize;

  // Weibull layers (WEI, WEI_gp): Gumbel locations follow the trends.
  Trend shape_trend{0.7, 0.1, -0.1};
  double shape_gumbel_scale = 0.05;
  Trend scale_trend{9.0, 2.0, 1.0};
  double scale_gumbel_scale = 1.5;
  Trend count_trend{-0.9, 0.2, -0.3};

  // WEI_gp: exponential-covariance GP added to both Gumbel locations. The
  // shape layer's variance is rescaled by (shape b0 / scale b0)^2 unless set.
  double gp_alpha = 0.2;
  double gp_nu = 0.3;
  double gp_alpha_shape = -1.0;

  // GM: gamma magnitudes with shape and scale drawn per block around trends.
  Trend gm_shape_trend{0.47, 0.05, -0.05};
  double gm_shape_gumbel_scale = 0.03;
  Trend gm_scale_trend{28.4, 4.0, 2.0};
  double gm_scale_gumbel_scale = 3.0;

  std::uint64_t seed = 1;

  [[nodiscard]] double effective_gp_alpha_shape() const {
    if (gp_alpha_shape >= 0.0) return gp_alpha_shape;
    const double ratio = shape_trend.b0 / scale_trend.b0;
    return gp_alpha * ratio * ratio;
  }

  void validate() const {
    if (n_sites < 1) throw ConfigError("scenario: n_sites must be >= 1");
    if (train_blocks < 1 || test_blocks < 1) throw ConfigError("scenario: train and test blocks must be >= 1");
    if (block_size < 1) throw ConfigError("scenario: block size must be >= 1");
    if (!(shape_gumbel_scale > 0.0 && scale_gumbel_scale > 0.0)) {
      throw ConfigError("scenario: Gumbel scales must be positive");
    }
    if (scenario == Scenario::WeiGp && !(gp_alpha > 0.0 && gp_nu > 0.0)) {
      throw ConfigError("scenario: GP alpha and nu must be positive");
    }
    if (scenario == Scenario::Gm && !(gm_shape_gumbel_scale > 0.0 && gm_scale_gumbel_scale > 0.0)) {
      throw ConfigError("scenario: GM Gumbel scales must be positive");
    }
  }
};

/// Generating parameter field at one site.
struct SiteTruth {
  std::string id;
  double z1 = 0.0;
  double z2 = 0.0;
  double shape_location = 0.0;  // Gumbel location of the per-block shape
  double shape_scale = 0.0;
  double scale_location = 0.0;  // Gumbel location of the per-block scale
  double scale_scale = 0.0;
  double wet_logit = 0.0;
  bool gamma_magnitudes = false;  // GM scenario

  [[nodiscard]] double wet_prob() const { return logistic(wet_logit); }
};

struct SyntheticDataset {
  ScenarioConfig config;
  std::vector<SiteTruth> sites;
  Dataset train;
  StandardizationSnapshot snapshot;
  std::vector<std::vector<double>> test_maxima;  // per site, test_blocks each
  std::size_t rejected_draws = 0;                // non-positive Gumbel draws resampled
  std::size_t rejected_sites = 0;                // GM sites resampled for non-positive trends
  std::size_t empty_test_blocks = 0;             // test blocks without events (maximum recorded as 0)
};

/// Zero-mean Gaussian vector with covariance alpha exp(-d_ij / nu).
inline std::vector<double> gp_sample(const std::vector<std::array<double, 2>>& coords, double alpha, double nu,
                                     RandomStream& rng) {
  if (!(alpha > 0.0 && nu > 0.0)) throw DomainError("gp_sample: alpha and nu must be positive");
  const auto n = static_cast<Eigen::Index>(coords.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dx = coords[i][0] - coords[j][0];
      const double dy = coords[i][1] - coords[j][1];
      const double d = std::sqrt(dx * dx + dy * dy);
      if (i != j && d == 0.0) throw NumericError("gp_sample: duplicate coordinates make the covariance singular");
      cov(i, j) = alpha * std::exp(-d / nu);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10;
    llt.compute(cov);
    if (llt.info() != Eigen::Success) throw NumericError("gp_sample: covariance is not positive definite");
  }
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  const Eigen::VectorXd x = llt.matrixL() * z;
  return {x.data(), x.data() + n};
}

/// One block of ordinary events at a site.
inline OrdinaryEventRecord simulate_block(const SiteTruth& site, int block_size, RandomStream& rng,
                                          std::size_t* rejected = nullptr) {
  const double a = gumbel_sample_positive({site.shape_location, site.shape_scale}, rng, rejected);
  const double b = gumbel_sample_positive({site.scale_location, site.scale_scale}, rng, rejected);
  const int n = binomial_sample({block_size, site.wet_prob()}, rng);
  OrdinaryEventRecord rec;
  rec.magnitudes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = site.gamma_magnitudes ? gamma_sample(a, b, rng) : weibull_sample({a, b}, rng);
    // Gamma draws with small shape can underflow to 0; ordinary events are positive.
    while (!(x > 0.0)) x = site.gamma_magnitudes ? gamma_sample(a, b, rng) : weibull_sample({a, b}, rng);
    rec.magnitudes.push_back(x);
  }
  return rec;
}

inline double block_maximum(const OrdinaryEventRecord& rec) {
  return rec.magnitudes.empty() ? 0.0 : *std::max_element(rec.magnitudes.begin(), rec.magnitudes.end());
}

inline std::string site_id(std::size_t s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03zu", s + 1);
  return buf;
}

inline SyntheticDataset simulate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  SyntheticDataset out;
  out.config = cfg;
  const auto S = static_cast<std::size_t>(cfg.n_sites);

  std::vector<std::array<double, 2>> coords(S);
  for (std::size_t s = 0; s < S; ++s) {
    RandomStream rng(cfg.seed, {1, s});
    for (;;) {
      coords[s] = {rng.uniform(), rng.uniform()};
      if (cfg.scenario != Scenario::Gm) break;
      const double k = cfg.gm_shape_trend.at(coords[s][0], coords[s][1]);
      const double th = cfg.gm_scale_trend.at(coords[s][0], coords[s][1]);
      if (k > 0.0 && th > 0.0) break;
      ++out.rejected_sites;
      if (out.rejected_sites > 1000000) throw ConfigError("scenario: GM trends are non-positive on the unit square");
    }
  }

  std::vector<double> gp_shape(S, 0.0);
  std::vector<double> gp_scale(S, 0.0);
  if (cfg.scenario == Scenario::WeiGp) {
    RandomStream rng_shape(cfg.seed, {2, 0});
    RandomStream rng_scale(cfg.seed, {2, 1});
    gp_shape = gp_sample(coords, cfg.effective_gp_alpha_shape(), cfg.gp_nu, rng_shape);
    gp_scale = gp_sample(coords, cfg.gp_alpha, cfg.gp_nu, rng_scale);
  }

  for (std::size_t s = 0; s < S; ++s) {
    SiteTruth t;
    t.id = site_id(s);
    t.z1 = coords[s][0];
    t.z2 = coords[s][1];
    t.wet_logit = cfg.count_trend.at(t.z1, t.z2);
    if (cfg.scenario == Scenario::Gm) {
      t.gamma_magnitudes = true;
      t.shape_location = cfg.gm_shape_trend.at(t.z1, t.z2);
      t.shape_scale = cfg.gm_shape_gumbel_scale;
      t.scale_location = cfg.gm_scale_trend.at(t.z1, t.z2);
      t.scale_scale = cfg.gm_scale_gumbel_scale;
    } else {
      t.shape_location = cfg.shape_trend.at(t.z1, t.z2) + gp_shape[s];
      t.shape_scale = cfg.shape_gumbel_scale;
      t.scale_location = cfg.scale_trend.at(t.z1, t.z2) + gp_scale[s];
      t.scale_scale = cfg.scale_gumbel_scale;
    }
    out.sites.push_back(t);
  }

  std::vector<std::vector<double>> raw;
  for (const auto& t : out.sites) raw.push_back({t.z1, t.z2});
  const std::vector<std::string> names = {"lon", "lat"};
  out.snapshot = StandardizationSnapshot::fit(names, raw);
  std::vector<SiteCovariates> covs;
  for (std::size_t s = 0; s < S; ++s) covs.push_back({out.sites[s].id, raw[s], out.snapshot.standardize(raw[s])});

  std::vector<OrdinaryEventRecord> events;
  events.reserve(S * static_cast<std::size_t>(cfg.train_blocks));
  out.test_maxima.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    RandomStream train_rng(cfg.seed, {3, s});
    for (int j = 0; j < cfg.train_blocks; ++j) {
      events.push_back(simulate_block(out.sites[s], cfg.block_size, train_rng, &out.rejected_draws));
    }
    RandomStream test_rng(cfg.seed, {4, s});
    for (int j = 0; j < cfg.test_blocks; ++j) {
      const auto rec = simulate_block(out.sites[s], cfg.block_size, test_rng, &out.rejected_draws);
      if (rec.magnitudes.empty()) ++out.empty_test_blocks;
      out.test_maxima[s].push_back(block_maximum(rec));
    }
  }
  out.train = Dataset(names, std::move(covs), static_cast<std::size_t>(cfg.train_blocks), std::move(events),
                      cfg.block_size);
  return out;
}

/// Generating-process values of the top-level sHMEV parameters after the
/// coordinates are standardized with `snap` (trend coefficients mapped to
/// standardized covariates). Order matches ShmevLayout's leading block:
/// beta_gamma[0..2], beta_delta[0..2], beta_lambda[0..2], sigma_gamma, sigma_delta.
inline std::vector<double> standardized_truth(const ScenarioConfig& cfg, const StandardizationSnapshot& snap) {
  if (snap.names.size() != 2) throw StructuralError("standardized_truth: expected the two coordinate covariates");
  std::vector<double> out;
  for (const Trend& t : {cfg.shape_trend, cfg.scale_trend, cfg.count_trend}) {
    out.push_back(t.b0 + t.b1 * snap.means[0] + t.b2 * snap.means[1]);
    out.push_back(t.b1 * snap.sds[0]);
    out.push_back(t.b2 * snap.sds[1]);
  }
  out.push_back(cfg.shape_gumbel_scale);
  out.push_back(cfg.scale_gumbel_scale);
  return out;
}

struct TrueQuantile {
  double value;
  double standard_error;  // from 20 batch quantiles
};

/// Block-maxima quantiles of the generating process at `site` by direct
/// Monte Carlo over `n_years` simulated blocks. Weibull maxima are drawn by
/// inverting F^n; gamma maxima by taking the largest of n draws.
inline std::vector<TrueQuantile> true_quantile_oracle(const SiteTruth& site, int block_size,
                                                      const std::vector<double>& probs, std::uint64_t seed,
                                                      std::size_t n_years = 1000000) {
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("true_quantile_oracle: probability must lie in (0, 1)");
  }
  constexpr std::size_t kBatches = 20;
  std::vector<double> maxima(n_years);
  RandomStream rng(seed, {5});
  for (auto& y : maxima) {
    const double a = gumbel_sample_positive({site.shape_location, site.shape_scale}, rng);
    const double b = gumbel_sample_positive({site.scale_location, site.scale_scale}, rng);
    const int n = binomial_sample({block_size, site.wet_prob()}, rng);
    if (n == 0) {
      y = 0.0;
    } else if (site.gamma_magnitudes) {
      y = 0.0;
      for (int i = 0; i < n; ++i) y = std::max(y, gamma_sample(a, b, rng));
    } else {
      const double u = rng.uniform();
      y = b * std::pow(-std::log(-std::expm1(std::log(u) / n)), 1.0 / a);
    }
  }
  std::vector<TrueQuantile> out;
  const std::size_t batch = n_years / kBatches;
  for (double p : probs) {
    std::vector<double> batch_q;
    for (std::size_t k = 0; k < kBatches; ++k) {
      batch_q.push_back(empirical_quantile(
          std::vector<double>(maxima.begin() + static_cast<std::ptrdiff_t>(k * batch),
                              maxima.begin() + static_cast<std::ptrdiff_t>((k + 1) * batch)),
          p));
    }
    out.push_back({empirical_quantile(maxima, p), std::sqrt(sample_variance(batch_q) / kBatches)});
  }
  return out;
}

inline void to_json(nlohmann::json& j, const Trend& t) { j = nlohmann::json::array({t.b0, t.b1, t.b2}); }

inline void from_json(const nlohmann::json& j, Trend& t) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("trend must be an array of three numbers");
  t = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(nlohmann::json& j, const SiteTruth& t) {
  j = nlohmann::json{{"id", t.id},
                     {"z1", t.z1},
                     {"z2", t.z2},
                     {"shape_location", t.shape_location},
                     {"shape_scale", t.shape_scale},
                     {"scale_location", t.scale_location},
                     {"scale_scale", t.scale_scale},
                     {"wet_logit", t.wet_logit},
                     {"gamma_magnitudes", t.gamma_magnitudes}};
}

inline void from_json(const nlohmann::json& j, SiteTruth& t) {
  j.at("id").get_to(t.id);
  j.at("z1").get_to(t.z1);
  j.at("z2").get_to(t.z2);
  j.at("shape_location").get_to(t.shape_location);
  j.at("shape_scale").get_to(t.shape_scale);
  j.at("scale_location").get_to(t.scale_location);
  j.at("scale_scale").get_to(t.scale_scale);
  j.at("wet_logit").get_to(t.wet_logit);
  j.at("gamma_magnitudes").get_to(t.gamma_magnitudes);
}

}  // namespace shmev::simulation
