#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shmev/dataset.hpp"
#include "shmev/distributions.hpp"
#include "shmev/error.hpp"
#include "shmev/math.hpp"
#include "shmev/model/shmev_model.hpp"

// Empirical-Bayes prior centers from per-station method-of-moments fits and
// one-covariate least-squares regressions over the training stations.

namespace shmev::elicitation {

/// Squared coefficient of variation of a Weibull with shape `gamma`.
inline double weibull_cv2(double gamma) {
  return std::exp(std::lgamma(1.0 + 2.0 / gamma) - 2.0 * std::lgamma(1.0 + 1.0 / gamma)) - 1.0;
}

inline constexpr double kMomShapeLower = 0.05;
inline constexpr double kMomShapeUpper = 20.0;

struct MomFit {
  WeibullParams params;
  int iterations = 0;
  double residual = 0.0;  // relative residual of the CV equation
};

/// Method-of-moments Weibull fit: solves CV^2 = G(1+2/g)/G(1+1/g)^2 - 1 by
/// bisection on [0.05, 20], then scale = mean / G(1+1/g). Moments use the
/// population (1/n) variance.
inline MomFit weibull_mom(std::span<const double> sample) {
  if (sample.size() < 2) throw DataError("weibull_mom: need at least 2 values");
  for (double x : sample) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DataError("weibull_mom: values must be positive and finite");
  }
  const double m = mean(sample);
  double ss = 0.0;
  for (double x : sample) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(sample.size());
  if (!(var > 0.0)) throw DataError("weibull_mom: sample has zero variance");
  const double target = var / (m * m);

  double lo = kMomShapeLower, hi = kMomShapeUpper;
  const double f_lo = weibull_cv2(lo), f_hi = weibull_cv2(hi);
  if (target > f_lo || target < f_hi) {
    throw NumericError("weibull_mom: CV^2 = " + std::to_string(target) + " outside the bracketed range [" +
                       std::to_string(f_hi) + ", " + std::to_string(f_lo) + "] for shape in [0.05, 20]");
  }
  MomFit fit;
  double g = 0.5 * (lo + hi);
  for (; fit.iterations < 200; ++fit.iterations) {
    g = 0.5 * (lo + hi);
    const double f = weibull_cv2(g);
    if (f > target) {
      lo = g;
    } else {
      hi = g;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * g) break;
  }
  fit.residual = std::abs(weibull_cv2(g) - target) / target;
  if (!(fit.residual < 1e-10)) {
    throw NumericError("weibull_mom: bisection residual " + std::to_string(fit.residual) + " at shape " +
                       std::to_string(g));
  }
  fit.params = {g, m / std::tgamma(1.0 + 1.0 / g)};
  return fit;
}

/// Interval believed to contain a coefficient.
struct Interval {
  double lower;
  double upper;
};

inline constexpr double kNormal975 = 1.959963984540054;

/// Normal prior at `center` with at least 0.95 mass on the interval; the sd is
/// (upper - lower) / (2 * 1.96) when the interval is symmetric about the center.
inline NormalPrior prior_from_interval(double center, const Interval& iv) {
  if (!(iv.upper > iv.lower)) throw ConfigError("elicitation: reasonable interval must have upper > lower");
  if (!(center > iv.lower && center < iv.upper)) {
    throw ConfigError("elicitation: prior center lies outside its reasonable interval");
  }
  return {center, std::min(center - iv.lower, iv.upper - center) / kNormal975};
}

inline InverseGammaPrior inverse_gamma_with_mean(double target_mean, double shape = 3.0) {
  if (!(target_mean > 0.0) || !(shape > 1.0)) throw DomainError("inverse gamma: need positive mean and shape > 1");
  return {shape, target_mean * (shape - 1.0)};
}

struct Rules {
  std::optional<double> shape_intercept = 2.0 / 3.0;  // unset: mean of per-station shapes
  double relative_half_width = 0.5;                   // default half-width / |intercept center|
  double sigma_delta_fraction = 0.25;
  double sigma_gamma_fraction = 0.05;
  double inverse_gamma_shape = 3.0;
  double collinear_sd_factor = 1.0;  // fallback slope sd = factor * |intercept center|
  std::map<std::string, Interval> intervals;  // overrides keyed by parameter name, e.g. "beta_delta[0]"

  void validate() const {
    if (!(relative_half_width > 0.0)) throw ConfigError("elicitation: relative_half_width must be positive");
    if (!(sigma_delta_fraction > 0.0) || !(sigma_gamma_fraction > 0.0)) {
      throw ConfigError("elicitation: sigma fractions must be positive");
    }
    if (!(inverse_gamma_shape > 1.0)) throw ConfigError("elicitation: inverse_gamma_shape must exceed 1");
    if (!(collinear_sd_factor > 0.0)) throw ConfigError("elicitation: collinear_sd_factor must be positive");
  }
};

struct StationEstimate {
  std::string id;
  double shape;
  double scale;
  double wet_rate;
};

struct Result {
  model::ShmevPriorSpec prior;
  std::vector<StationEstimate> stations;
  std::vector<std::string> log;
};

/// Least-squares slope of y on x; nullopt when x has no spread.
inline std::optional<double> ls_slope(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 1e-12 * static_cast<double>(x.size()))) return std::nullopt;
  return sxy / sxx;
}

inline Result elicit_priors(const Dataset& data, const Rules& rules = {}) {
  rules.validate();
  const std::size_t S = data.n_sites(), P = data.n_coefficients();
  if (S < 2) throw DataError("elicit_priors: need at least 2 stations");
  if (data.n_blocks() == 0) throw DataError("elicit_priors: no training blocks");
  Result out;
  std::vector<double> shapes, scales, wet_logits;
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<double> pooled;
    for (std::size_t j = 0; j < data.n_blocks(); ++j) {
      const auto& m = data.record(s, j).magnitudes;
      pooled.insert(pooled.end(), m.begin(), m.end());
    }
    const auto fit = weibull_mom(pooled);
    const double days = static_cast<double>(data.n_blocks()) * data.block_size();
    const double rate = static_cast<double>(pooled.size()) / days;
    if (!(rate < 1.0)) throw DataError("elicit_priors: station " + data.sites()[s].id + " is wet every day");
    out.stations.push_back({data.sites()[s].id, fit.params.shape, fit.params.scale, rate});
    shapes.push_back(fit.params.shape);
    scales.push_back(fit.params.scale);
    wet_logits.push_back(logit(rate));
  }

  auto group = [&](const char* name, const std::vector<double>& y, std::optional<double> intercept) {
    std::vector<NormalPrior> priors(P);
    const double c0 = intercept ? *intercept : mean(y);
    const double half = rules.relative_half_width * std::abs(c0);
    if (!(half > 0.0)) throw DataError(std::string("elicit_priors: zero intercept center for ") + name);
    auto interval = [&](std::size_t k, double center) {
      const auto key = std::string(name) + "[" + std::to_string(k) + "]";
      const auto it = rules.intervals.find(key);
      return it != rules.intervals.end() ? it->second : Interval{center - half, center + half};
    };
    priors[0] = prior_from_interval(c0, interval(0, c0));
    for (std::size_t k = 1; k < P; ++k) {
      std::vector<double> x(S);
      for (std::size_t s = 0; s < S; ++s) x[s] = data.sites()[s].row[k];
      const auto slope = ls_slope(x, y);
      if (!slope) {
        priors[k] = {0.0, rules.collinear_sd_factor * std::abs(c0)};
        out.log.push_back(std::string(name) + "[" + std::to_string(k) + "]: covariate " +
                          data.covariate_names()[k - 1] + " has no spread, slope prior N(0, " +
                          std::to_string(priors[k].sd) + ")");
        continue;
      }
      priors[k] = prior_from_interval(*slope, interval(k, *slope));
    }
    return priors;
  };
  out.prior.beta_gamma = group("beta_gamma", shapes, rules.shape_intercept);
  out.prior.beta_delta = group("beta_delta", scales, std::nullopt);
  out.prior.beta_lambda = group("beta_lambda", wet_logits, std::nullopt);
  out.prior.sigma_gamma =
      inverse_gamma_with_mean(rules.sigma_gamma_fraction * out.prior.beta_gamma[0].mean, rules.inverse_gamma_shape);
  out.prior.sigma_delta =
      inverse_gamma_with_mean(rules.sigma_delta_fraction * out.prior.beta_delta[0].mean, rules.inverse_gamma_shape);
  return out;
}

inline void to_json(nlohmann::json& j, const Interval& iv) { j = nlohmann::json::array({iv.lower, iv.upper}); }
inline void from_json(const nlohmann::json& j, Interval& iv) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("elicitation: interval must be [lower, upper]");
  iv = {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace shmev::elicitation
