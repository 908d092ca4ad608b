#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>

#include "shmev/error.hpp"
#include "shmev/math.hpp"
#include "shmev/random.hpp"

// Densities, cdfs, quantiles and samplers for the distribution families the
// model uses: Weibull magnitudes, Gumbel latent layers, binomial counts, the
// GEV benchmark, and the normal / gamma / inverse-gamma / beta prior kernels.

namespace shmev {

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Weibull

struct WeibullParams {
  double shape;  // gamma, dimensionless
  double scale;  // delta, mm
};

inline void validate(const WeibullParams& p) {
  detail::require(std::isfinite(p.shape) && p.shape > 0.0, "weibull: shape must be positive");
  detail::require(std::isfinite(p.scale) && p.scale > 0.0, "weibull: scale must be positive");
}

struct WeibullEval {
  double log_density;
  double cdf;
};

inline WeibullEval weibull_logpdf_cdf(double x, const WeibullParams& p) {
  validate(p);
  detail::require(std::isfinite(x) && x > 0.0, "weibull: x must be positive");
  const double log_ratio = std::log(x / p.scale);
  const double power = std::exp(p.shape * log_ratio);  // (x / delta)^gamma
  return {std::log(p.shape / p.scale) + (p.shape - 1.0) * log_ratio - power, -std::expm1(-power)};
}

inline double weibull_logpdf(double x, const WeibullParams& p) { return weibull_logpdf_cdf(x, p).log_density; }

inline double weibull_cdf(double x, const WeibullParams& p) {
  validate(p);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return -std::expm1(-std::pow(x / p.scale, p.shape));
}

inline double weibull_quantile(double prob, const WeibullParams& p) {
  validate(p);
  detail::require(prob >= 0.0 && prob < 1.0, "weibull: probability must lie in [0, 1)");
  return p.scale * std::pow(-std::log1p(-prob), 1.0 / p.shape);
}

inline double weibull_mean(const WeibullParams& p) { return p.scale * std::tgamma(1.0 + 1.0 / p.shape); }

inline double weibull_variance(const WeibullParams& p) {
  const double g1 = std::tgamma(1.0 + 1.0 / p.shape);
  return p.scale * p.scale * (std::tgamma(1.0 + 2.0 / p.shape) - g1 * g1);
}

inline double weibull_sample(const WeibullParams& p, RandomStream& rng) {
  return p.scale * std::pow(-std::log(rng.uniform()), 1.0 / p.shape);
}

// ---------------------------------------------------------------------------
// Gumbel (maximum)

struct GumbelParams {
  double location;
  double scale;
};

inline void validate(const GumbelParams& p) {
  detail::require(std::isfinite(p.location), "gumbel: location must be finite");
  detail::require(std::isfinite(p.scale) && p.scale > 0.0, "gumbel: scale must be positive");
}

inline double gumbel_logpdf(double x, const GumbelParams& p) {
  validate(p);
  const double z = (x - p.location) / p.scale;
  return -std::log(p.scale) - z - std::exp(-z);
}

inline double gumbel_cdf(double x, const GumbelParams& p) {
  validate(p);
  return std::exp(-std::exp(-(x - p.location) / p.scale));
}

inline double gumbel_quantile(double prob, const GumbelParams& p) {
  validate(p);
  detail::require(prob > 0.0 && prob < 1.0, "gumbel: probability must lie in (0, 1)");
  return p.location - p.scale * std::log(-std::log(prob));
}

inline double gumbel_mean(const GumbelParams& p) { return p.location + kEulerGamma * p.scale; }

inline double gumbel_variance(const GumbelParams& p) {
  return std::numbers::pi * std::numbers::pi * p.scale * p.scale / 6.0;
}

/// Pr(X > 0).
inline double gumbel_prob_positive(const GumbelParams& p) {
  validate(p);
  return -std::expm1(-std::exp(p.location / p.scale));
}

inline double gumbel_sample(const GumbelParams& p, RandomStream& rng) {
  return p.location - p.scale * std::log(-std::log(rng.uniform()));
}

/// Draw from the Gumbel conditioned on X > 0 by rejection. Fails instead of
/// looping when Pr(X > 0) < 1e-6. `rejected`, when given, accumulates the
/// number of discarded non-positive draws.
inline double gumbel_sample_positive(const GumbelParams& p, RandomStream& rng, std::size_t* rejected = nullptr) {
  const double accept = gumbel_prob_positive(p);
  if (accept < 1e-6) {
    throw NumericError("gumbel_sample_positive: Pr(X > 0) = " + std::to_string(accept) + " for location " +
                       std::to_string(p.location) + ", scale " + std::to_string(p.scale) + " is below 1e-6");
  }
  for (;;) {
    const double x = gumbel_sample(p, rng);
    if (x > 0.0) return x;
    if (rejected != nullptr) ++*rejected;
  }
}

// ---------------------------------------------------------------------------
// Binomial

struct BinomialParams {
  int trials;
  double prob;
};

inline void validate(const BinomialParams& p) {
  detail::require(p.trials >= 1, "binomial: trials must be >= 1");
  detail::require(p.prob > 0.0 && p.prob < 1.0, "binomial: probability must lie in (0, 1)");
}

inline double binomial_logpmf(int k, const BinomialParams& p) {
  validate(p);
  detail::require(k >= 0 && k <= p.trials, "binomial: k outside [0, trials]");
  return log_choose(p.trials, k) + k * std::log(p.prob) + (p.trials - k) * std::log1p(-p.prob);
}

inline int binomial_sample(const BinomialParams& p, RandomStream& rng) {
  validate(p);
  return std::binomial_distribution<int>(p.trials, p.prob)(rng);
}

inline double binomial_mean(const BinomialParams& p) { return p.trials * p.prob; }
inline double binomial_variance(const BinomialParams& p) { return p.trials * p.prob * (1.0 - p.prob); }

// ---------------------------------------------------------------------------
// Generalized extreme value

struct GevParams {
  double location;
  double scale;
  double shape;  // tau; > 0 heavy (Frechet) tail
};

inline constexpr double kGevGumbelLimit = 1e-10;

inline void validate(const GevParams& p) {
  detail::require(std::isfinite(p.location) && std::isfinite(p.shape), "gev: location and shape must be finite");
  detail::require(std::isfinite(p.scale) && p.scale > 0.0, "gev: scale must be positive");
}

inline double gev_cdf(double y, const GevParams& p) {
  validate(p);
  const double z = (y - p.location) / p.scale;
  if (std::abs(p.shape) < kGevGumbelLimit) return std::exp(-std::exp(-z));
  const double t = 1.0 + p.shape * z;
  if (t <= 0.0) return p.shape > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log(t) / p.shape));
}

inline double gev_quantile(double prob, const GevParams& p) {
  validate(p);
  detail::require(prob > 0.0 && prob < 1.0, "gev: probability must lie in (0, 1)");
  const double w = -std::log(prob);
  if (std::abs(p.shape) < kGevGumbelLimit) return p.location - p.scale * std::log(w);
  return p.location + p.scale * std::expm1(-p.shape * std::log(w)) / p.shape;
}

/// -inf outside the shape-dependent support.
inline double gev_logpdf(double y, const GevParams& p) {
  validate(p);
  const double z = (y - p.location) / p.scale;
  if (std::abs(p.shape) < kGevGumbelLimit) return -std::log(p.scale) - z - std::exp(-z);
  const double t = 1.0 + p.shape * z;
  if (t <= 0.0) return -std::numeric_limits<double>::infinity();
  const double log_t = std::log(t);
  return -std::log(p.scale) - (1.0 + 1.0 / p.shape) * log_t - std::exp(-log_t / p.shape);
}

inline double gev_sample(const GevParams& p, RandomStream& rng) { return gev_quantile(rng.uniform(), p); }

// ---------------------------------------------------------------------------
// Prior kernels

struct NormalPrior {
  double mean;
  double sd;
};

inline double normal_logpdf(double x, double mean, double sd) {
  detail::require(sd > 0.0, "normal: sd must be positive");
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double normal_logpdf(double x, const NormalPrior& p) { return normal_logpdf(x, p.mean, p.sd); }

/// Inverse gamma with density proportional to x^(-shape-1) exp(-scale / x).
struct InverseGammaPrior {
  double shape;
  double scale;
};

inline double inverse_gamma_logpdf(double x, const InverseGammaPrior& p) {
  detail::require(p.shape > 0.0 && p.scale > 0.0, "inverse gamma: parameters must be positive");
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return p.shape * std::log(p.scale) - std::lgamma(p.shape) - (p.shape + 1.0) * std::log(x) - p.scale / x;
}

/// Finite only for shape > 1.
inline double inverse_gamma_mean(const InverseGammaPrior& p) { return p.scale / (p.shape - 1.0); }

/// Gamma with shape k and scale theta (mean k theta).
struct GammaPrior {
  double shape;
  double scale;
};

inline double gamma_logpdf(double x, const GammaPrior& p) {
  detail::require(p.shape > 0.0 && p.scale > 0.0, "gamma: parameters must be positive");
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return -std::lgamma(p.shape) - p.shape * std::log(p.scale) + (p.shape - 1.0) * std::log(x) - x / p.scale;
}

inline double gamma_sample(double shape, double scale, RandomStream& rng) {
  detail::require(shape > 0.0 && scale > 0.0, "gamma: parameters must be positive");
  return std::gamma_distribution<double>(shape, scale)(rng);
}

struct BetaPrior {
  double a;
  double b;
};

inline double beta_logpdf(double x, const BetaPrior& p) {
  detail::require(p.a > 0.0 && p.b > 0.0, "beta: parameters must be positive");
  if (x <= 0.0 || x >= 1.0) return -std::numeric_limits<double>::infinity();
  return std::lgamma(p.a + p.b) - std::lgamma(p.a) - std::lgamma(p.b) + (p.a - 1.0) * std::log(x) +
         (p.b - 1.0) * std::log1p(-x);
}

}  // namespace shmev
