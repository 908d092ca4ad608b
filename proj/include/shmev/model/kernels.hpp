#pragma once

#include <cmath>
#include <span>

// Per-block building blocks shared by the spatial and single-site models.
// Latent Weibull parameters are handled on the log scale: u = log(shape),
// v = log(scale).

namespace shmev::model {

struct WeibullBlockTerms {
  double value;
  double d_log_shape;
  double d_log_scale;
};

/// Sum of Weibull log-densities of one block's magnitudes, given their logs.
inline WeibullBlockTerms weibull_block(std::span<const double> log_x, double sum_log_x, double log_shape,
                                       double log_scale) {
  const double shape = std::exp(log_shape);
  const auto n = static_cast<double>(log_x.size());
  double power_sum = 0.0;     // sum (x / scale)^shape
  double weighted_sum = 0.0;  // sum log(x / scale) (x / scale)^shape
  for (double lx : log_x) {
    const double d = lx - log_scale;
    const double w = std::exp(shape * d);
    power_sum += w;
    weighted_sum += d * w;
  }
  return {n * (log_shape - shape * log_scale) + (shape - 1.0) * sum_log_x - power_sum,
          n - n * shape * log_scale + shape * sum_log_x - shape * weighted_sum, shape * (power_sum - n)};
}

struct GumbelLatentTerms {
  double value;
  double d_log_x;
  double d_location;
  double d_log_scale;
};

/// Gumbel log-density of x = exp(log_x); derivatives with respect to log x,
/// the location and the log scale.
inline GumbelLatentTerms gumbel_latent(double log_x, double location, double log_scale) {
  const double x = std::exp(log_x);
  const double scale = std::exp(log_scale);
  const double z = (x - location) / scale;
  const double e = std::exp(-z);
  const double dz = e - 1.0;  // d value / d z
  return {-log_scale - z - e, x * dz / scale, -dz / scale, -1.0 - z * dz};
}

struct BinomialTerms {
  double value;
  double d_logit;
};

/// Binomial log-pmf of `count` successes in `trials` at logit-probability eta;
/// `log_choose` is the precomputed binomial coefficient.
inline BinomialTerms binomial_logit(int count, int trials, double eta, double log_choose) {
  const double log_p = -(eta > 0 ? std::log1p(std::exp(-eta)) : -eta + std::log1p(std::exp(eta)));
  const double log_q = log_p - eta;
  const double p = std::exp(log_p);
  return {log_choose + count * log_p + (trials - count) * log_q, count - trials * p};
}

}  // namespace shmev::model
