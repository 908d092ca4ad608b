#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/distributions.hpp"
#include "shmev/error.hpp"
#include "shmev/math.hpp"

namespace shmev::model {

/// Priors of the Bayesian GEV benchmark.
struct GevPriorSpec {
  NormalPrior location{0.0, 1.0};
  GammaPrior scale{1.0, 1.0};
  NormalPrior shape{0.114, 0.125};

  /// Normal location prior at the sample mean with sd twice the sample sd;
  /// gamma scale prior with mean and sd both equal to the sample sd.
  static GevPriorSpec from_maxima(std::span<const double> maxima) {
    if (maxima.empty()) throw StructuralError("GevPriorSpec: no maxima");
    const double m = mean(maxima);
    double sd = std::sqrt(sample_variance(maxima));
    if (!(sd > 0.0)) sd = std::max(0.1 * std::abs(m), 1.0);
    GevPriorSpec p;
    p.location = {m, 2.0 * sd};
    p.scale = {1.0, sd};
    return p;
  }
};

inline void to_json(nlohmann::json& j, const GevPriorSpec& p) {
  j = nlohmann::json{{"location", {{"mean", p.location.mean}, {"sd", p.location.sd}}},
                     {"scale", {{"shape", p.scale.shape}, {"scale", p.scale.scale}}},
                     {"shape", {{"mean", p.shape.mean}, {"sd", p.shape.sd}}}};
}

namespace detail {

struct GevObsTerms {
  double value;
  double d_location;
  double d_log_scale;
  double d_shape;
};

/// Log-density of one maximum with derivatives; value is -inf outside the
/// support. The shape derivative switches to a series when |shape * z| is
/// small to avoid cancellation.
inline GevObsTerms gev_observation(double y, double location, double log_scale, double shape) {
  const double scale = std::exp(log_scale);
  const double z = (y - location) / scale;
  const double tz = shape * z;
  if (1.0 + tz <= 0.0) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return {-inf, 0.0, 0.0, 0.0};
  }
  double a;     // log(1 + tau z) / tau
  double da;    // d a / d tau
  if (std::abs(shape) < kGevGumbelLimit) {
    a = z;
    da = -0.5 * z * z;
  } else {
    a = std::log1p(tz) / shape;
    if (std::abs(tz) < 1e-4) {
      da = z * z * (-0.5 + tz * (2.0 / 3.0 - 0.75 * tz));
    } else {
      da = (tz / (1.0 + tz) - std::log1p(tz)) / (shape * shape);
    }
  }
  const double e = std::exp(-a);
  const double log_t = std::log1p(tz);
  const double value = -log_scale - log_t - a - e;
  const double dz = -(shape + 1.0 - e) / (1.0 + tz);  // d value / d z
  const double d_shape = -z / (1.0 + tz) - da * (1.0 - e);
  return {value, -dz / scale, -1.0 - z * dz, d_shape};
}

}  // namespace detail

/// Bayesian GEV over (location, log scale, shape).
class GevModel {
 public:
  GevModel(std::vector<double> maxima, GevPriorSpec prior) : maxima_(std::move(maxima)), prior_(prior) {
    if (maxima_.empty()) throw StructuralError("GevModel: no maxima");
  }

  [[nodiscard]] std::size_t dim() const { return 3; }
  [[nodiscard]] const GevPriorSpec& prior() const { return prior_; }
  [[nodiscard]] std::vector<std::string> parameter_names() const { return {"mu", "log_sigma", "tau"}; }

  [[nodiscard]] double log_density(std::span<const double> x) const { return evaluate(x, {}); }

  double log_density_gradient(std::span<const double> x, std::span<double> grad) const {
    if (grad.size() != 3) throw StructuralError("GevModel: gradient buffer has wrong length");
    return evaluate(x, grad);
  }

  [[nodiscard]] std::vector<double> initial_point() const {
    return {prior_.location.mean, std::log(prior_.scale.shape * prior_.scale.scale), prior_.shape.mean};
  }

  static GevParams to_params(std::span<const double> x) { return {x[0], std::exp(x[1]), x[2]}; }

 private:
  double evaluate(std::span<const double> x, std::span<double> grad) const {
    if (x.size() != 3) throw StructuralError("GevModel: parameter vector must have length 3");
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    const bool want_grad = !grad.empty();
    double g[3] = {0.0, 0.0, 0.0};
    double lp = 0.0;
    for (double y : maxima_) {
      const auto o = detail::gev_observation(y, x[0], x[1], x[2]);
      if (!std::isfinite(o.value)) return neg_inf;
      lp += o.value;
      g[0] += o.d_location;
      g[1] += o.d_log_scale;
      g[2] += o.d_shape;
    }
    const double scale = std::exp(x[1]);
    lp += normal_logpdf(x[0], prior_.location) + gamma_logpdf(scale, prior_.scale) + x[1] +
          normal_logpdf(x[2], prior_.shape);
    g[0] -= (x[0] - prior_.location.mean) / (prior_.location.sd * prior_.location.sd);
    g[1] += prior_.scale.shape - scale / prior_.scale.scale;
    g[2] -= (x[2] - prior_.shape.mean) / (prior_.shape.sd * prior_.shape.sd);
    if (want_grad) std::copy(std::begin(g), std::end(g), grad.begin());
    return std::isfinite(lp) ? lp : neg_inf;
  }

  std::vector<double> maxima_;
  GevPriorSpec prior_;
};

}  // namespace shmev::model
