#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace shmev::model {

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the analytic gradient against central differences with step h.
/// The error per coordinate is |a - n| / max(1, |a|, |n|).
template <class Model>
GradientCheck check_gradient(const Model& model, std::span<const double> x, double h = 1e-5) {
  std::vector<double> grad(x.size());
  model.log_density_gradient(x, grad);
  std::vector<double> probe(x.begin(), x.end());
  GradientCheck out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = model.log_density(probe);
    probe[i] = x[i] - h;
    const double down = model.log_density(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(grad[i] - numeric) / std::max({1.0, std::abs(grad[i]), std::abs(numeric)});
    if (!(err <= out.max_relative_error)) out = {err, i, grad[i], numeric};
  }
  return out;
}

}  // namespace shmev::model
