#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "shmev/error.hpp"
#include "shmev/random.hpp"
#include "shmev/sampler/draws.hpp"

namespace shmev::sampler {

/// A differentiable log-density: `log_density_gradient` fills the gradient
/// and returns the value, or -inf / NaN for points that must be rejected.
template <class M>
concept LogDensityModel = requires(const M& m, std::span<const double> x, std::span<double> g) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.log_density_gradient(x, g) } -> std::convertible_to<double>;
};

struct SamplerConfig {
  int n_chains = 4;
  int n_iterations = 2000;  // per chain, warmup included
  double warmup_fraction = 0.5;
  int leapfrog_steps = 32;
  double step_jitter = 0.2;  // leapfrog count drawn uniformly in steps * (1 +- jitter)
  double target_accept = 0.8;
  double max_energy_error = 1000.0;
  std::uint64_t seed = 20240501;
  int n_threads = 0;  // 0: one worker per chain up to hardware concurrency

  void validate() const {
    if (n_chains < 1) throw StructuralError("sampler: n_chains must be >= 1");
    if (n_iterations < 2) throw StructuralError("sampler: n_iterations must be >= 2");
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
      throw StructuralError("sampler: warmup fraction must lie in (0, 1)");
    }
    if (leapfrog_steps < 1) throw StructuralError("sampler: leapfrog steps must be >= 1");
    if (!(step_jitter >= 0.0 && step_jitter < 1.0)) throw StructuralError("sampler: step jitter must lie in [0, 1)");
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw StructuralError("sampler: target acceptance must lie in (0, 1)");
    }
    if (n_threads < 0) throw StructuralError("sampler: n_threads must be >= 0");
  }

  [[nodiscard]] int n_warmup() const {
    return static_cast<int>(std::lround(static_cast<double>(n_iterations) * warmup_fraction));
  }
  [[nodiscard]] int n_retained() const { return n_iterations - n_warmup(); }
};

/// Phase-space state of one trajectory point.
struct PhasePoint {
  std::vector<double> position;
  std::vector<double> momentum;
  std::vector<double> gradient;
  double log_density = 0.0;
};

inline double kinetic_energy(std::span<const double> momentum, std::span<const double> inv_metric) {
  double k = 0.0;
  for (std::size_t i = 0; i < momentum.size(); ++i) k += momentum[i] * momentum[i] * inv_metric[i];
  return 0.5 * k;
}

inline double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  return -z.log_density + kinetic_energy(z.momentum, inv_metric);
}

/// `steps` velocity-Verlet steps of size `step_size` under a diagonal metric.
/// Stops early and returns false when the log-density turns non-finite.
template <LogDensityModel Model>
bool leapfrog(const Model& model, PhasePoint& z, double step_size, int steps, std::span<const double> inv_metric) {
  const std::size_t d = z.position.size();
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < d; ++i) z.momentum[i] += 0.5 * step_size * z.gradient[i];
    for (std::size_t i = 0; i < d; ++i) z.position[i] += step_size * inv_metric[i] * z.momentum[i];
    z.log_density = model.log_density_gradient(z.position, z.gradient);
    if (!std::isfinite(z.log_density)) return false;
    for (std::size_t i = 0; i < d; ++i) z.momentum[i] += 0.5 * step_size * z.gradient[i];
  }
  return true;
}

namespace detail {

/// Nesterov dual averaging of log step size toward a target acceptance rate.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double target) : target_(target) {}

  void restart(double step_size) {
    mu_ = std::log(10.0 * step_size);
    h_bar_ = 0.0;
    log_bar_ = 0.0;
    count_ = 0;
  }

  double update(double accept) {
    ++count_;
    const double t = static_cast<double>(count_);
    const double eta = 1.0 / (t + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept);
    const double log_step = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double w = std::pow(t, -kKappa);
    log_bar_ = w * log_step + (1.0 - w) * log_bar_;
    return std::exp(log_step);
  }

  [[nodiscard]] double final_step_size() const { return std::exp(log_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double target_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_bar_ = 0.0;
  long count_ = 0;
};

/// Running per-coordinate variance (Welford).
class VarianceAccumulator {
 public:
  explicit VarianceAccumulator(std::size_t d) : mean_(d, 0.0), m2_(d, 0.0) {}
  void add(std::span<const double> x) {
    ++n_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }
  /// Variance shrunk toward 1e-3 as in common practice for small windows.
  [[nodiscard]] std::vector<double> regularized() const {
    const auto n = static_cast<double>(n_);
    std::vector<double> v(mean_.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double var = m2_[i] / (n - 1.0);
      v[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
    }
    return v;
  }
  void reset() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Windowed warmup schedule: a fast initial buffer, doubling slow windows
/// that estimate the metric, and a fast terminal buffer.
class WarmupSchedule {
 public:
  explicit WarmupSchedule(int n_warmup) : n_warmup_(n_warmup) {
    int init = 75;
    int term = 50;
    int base = 25;
    if (n_warmup < 20) {
      adapt_metric_ = false;
      return;
    }
    if (init + term + base > n_warmup) {
      init = static_cast<int>(0.15 * n_warmup);
      term = static_cast<int>(0.1 * n_warmup);
      base = n_warmup - init - term;
    }
    int start = init;
    int size = base;
    const int slow_end = n_warmup - term;
    while (start < slow_end) {
      int end = start + size;
      if (end + 2 * size > slow_end) end = slow_end;
      window_ends_.push_back(end);
      starts_.push_back(start);
      start = end;
      size *= 2;
    }
  }

  [[nodiscard]] bool in_slow_window(int it) const {
    if (!adapt_metric_) return false;
    return !starts_.empty() && it >= starts_.front() && it < window_ends_.back();
  }
  [[nodiscard]] bool window_closes(int it) const {
    if (!adapt_metric_) return false;
    return std::find(window_ends_.begin(), window_ends_.end(), it + 1) != window_ends_.end();
  }

 private:
  int n_warmup_;
  bool adapt_metric_ = true;
  std::vector<int> starts_;
  std::vector<int> window_ends_;
};

template <LogDensityModel Model>
double find_reasonable_step_size(const Model& model, const PhasePoint& start, double step_size,
                                 std::span<const double> inv_metric, RandomStream& rng) {
  PhasePoint z = start;
  auto trial = [&](double eps) {
    z = start;
    for (std::size_t i = 0; i < z.momentum.size(); ++i) z.momentum[i] = rng.normal() / std::sqrt(inv_metric[i]);
    const double h0 = hamiltonian(z, inv_metric);
    if (!leapfrog(model, z, eps, 1, inv_metric)) return -std::numeric_limits<double>::infinity();
    const double h1 = hamiltonian(z, inv_metric);
    return std::isfinite(h1) ? h0 - h1 : -std::numeric_limits<double>::infinity();
  };
  double log_ratio = trial(step_size);
  const double direction = log_ratio > std::log(0.8) ? 1.0 : -1.0;
  for (int k = 0; k < 100; ++k) {
    const double next = direction > 0 ? 2.0 * step_size : 0.5 * step_size;
    log_ratio = trial(next);
    const bool crossed = direction > 0 ? !(log_ratio > std::log(0.8)) : log_ratio > std::log(0.8);
    if (crossed) return direction > 0 ? step_size : next;
    step_size = next;
    if (step_size < 1e-12 || step_size > 1e6) break;
  }
  return step_size;
}

struct ChainResult {
  std::vector<double> draws;  // n_retained x dim
  ChainStats stats;
};

template <LogDensityModel Model>
ChainResult run_chain(const Model& model, const SamplerConfig& cfg, std::span<const double> init, int chain) {
  const std::size_t d = model.dim();
  RandomStream rng(cfg.seed, {0x68'6d'63ULL, static_cast<std::uint64_t>(chain)});
  PhasePoint z;
  z.position.assign(init.begin(), init.end());
  z.momentum.assign(d, 0.0);
  z.gradient.assign(d, 0.0);
  z.log_density = model.log_density_gradient(z.position, z.gradient);
  if (!std::isfinite(z.log_density)) {
    throw NumericError("hmc: chain " + std::to_string(chain) + " initial point has non-finite log density");
  }

  std::vector<double> inv_metric(d, 1.0);
  const int n_warmup = cfg.n_warmup();
  StepSizeAdapter adapter(cfg.target_accept);
  WarmupSchedule schedule(n_warmup);
  VarianceAccumulator window(d);
  double step_size = find_reasonable_step_size(model, z, 1.0, inv_metric, rng);
  adapter.restart(step_size);

  ChainResult out;
  out.draws.reserve(static_cast<std::size_t>(cfg.n_retained()) * d);
  double accept_sum = 0.0;
  PhasePoint proposal;

  for (int it = 0; it < cfg.n_iterations; ++it) {
    const bool warmup = it < n_warmup;
    const double jitter = cfg.step_jitter * (2.0 * rng.uniform() - 1.0);
    const int steps = std::max(1, static_cast<int>(std::lround(cfg.leapfrog_steps * (1.0 + jitter))));
    for (std::size_t i = 0; i < d; ++i) z.momentum[i] = rng.normal() / std::sqrt(inv_metric[i]);
    const double h0 = hamiltonian(z, inv_metric);
    proposal = z;
    const bool finite = leapfrog(model, proposal, step_size, steps, inv_metric);
    const double h1 = finite ? hamiltonian(proposal, inv_metric) : std::numeric_limits<double>::infinity();
    const double energy_error = h1 - h0;
    const bool divergent = !std::isfinite(energy_error) || energy_error > cfg.max_energy_error;
    const double accept = divergent ? 0.0 : std::min(1.0, std::exp(-energy_error));
    if (!divergent && rng.uniform() < accept) std::swap(z, proposal);

    if (warmup) {
      if (divergent) ++out.stats.warmup_divergences;
      step_size = adapter.update(accept);
      if (schedule.in_slow_window(it)) window.add(z.position);
      if (schedule.window_closes(it)) {
        inv_metric = window.regularized();
        window.reset();
        step_size = find_reasonable_step_size(model, z, step_size, inv_metric, rng);
        adapter.restart(step_size);
      }
      if (it + 1 == n_warmup) {
        if (out.stats.warmup_divergences == static_cast<std::size_t>(n_warmup)) {
          throw NumericError("hmc: chain " + std::to_string(chain) + " diverged on every warmup iteration");
        }
        step_size = adapter.final_step_size();
      }
    } else {
      if (divergent) ++out.stats.divergences;
      accept_sum += accept;
      out.draws.insert(out.draws.end(), z.position.begin(), z.position.end());
    }
  }
  out.stats.mean_accept = accept_sum / cfg.n_retained();
  out.stats.step_size = step_size;
  out.stats.inv_metric = std::move(inv_metric);
  return out;
}

}  // namespace detail

/// Multi-chain HMC with a fixed, jittered number of leapfrog steps, dual
/// averaging step-size adaptation and a diagonal metric estimated during
/// warmup. Chain c uses its own stream derived from (seed, c), so draws do
/// not depend on the number of worker threads.
template <LogDensityModel Model>
PosteriorDraws run_hmc(const Model& model, const SamplerConfig& cfg, const std::vector<std::vector<double>>& inits,
                       std::vector<std::string> names = {}) {
  cfg.validate();
  if (inits.size() != static_cast<std::size_t>(cfg.n_chains)) {
    throw StructuralError("hmc: expected one initial point per chain");
  }
  for (const auto& x : inits) {
    if (x.size() != model.dim()) throw StructuralError("hmc: initial point dimension does not match the target");
  }
  if (names.empty()) {
    for (std::size_t i = 0; i < model.dim(); ++i) names.push_back("x[" + std::to_string(i) + "]");
  }
  if (names.size() != model.dim()) throw StructuralError("hmc: parameter names do not match the target");

  const auto n_chains = static_cast<std::size_t>(cfg.n_chains);
  std::vector<detail::ChainResult> results(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  auto work = [&](std::size_t c) {
    try {
      results[c] = detail::run_chain(model, cfg, inits[c], static_cast<int>(c));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  std::size_t workers = cfg.n_threads > 0 ? static_cast<std::size_t>(cfg.n_threads)
                                          : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, n_chains);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chains; ++c) work(c);
  } else {
    for (std::size_t first = 0; first < n_chains; first += workers) {
      std::vector<std::thread> pool;
      for (std::size_t c = first; c < std::min(n_chains, first + workers); ++c) pool.emplace_back(work, c);
      for (auto& t : pool) t.join();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorDraws out;
  out.names = std::move(names);
  out.n_chains = n_chains;
  out.draws_per_chain = static_cast<std::size_t>(cfg.n_retained());
  out.values.reserve(out.size() * model.dim());
  for (auto& r : results) {
    out.values.insert(out.values.end(), r.draws.begin(), r.draws.end());
    out.stats.push_back(std::move(r.stats));
  }
  return out;
}

/// Initial points: `center` plus independent normal(0, 0.1) perturbations,
/// distinct per chain.
inline std::vector<std::vector<double>> perturbed_inits(std::span<const double> center, int n_chains,
                                                        std::uint64_t seed) {
  std::vector<std::vector<double>> inits;
  for (int c = 0; c < n_chains; ++c) {
    RandomStream rng(seed, {0x696e6974ULL, static_cast<std::uint64_t>(c)});
    std::vector<double> x(center.begin(), center.end());
    for (double& v : x) v += 0.1 * rng.normal();
    inits.push_back(std::move(x));
  }
  return inits;
}

}  // namespace shmev::sampler
