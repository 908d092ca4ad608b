#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/dataset.hpp"
#include "shmev/distributions.hpp"
#include "shmev/error.hpp"
#include "shmev/math.hpp"
#include "shmev/model/kernels.hpp"

namespace shmev::model {

struct HmevPriorSpec {
  InverseGammaPrior mu_gamma{5.0, 4.0 * 0.7};
  InverseGammaPrior sigma_gamma{3.0, 2.0 * 0.05};
  InverseGammaPrior mu_delta{5.0, 4.0 * 10.0};
  InverseGammaPrior sigma_delta{3.0, 2.0 * 2.5};
  BetaPrior wet_prob{3.0, 7.0};

  /// Centers each inverse gamma on a method-of-moments estimate from the
  /// pooled single-site magnitudes (scales at 5% / 25% of their locations)
  /// and the beta prior on the observed wet-day fraction.
  static HmevPriorSpec from_blocks(std::span<const OrdinaryEventRecord> blocks, int block_size,
                                   double shape_estimate, double scale_estimate) {
    HmevPriorSpec p;
    auto centered = [](double target, double shape) { return InverseGammaPrior{shape, target * (shape - 1.0)}; };
    p.mu_gamma = centered(shape_estimate, 5.0);
    p.sigma_gamma = centered(0.05 * shape_estimate, 3.0);
    p.mu_delta = centered(scale_estimate, 5.0);
    p.sigma_delta = centered(0.25 * scale_estimate, 3.0);
    double events = 0.0;
    for (const auto& b : blocks) events += b.count();
    const double trials = static_cast<double>(block_size) * static_cast<double>(std::max<std::size_t>(blocks.size(), 1));
    const double rate = std::clamp(events / trials, 0.01, 0.99);
    constexpr double concentration = 10.0;
    p.wet_prob = {rate * concentration, (1.0 - rate) * concentration};
    return p;
  }
};

inline void to_json(nlohmann::json& j, const HmevPriorSpec& p) {
  auto ig = [](const InverseGammaPrior& g) { return nlohmann::json{{"shape", g.shape}, {"scale", g.scale}}; };
  j = nlohmann::json{{"mu_gamma", ig(p.mu_gamma)},
                     {"sigma_gamma", ig(p.sigma_gamma)},
                     {"mu_delta", ig(p.mu_delta)},
                     {"sigma_delta", ig(p.sigma_delta)},
                     {"wet_prob", {{"a", p.wet_prob.a}, {"b", p.wet_prob.b}}}};
}

/// Single-site hierarchical benchmark. Unconstrained vector:
///
///   logit_lambda log_mu_gamma log_sigma_gamma log_mu_delta log_sigma_delta
///   log_gamma[0..J) log_delta[0..J)
class HmevModel {
 public:
  static constexpr std::size_t kLogitLambda = 0;
  static constexpr std::size_t kLogMuGamma = 1;
  static constexpr std::size_t kLogSigmaGamma = 2;
  static constexpr std::size_t kLogMuDelta = 3;
  static constexpr std::size_t kLogSigmaDelta = 4;
  static constexpr std::size_t kTopLevel = 5;

  struct Terms {
    double likelihood = 0.0;
    double prior = 0.0;
    double jacobian = 0.0;
    [[nodiscard]] double total() const { return likelihood + prior + jacobian; }
  };

  HmevModel(std::vector<OrdinaryEventRecord> blocks, HmevPriorSpec prior, int block_size = kDefaultBlockSize)
      : prior_(prior), block_size_(block_size), n_blocks_(blocks.size()) {
    offsets_.push_back(0);
    for (const auto& b : blocks) {
      if (b.count() > block_size_) throw StructuralError("HmevModel: event count exceeds block size");
      double total = 0.0;
      for (double x : b.magnitudes) {
        if (!(x > 0.0)) throw StructuralError("HmevModel: magnitudes must be positive");
        log_x_.push_back(std::log(x));
        total += log_x_.back();
      }
      offsets_.push_back(log_x_.size());
      sum_log_x_.push_back(total);
      counts_.push_back(b.count());
      log_choose_.push_back(log_choose(block_size_, b.count()));
    }
  }

  [[nodiscard]] std::size_t dim() const { return kTopLevel + 2 * n_blocks_; }
  [[nodiscard]] std::size_t n_blocks() const { return n_blocks_; }
  [[nodiscard]] const HmevPriorSpec& prior() const { return prior_; }
  [[nodiscard]] std::size_t log_gamma(std::size_t j) const { return kTopLevel + j; }
  [[nodiscard]] std::size_t log_delta(std::size_t j) const { return kTopLevel + n_blocks_ + j; }

  [[nodiscard]] std::vector<std::string> parameter_names(bool include_latent = true) const {
    std::vector<std::string> out = {"logit_lambda", "log_mu_gamma", "log_sigma_gamma", "log_mu_delta",
                                    "log_sigma_delta"};
    if (!include_latent) return out;
    for (const char* group : {"log_gamma", "log_delta"}) {
      for (std::size_t j = 0; j < n_blocks_; ++j) out.push_back(std::string(group) + "[" + std::to_string(j) + "]");
    }
    return out;
  }

  [[nodiscard]] Terms terms(std::span<const double> x) const { return evaluate(x, {}); }

  [[nodiscard]] double log_density(std::span<const double> x) const { return finite_or_neg_inf(evaluate(x, {}).total()); }

  double log_density_gradient(std::span<const double> x, std::span<double> grad) const {
    if (grad.size() != dim()) throw StructuralError("HmevModel: gradient buffer has wrong length");
    return finite_or_neg_inf(evaluate(x, grad).total());
  }

  [[nodiscard]] std::vector<double> initial_point() const {
    std::vector<double> x(dim());
    x[kLogitLambda] = logit(prior_.wet_prob.a / (prior_.wet_prob.a + prior_.wet_prob.b));
    const double mg = inverse_gamma_mean(prior_.mu_gamma);
    const double sg = inverse_gamma_mean(prior_.sigma_gamma);
    const double md = inverse_gamma_mean(prior_.mu_delta);
    const double sd = inverse_gamma_mean(prior_.sigma_delta);
    x[kLogMuGamma] = std::log(mg);
    x[kLogSigmaGamma] = std::log(sg);
    x[kLogMuDelta] = std::log(md);
    x[kLogSigmaDelta] = std::log(sd);
    for (std::size_t j = 0; j < n_blocks_; ++j) {
      x[log_gamma(j)] = std::log(mg + kEulerGamma * sg);
      x[log_delta(j)] = std::log(md + kEulerGamma * sd);
    }
    return x;
  }

 private:
  static double finite_or_neg_inf(double v) {
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  }

  Terms evaluate(std::span<const double> x, std::span<double> grad) const {
    if (x.size() != dim()) throw StructuralError("HmevModel: parameter vector has wrong length");
    const bool want_grad = !grad.empty();
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    Terms t;
    const double eta = x[kLogitLambda];
    const double mu_g = std::exp(x[kLogMuGamma]);
    const double mu_d = std::exp(x[kLogMuDelta]);
    const double log_sg = x[kLogSigmaGamma];
    const double log_sd = x[kLogSigmaDelta];
    double d_mu_g = 0.0;
    double d_mu_d = 0.0;
    for (std::size_t j = 0; j < n_blocks_; ++j) {
      const double u = x[log_gamma(j)];
      const double v = x[log_delta(j)];
      const std::span<const double> lx(log_x_.data() + offsets_[j], offsets_[j + 1] - offsets_[j]);
      const auto w = weibull_block(lx, sum_log_x_[j], u, v);
      const auto gg = gumbel_latent(u, mu_g, log_sg);
      const auto gd = gumbel_latent(v, mu_d, log_sd);
      const auto bn = binomial_logit(counts_[j], block_size_, eta, log_choose_[j]);
      t.likelihood += w.value + gg.value + gd.value + bn.value;
      t.jacobian += u + v;
      if (want_grad) {
        grad[log_gamma(j)] = w.d_log_shape + gg.d_log_x + 1.0;
        grad[log_delta(j)] = w.d_log_scale + gd.d_log_x + 1.0;
        d_mu_g += gg.d_location;
        d_mu_d += gd.d_location;
        grad[kLogitLambda] += bn.d_logit;
        grad[kLogSigmaGamma] += gg.d_log_scale;
        grad[kLogSigmaDelta] += gd.d_log_scale;
      }
    }
    const std::pair<std::size_t, const InverseGammaPrior*> positives[] = {{kLogMuGamma, &prior_.mu_gamma},
                                                                          {kLogSigmaGamma, &prior_.sigma_gamma},
                                                                          {kLogMuDelta, &prior_.mu_delta},
                                                                          {kLogSigmaDelta, &prior_.sigma_delta}};
    for (const auto& [i, ig] : positives) {
      const double value = std::exp(x[i]);
      t.prior += inverse_gamma_logpdf(value, *ig);
      t.jacobian += x[i];
      if (want_grad) grad[i] += -ig->shape + ig->scale / value;
    }
    const double lambda = logistic(eta);
    t.prior += beta_logpdf(lambda, prior_.wet_prob);
    // log lambda + log(1 - lambda) for the logit transform
    t.jacobian += -log1p_exp(-eta) - log1p_exp(eta);
    if (want_grad) {
      grad[kLogMuGamma] += d_mu_g * mu_g;
      grad[kLogMuDelta] += d_mu_d * mu_d;
      // beta(a, b) plus Jacobian on the logit scale: a (1 - lambda) - b lambda
      grad[kLogitLambda] += prior_.wet_prob.a * (1.0 - lambda) - prior_.wet_prob.b * lambda;
    }
    return t;
  }

  HmevPriorSpec prior_;
  int block_size_;
  std::size_t n_blocks_;
  std::vector<double> log_x_;
  std::vector<std::size_t> offsets_;
  std::vector<double> sum_log_x_;
  std::vector<int> counts_;
  std::vector<double> log_choose_;
};

}  // namespace shmev::model
