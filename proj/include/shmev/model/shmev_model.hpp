#pragma once

#include <cmath>
#include <cstddef>
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

/// Index map of the unconstrained sHMEV parameter vector:
///
///   beta_gamma[0..P) beta_delta[0..P) beta_lambda[0..P)
///   log_sigma_gamma log_sigma_delta
///   log_gamma[s][j] (site-major, S*J) log_delta[s][j] (site-major, S*J)
///
/// with P = p + 1 coefficients including the intercept.
class ShmevLayout {
 public:
  ShmevLayout() = default;
  ShmevLayout(std::size_t n_coefficients, std::size_t n_sites, std::size_t n_blocks)
      : n_coef_(n_coefficients), n_sites_(n_sites), n_blocks_(n_blocks) {}

  [[nodiscard]] std::size_t n_coefficients() const { return n_coef_; }
  [[nodiscard]] std::size_t n_sites() const { return n_sites_; }
  [[nodiscard]] std::size_t n_blocks() const { return n_blocks_; }
  [[nodiscard]] std::size_t dim() const { return n_top_level() + 2 * n_sites_ * n_blocks_; }
  /// Regression coefficients plus the two latent scales.
  [[nodiscard]] std::size_t n_top_level() const { return 3 * n_coef_ + 2; }

  [[nodiscard]] std::size_t beta_gamma(std::size_t k) const { return k; }
  [[nodiscard]] std::size_t beta_delta(std::size_t k) const { return n_coef_ + k; }
  [[nodiscard]] std::size_t beta_lambda(std::size_t k) const { return 2 * n_coef_ + k; }
  [[nodiscard]] std::size_t log_sigma_gamma() const { return 3 * n_coef_; }
  [[nodiscard]] std::size_t log_sigma_delta() const { return 3 * n_coef_ + 1; }
  [[nodiscard]] std::size_t log_gamma(std::size_t s, std::size_t j) const { return n_top_level() + s * n_blocks_ + j; }
  [[nodiscard]] std::size_t log_delta(std::size_t s, std::size_t j) const {
    return n_top_level() + n_sites_ * n_blocks_ + s * n_blocks_ + j;
  }

  [[nodiscard]] std::vector<std::string> names(bool include_latent = true) const {
    std::vector<std::string> out;
    out.reserve(include_latent ? dim() : n_top_level());
    for (const char* group : {"beta_gamma", "beta_delta", "beta_lambda"}) {
      for (std::size_t k = 0; k < n_coef_; ++k) out.push_back(std::string(group) + "[" + std::to_string(k) + "]");
    }
    out.emplace_back("log_sigma_gamma");
    out.emplace_back("log_sigma_delta");
    if (!include_latent) return out;
    for (const char* group : {"log_gamma", "log_delta"}) {
      for (std::size_t s = 0; s < n_sites_; ++s) {
        for (std::size_t j = 0; j < n_blocks_; ++j) {
          out.push_back(std::string(group) + "[" + std::to_string(s) + "][" + std::to_string(j) + "]");
        }
      }
    }
    return out;
  }

  bool operator==(const ShmevLayout&) const = default;

 private:
  std::size_t n_coef_ = 0;
  std::size_t n_sites_ = 0;
  std::size_t n_blocks_ = 0;
};

/// Structured view of a parameter vector; latent matrices are site-major.
struct ShmevParams {
  std::vector<double> beta_gamma;
  std::vector<double> beta_delta;
  std::vector<double> beta_lambda;
  double log_sigma_gamma = 0.0;
  double log_sigma_delta = 0.0;
  std::vector<double> log_gamma;
  std::vector<double> log_delta;

  [[nodiscard]] std::vector<double> pack(const ShmevLayout& layout) const {
    const std::size_t latent = layout.n_sites() * layout.n_blocks();
    if (beta_gamma.size() != layout.n_coefficients() || beta_delta.size() != layout.n_coefficients() ||
        beta_lambda.size() != layout.n_coefficients() || log_gamma.size() != latent || log_delta.size() != latent) {
      throw StructuralError("ShmevParams::pack: dimensions do not match layout");
    }
    std::vector<double> x;
    x.reserve(layout.dim());
    for (const auto* v : {&beta_gamma, &beta_delta, &beta_lambda}) x.insert(x.end(), v->begin(), v->end());
    x.push_back(log_sigma_gamma);
    x.push_back(log_sigma_delta);
    x.insert(x.end(), log_gamma.begin(), log_gamma.end());
    x.insert(x.end(), log_delta.begin(), log_delta.end());
    return x;
  }

  static ShmevParams unpack(std::span<const double> x, const ShmevLayout& layout) {
    if (x.size() != layout.dim() && x.size() != layout.n_top_level()) {
      throw StructuralError("ShmevParams::unpack: vector length does not match layout");
    }
    const std::size_t P = layout.n_coefficients();
    ShmevParams p;
    p.beta_gamma.assign(x.begin(), x.begin() + P);
    p.beta_delta.assign(x.begin() + P, x.begin() + 2 * P);
    p.beta_lambda.assign(x.begin() + 2 * P, x.begin() + 3 * P);
    p.log_sigma_gamma = x[layout.log_sigma_gamma()];
    p.log_sigma_delta = x[layout.log_sigma_delta()];
    if (x.size() == layout.dim()) {
      const auto latent = static_cast<std::ptrdiff_t>(layout.n_sites() * layout.n_blocks());
      const auto first = x.begin() + static_cast<std::ptrdiff_t>(layout.n_top_level());
      p.log_gamma.assign(first, first + latent);
      p.log_delta.assign(first + latent, first + 2 * latent);
    }
    return p;
  }
};

struct ShmevPriorSpec {
  std::vector<NormalPrior> beta_gamma;
  std::vector<NormalPrior> beta_delta;
  std::vector<NormalPrior> beta_lambda;
  InverseGammaPrior sigma_gamma{3.0, 0.1};
  InverseGammaPrior sigma_delta{3.0, 5.0};

  void validate(std::size_t n_coefficients) const {
    for (const auto* group : {&beta_gamma, &beta_delta, &beta_lambda}) {
      if (group->size() != n_coefficients) {
        throw StructuralError("ShmevPriorSpec: expected " + std::to_string(n_coefficients) + " coefficient priors");
      }
      for (const auto& p : *group) {
        if (!(p.sd > 0.0) || !std::isfinite(p.mean)) throw DomainError("ShmevPriorSpec: normal sd must be positive");
      }
    }
    for (const auto& ig : {sigma_gamma, sigma_delta}) {
      if (!(ig.shape > 0.0 && ig.scale > 0.0)) throw DomainError("ShmevPriorSpec: inverse gamma must be positive");
    }
  }

  /// Weakly informative defaults for `n_coefficients` coefficients with the
  /// shape intercept centered on 2/3.
  static ShmevPriorSpec defaults(std::size_t n_coefficients) {
    ShmevPriorSpec s;
    s.beta_gamma.assign(n_coefficients, {0.0, 0.17});
    s.beta_delta.assign(n_coefficients, {0.0, 2.5});
    s.beta_lambda.assign(n_coefficients, {0.0, 0.25});
    s.beta_gamma[0] = {2.0 / 3.0, 0.17};
    s.beta_delta[0] = {10.0, 2.5};
    s.beta_lambda[0] = {-1.0, 0.5};
    s.sigma_gamma = {3.0, 2.0 * 0.05 * (2.0 / 3.0)};
    s.sigma_delta = {3.0, 2.0 * 0.25 * 10.0};
    return s;
  }
};

}  // namespace shmev::model

namespace shmev {

inline void to_json(nlohmann::json& j, const NormalPrior& p) { j = nlohmann::json{{"mean", p.mean}, {"sd", p.sd}}; }
inline void from_json(const nlohmann::json& j, NormalPrior& p) {
  j.at("mean").get_to(p.mean);
  j.at("sd").get_to(p.sd);
}
inline void to_json(nlohmann::json& j, const InverseGammaPrior& p) {
  j = nlohmann::json{{"shape", p.shape}, {"scale", p.scale}};
}
inline void from_json(const nlohmann::json& j, InverseGammaPrior& p) {
  j.at("shape").get_to(p.shape);
  j.at("scale").get_to(p.scale);
}
}  // namespace shmev

namespace shmev::model {

inline void to_json(nlohmann::json& j, const ShmevPriorSpec& s) {
  j = nlohmann::json{{"beta_gamma", s.beta_gamma}, {"beta_delta", s.beta_delta}, {"beta_lambda", s.beta_lambda},
                     {"sigma_gamma", s.sigma_gamma}, {"sigma_delta", s.sigma_delta}};
}
inline void from_json(const nlohmann::json& j, ShmevPriorSpec& s) {
  j.at("beta_gamma").get_to(s.beta_gamma);
  j.at("beta_delta").get_to(s.beta_delta);
  j.at("beta_lambda").get_to(s.beta_lambda);
  j.at("sigma_gamma").get_to(s.sigma_gamma);
  j.at("sigma_delta").get_to(s.sigma_delta);
}

/// Log-posterior of the spatial hierarchical model over the unconstrained
/// parameter vector of ShmevLayout:
///
///   x_ij(s) ~ Weibull(gamma_j(s), delta_j(s))
///   gamma_j(s) ~ Gumbel(z(s) beta_gamma, sigma_gamma)
///   delta_j(s) ~ Gumbel(z(s) beta_delta, sigma_delta)
///   n_j(s) ~ Binomial(N_t, logistic(z(s) beta_lambda))
///
/// with normal priors on every beta, inverse-gamma priors on both sigmas, and
/// the log-Jacobians of the log transforms. The Gumbel layer is evaluated
/// untruncated on the positive latent values.
class ShmevModel {
 public:
  struct Terms {
    double likelihood = 0.0;  // Weibull + binomial + Gumbel latent layer
    double prior = 0.0;       // normal and inverse-gamma priors
    double jacobian = 0.0;    // log transforms
    [[nodiscard]] double total() const { return likelihood + prior + jacobian; }
  };

  ShmevModel(const Dataset& data, ShmevPriorSpec prior)
      : layout_(data.n_coefficients(), data.n_sites(), data.n_blocks()),
        prior_(std::move(prior)),
        block_size_(data.block_size()) {
    prior_.validate(layout_.n_coefficients());
    const std::size_t S = data.n_sites();
    const std::size_t J = data.n_blocks();
    rows_.reserve(S * layout_.n_coefficients());
    for (const auto& site : data.sites()) rows_.insert(rows_.end(), site.row.begin(), site.row.end());
    offsets_.reserve(S * J + 1);
    offsets_.push_back(0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t j = 0; j < J; ++j) {
        const auto& rec = data.record(s, j);
        double total = 0.0;
        for (double x : rec.magnitudes) {
          log_x_.push_back(std::log(x));
          total += log_x_.back();
        }
        offsets_.push_back(log_x_.size());
        sum_log_x_.push_back(total);
        counts_.push_back(rec.count());
        log_choose_.push_back(log_choose(block_size_, rec.count()));
      }
    }
  }

  [[nodiscard]] std::size_t dim() const { return layout_.dim(); }
  [[nodiscard]] const ShmevLayout& layout() const { return layout_; }
  [[nodiscard]] const ShmevPriorSpec& prior() const { return prior_; }
  [[nodiscard]] std::vector<std::string> parameter_names() const { return layout_.names(); }

  [[nodiscard]] Terms terms(std::span<const double> x) const { return evaluate(x, {}); }

  [[nodiscard]] double log_density(std::span<const double> x) const { return finite_or_neg_inf(evaluate(x, {}).total()); }

  /// Log-posterior and its gradient; returns -inf (a rejection signal) when
  /// the value is not finite.
  double log_density_gradient(std::span<const double> x, std::span<double> grad) const {
    if (grad.size() != dim()) throw StructuralError("ShmevModel: gradient buffer has wrong length");
    return finite_or_neg_inf(evaluate(x, grad).total());
  }

  /// Prior means for the coefficients, inverse-gamma means for the scales,
  /// and each latent value at the log of its site's Gumbel mean.
  [[nodiscard]] std::vector<double> initial_point() const {
    std::vector<double> x(dim(), 0.0);
    const std::size_t P = layout_.n_coefficients();
    for (std::size_t k = 0; k < P; ++k) {
      x[layout_.beta_gamma(k)] = prior_.beta_gamma[k].mean;
      x[layout_.beta_delta(k)] = prior_.beta_delta[k].mean;
      x[layout_.beta_lambda(k)] = prior_.beta_lambda[k].mean;
    }
    const double sg = prior_mean_scale(prior_.sigma_gamma);
    const double sd = prior_mean_scale(prior_.sigma_delta);
    x[layout_.log_sigma_gamma()] = std::log(sg);
    x[layout_.log_sigma_delta()] = std::log(sd);
    for (std::size_t s = 0; s < layout_.n_sites(); ++s) {
      double mg = 0.0;
      double md = 0.0;
      for (std::size_t k = 0; k < P; ++k) {
        mg += rows_[s * P + k] * prior_.beta_gamma[k].mean;
        md += rows_[s * P + k] * prior_.beta_delta[k].mean;
      }
      for (std::size_t j = 0; j < layout_.n_blocks(); ++j) {
        x[layout_.log_gamma(s, j)] = std::log(std::max(mg + kEulerGamma * sg, 1e-3));
        x[layout_.log_delta(s, j)] = std::log(std::max(md + kEulerGamma * sd, 1e-3));
      }
    }
    return x;
  }

 private:
  static double finite_or_neg_inf(double v) {
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  }

  static double prior_mean_scale(const InverseGammaPrior& p) {
    return p.shape > 1.0 ? inverse_gamma_mean(p) : p.scale / (p.shape + 1.0);
  }

  Terms evaluate(std::span<const double> x, std::span<double> grad) const {
    if (x.size() != dim()) {
      throw StructuralError("ShmevModel: parameter vector has length " + std::to_string(x.size()) + ", expected " +
                            std::to_string(dim()));
    }
    const bool want_grad = !grad.empty();
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t P = layout_.n_coefficients();
    const std::size_t S = layout_.n_sites();
    const std::size_t J = layout_.n_blocks();
    const double log_sg = x[layout_.log_sigma_gamma()];
    const double log_sd = x[layout_.log_sigma_delta()];
    Terms t;

    for (std::size_t s = 0; s < S; ++s) {
      const double* z = &rows_[s * P];
      double mu_g = 0.0;
      double mu_d = 0.0;
      double eta = 0.0;
      for (std::size_t k = 0; k < P; ++k) {
        mu_g += z[k] * x[layout_.beta_gamma(k)];
        mu_d += z[k] * x[layout_.beta_delta(k)];
        eta += z[k] * x[layout_.beta_lambda(k)];
      }
      double d_mu_g = 0.0;
      double d_mu_d = 0.0;
      double d_eta = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        const std::size_t b = s * J + j;
        const std::size_t iu = layout_.log_gamma(s, j);
        const std::size_t iv = layout_.log_delta(s, j);
        const double u = x[iu];
        const double v = x[iv];
        const std::span<const double> lx(log_x_.data() + offsets_[b], offsets_[b + 1] - offsets_[b]);
        const auto w = weibull_block(lx, sum_log_x_[b], u, v);
        const auto gg = gumbel_latent(u, mu_g, log_sg);
        const auto gd = gumbel_latent(v, mu_d, log_sd);
        const auto bn = binomial_logit(counts_[b], block_size_, eta, log_choose_[b]);
        t.likelihood += w.value + gg.value + gd.value + bn.value;
        t.jacobian += u + v;
        if (want_grad) {
          grad[iu] = w.d_log_shape + gg.d_log_x + 1.0;
          grad[iv] = w.d_log_scale + gd.d_log_x + 1.0;
          d_mu_g += gg.d_location;
          d_mu_d += gd.d_location;
          d_eta += bn.d_logit;
          grad[layout_.log_sigma_gamma()] += gg.d_log_scale;
          grad[layout_.log_sigma_delta()] += gd.d_log_scale;
        }
      }
      if (want_grad) {
        for (std::size_t k = 0; k < P; ++k) {
          grad[layout_.beta_gamma(k)] += d_mu_g * z[k];
          grad[layout_.beta_delta(k)] += d_mu_d * z[k];
          grad[layout_.beta_lambda(k)] += d_eta * z[k];
        }
      }
    }

    for (std::size_t k = 0; k < P; ++k) {
      const std::pair<std::size_t, const NormalPrior*> groups[] = {{layout_.beta_gamma(k), &prior_.beta_gamma[k]},
                                                                   {layout_.beta_delta(k), &prior_.beta_delta[k]},
                                                                   {layout_.beta_lambda(k), &prior_.beta_lambda[k]}};
      for (const auto& [i, np] : groups) {
        t.prior += normal_logpdf(x[i], *np);
        if (want_grad) grad[i] -= (x[i] - np->mean) / (np->sd * np->sd);
      }
    }
    const std::pair<std::size_t, const InverseGammaPrior*> scales[] = {
        {layout_.log_sigma_gamma(), &prior_.sigma_gamma}, {layout_.log_sigma_delta(), &prior_.sigma_delta}};
    for (const auto& [i, ig] : scales) {
      const double sigma = std::exp(x[i]);
      t.prior += inverse_gamma_logpdf(sigma, *ig);
      t.jacobian += x[i];
      if (want_grad) grad[i] += -ig->shape + ig->scale / sigma;
    }
    return t;
  }

  ShmevLayout layout_;
  ShmevPriorSpec prior_;
  int block_size_;
  std::vector<double> rows_;  // S x P, row-major
  std::vector<double> log_x_;
  std::vector<std::size_t> offsets_;
  std::vector<double> sum_log_x_;
  std::vector<int> counts_;
  std::vector<double> log_choose_;
};

}  // namespace shmev::model
