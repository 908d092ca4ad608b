#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "shmev/error.hpp"
#include "shmev/sampler/draws.hpp"

namespace shmev::sampler {

struct ParameterDiagnostic {
  std::optional<double> rhat;  // absent for a single chain
  double ess = 0.0;            // NaN when degenerate
  bool degenerate = false;     // zero within-chain variance
};

namespace detail {

struct ChainMoments {
  double mean;
  double var;  // n - 1 denominator
};

inline ChainMoments moments(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, ss / (n - 1.0)};
}

/// Potential scale reduction over the given (already split) chains.
inline double psrf(const std::vector<std::span<const double>>& chains, bool& degenerate) {
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().size());
  double w = 0.0;
  double grand = 0.0;
  std::vector<double> means;
  for (const auto& c : chains) {
    const auto mo = moments(c);
    w += mo.var;
    grand += mo.mean;
    means.push_back(mo.mean);
  }
  w /= m;
  grand /= m;
  double b_over_n = 0.0;
  for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= (m - 1.0);
  degenerate = !(w > 0.0);
  if (degenerate) return b_over_n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

/// Autocorrelation-based effective sample size with Geyer's initial
/// monotone sequence truncation; lags are computed on demand.
inline double effective_sample_size(const std::vector<std::span<const double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m);
  double mean_var = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    const auto mo = moments(chains[c]);
    means[c] = mo.mean;
    mean_var += mo.var;
  }
  mean_var /= static_cast<double>(m);
  double var_plus = mean_var * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
  if (m > 1) {
    double grand = 0.0;
    for (double mu : means) grand += mu;
    grand /= static_cast<double>(m);
    double bv = 0.0;
    for (double mu : means) bv += (mu - grand) * (mu - grand);
    var_plus += bv / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return std::nan("");

  auto mean_autocov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - means[c]) * (x[i + lag] - means[c]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_autocov(lag)) / var_plus; };

  std::vector<double> r(n + 2, 0.0);
  double even = 1.0;
  double odd = rho(1);
  r[0] = even;
  r[1] = odd;
  std::size_t s = 1;
  while (s + 4 < n && even + odd > 0.0) {
    even = rho(s + 1);
    odd = rho(s + 2);
    if (even + odd >= 0.0) {
      r[s + 1] = even;
      r[s + 2] = odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  if (even > 0.0) r[max_s + 1] = even;
  for (std::size_t k = 1; k + 3 <= max_s; k += 2) {
    if (r[k + 1] + r[k + 2] > r[k - 1] + r[k]) {
      r[k + 1] = 0.5 * (r[k - 1] + r[k]);
      r[k + 2] = r[k + 1];
    }
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < max_s; ++k) sum += r[k];
  const double tau = -1.0 + 2.0 * sum + r[max_s + 1];
  const double total = static_cast<double>(m * n);
  return std::min(total / tau, total * std::log10(total));
}

}  // namespace detail

/// Split-chain R-hat and effective sample size of one parameter given its
/// per-chain sequences.
inline ParameterDiagnostic diagnose_parameter(const std::vector<std::span<const double>>& chains) {
  if (chains.empty()) throw StructuralError("diagnostics: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw StructuralError("diagnostics: chains must have equal length");
  }
  if (n < 4) throw StructuralError("diagnostics: need at least 4 draws per chain");
  ParameterDiagnostic d;
  bool degenerate = false;
  if (chains.size() >= 2) {
    const std::size_t half = n / 2;
    std::vector<std::span<const double>> split;
    for (const auto& c : chains) {
      split.push_back(c.subspan(0, half));
      split.push_back(c.subspan(n - half, half));
    }
    d.rhat = detail::psrf(split, degenerate);
  } else {
    degenerate = !(detail::moments(chains.front()).var > 0.0);
  }
  d.degenerate = degenerate;
  d.ess = degenerate ? std::nan("") : detail::effective_sample_size(chains);
  return d;
}

inline std::vector<ParameterDiagnostic> rhat_ess(const PosteriorDraws& draws) {
  if (draws.draws_per_chain < 4) throw StructuralError("diagnostics: need at least 4 draws per chain");
  std::vector<ParameterDiagnostic> out;
  out.reserve(draws.dim());
  std::vector<double> buffer(draws.size());
  for (std::size_t p = 0; p < draws.dim(); ++p) {
    for (std::size_t r = 0; r < draws.size(); ++r) buffer[r] = draws.at(r, p);
    std::vector<std::span<const double>> chains;
    for (std::size_t c = 0; c < draws.n_chains; ++c) {
      chains.emplace_back(buffer.data() + c * draws.draws_per_chain, draws.draws_per_chain);
    }
    out.push_back(diagnose_parameter(chains));
  }
  return out;
}

}  // namespace shmev::sampler
