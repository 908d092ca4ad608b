#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shmev/csv.hpp"
#include "shmev/error.hpp"
#include "shmev/math.hpp"

// Out-of-sample accuracy of predicted block-maxima quantiles against test
// maxima y_j at their empirical non-exceedance probabilities p_j:
//
//   FSE   = mean_j sqrt( mean_b ((q_b(p_j) - y_j) / y_j)^2 )
//   b_q   = mean_j mean_b (q_b(p_j) - y_j) / y_j
//   dq90  = mean_j (q95(p_j) - q05(p_j))
//
// over the test years whose empirical return time exceeds a threshold.

namespace shmev::metrics {

struct ReturnTime {
  double prob;    // rank / (M_x + 1), average rank for ties
  double period;  // 1 / (1 - prob)
};

inline std::vector<ReturnTime> empirical_return_times(std::span<const double> maxima) {
  if (maxima.empty()) throw StructuralError("metrics: no test maxima");
  const std::size_t n = maxima.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return maxima[a] < maxima[b]; });
  std::vector<ReturnTime> out(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && maxima[order[j + 1]] == maxima[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const auto total = static_cast<double>(n + 1);
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = {rank / total, total / (total - rank)};
    i = j + 1;
  }
  return out;
}

struct SiteMetrics {
  std::optional<double> fse;
  std::optional<double> bias;
  std::optional<double> width;
  std::size_t m_T = 0;
  std::size_t M_x = 0;
  double threshold = 2.0;
};

/// Indices of test maxima with empirical return time strictly above `threshold`.
inline std::vector<std::size_t> qualifying(std::span<const ReturnTime> rt, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < rt.size(); ++j) {
    if (rt[j].period > threshold) out.push_back(j);
  }
  return out;
}

/// Metrics from per-draw quantiles: `quantiles[k][b]` is draw b's quantile at
/// the probability of the k-th qualifying maximum `observed[k]`.
inline SiteMetrics score(const std::vector<std::vector<double>>& quantiles, std::span<const double> observed,
                         std::size_t M_x, double threshold) {
  if (quantiles.size() != observed.size()) throw StructuralError("metrics: quantile and observation counts differ");
  SiteMetrics m;
  m.M_x = M_x;
  m.threshold = threshold;
  m.m_T = observed.size();
  if (m.m_T == 0) return m;
  double fse = 0.0, bias = 0.0, width = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double y = observed[k];
    if (!(y > 0.0)) throw DataError("metrics: qualifying test maximum must be positive");
    const auto& q = quantiles[k];
    if (q.empty()) throw StructuralError("metrics: no draws");
    double sq = 0.0, rel_sum = 0.0;
    for (double v : q) {
      const double rel = (v - y) / y;
      sq += rel * rel;
      rel_sum += rel;
    }
    const auto B = static_cast<double>(q.size());
    fse += std::sqrt(sq / B);
    bias += rel_sum / B;
    width += empirical_quantile(q, 0.95) - empirical_quantile(q, 0.05);
  }
  const auto mt = static_cast<double>(m.m_T);
  m.fse = fse / mt;
  m.bias = bias / mt;
  m.width = width / mt;
  return m;
}

/// Scores any ensemble exposing draw_quantiles(probs) against test maxima.
template <class Ensemble>
SiteMetrics evaluate_site(const Ensemble& ensemble, std::span<const double> test_maxima, double threshold = 2.0) {
  const auto rt = empirical_return_times(test_maxima);
  const auto idx = qualifying(rt, threshold);
  std::vector<double> probs, observed;
  for (std::size_t j : idx) {
    probs.push_back(rt[j].prob);
    observed.push_back(test_maxima[j]);
  }
  if (idx.empty()) return score({}, {}, test_maxima.size(), threshold);
  return score(ensemble.draw_quantiles(probs), observed, test_maxima.size(), threshold);
}

struct ReportRow {
  std::string site;
  std::string model;
  SiteMetrics metrics;
};

inline std::optional<double> median_of(const std::vector<ReportRow>& rows, const std::string& model,
                                       std::optional<double> SiteMetrics::*field) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.model == model && (r.metrics.*field)) v.push_back(*(r.metrics.*field));
  }
  if (v.empty()) return std::nullopt;
  return median(v);
}

/// Per-site rows followed by one `median` row per model. Absent metrics are
/// written as NA.
inline void write_report(const std::vector<ReportRow>& rows, const std::string& path) {
  auto out = csv::open_output(path);
  auto fmt = [](const std::optional<double>& v) { return v ? csv::format(*v) : std::string("NA"); };
  out << "site,model,fse,bias,width,m_T\n";
  std::vector<std::string> models;
  for (const auto& r : rows) {
    out << r.site << ',' << r.model << ',' << fmt(r.metrics.fse) << ',' << fmt(r.metrics.bias) << ','
        << fmt(r.metrics.width) << ',' << r.metrics.m_T << '\n';
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  for (const auto& m : models) {
    std::vector<double> mt;
    for (const auto& r : rows) {
      if (r.model == m) mt.push_back(static_cast<double>(r.metrics.m_T));
    }
    out << "median," << m << ',' << fmt(median_of(rows, m, &SiteMetrics::fse)) << ','
        << fmt(median_of(rows, m, &SiteMetrics::bias)) << ',' << fmt(median_of(rows, m, &SiteMetrics::width)) << ','
        << csv::format(median(mt)) << '\n';
  }
  csv::finish(out, path);
}

}  // namespace shmev::metrics
