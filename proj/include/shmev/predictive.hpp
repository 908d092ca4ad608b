#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/csv.hpp"
#include "shmev/dataset.hpp"
#include "shmev/distributions.hpp"
#include "shmev/error.hpp"
#include "shmev/math.hpp"
#include "shmev/model/hmev_model.hpp"
#include "shmev/model/shmev_model.hpp"
#include "shmev/random.hpp"
#include "shmev/sampler/draws.hpp"

// Posterior-predictive distribution of block maxima. For draw b the cdf is
//
//   zeta_b(y) = (1 / M_g) sum_j F(y; gamma_j, delta_j)^{n_j}
//
// over M_g simulated future blocks, and the pooled cdf averages zeta_b over
// the draws.

namespace shmev::predictive {

struct PredictiveConfig {
  int n_future_blocks = 100;  // M_g
  int block_size = kDefaultBlockSize;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_future_blocks < 1) throw StructuralError("predictive: M_g must be >= 1");
    if (block_size < 1) throw StructuralError("predictive: block size must be >= 1");
  }
};

/// Latent-layer parameters of one posterior draw at one location.
struct LayerDraw {
  double shape_location;
  double shape_scale;
  double scale_location;
  double scale_scale;
  double wet_prob;
};

/// Layer draws of the spatial model at covariate row `row` (intercept first).
inline std::vector<LayerDraw> shmev_layer_draws(const sampler::PosteriorDraws& draws, const model::ShmevLayout& layout,
                                                std::span<const double> row) {
  const std::size_t P = layout.n_coefficients();
  if (row.size() != P) {
    throw StructuralError("predictive: covariate row has " + std::to_string(row.size()) + " entries, expected " +
                          std::to_string(P));
  }
  if (draws.dim() < layout.n_top_level()) throw StructuralError("predictive: draws lack the top-level parameters");
  const auto names = layout.names(false);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (draws.names[i] != names[i]) throw StructuralError("predictive: draws do not follow the sHMEV layout");
  }
  std::vector<LayerDraw> out(draws.size());
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const auto x = draws.row(r);
    double mg = 0.0, md = 0.0, eta = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
      mg += row[k] * x[layout.beta_gamma(k)];
      md += row[k] * x[layout.beta_delta(k)];
      eta += row[k] * x[layout.beta_lambda(k)];
    }
    out[r] = {mg, std::exp(x[layout.log_sigma_gamma()]), md, std::exp(x[layout.log_sigma_delta()]), logistic(eta)};
  }
  return out;
}

/// Layer draws of a single-site hierarchical fit.
inline std::vector<LayerDraw> hmev_layer_draws(const sampler::PosteriorDraws& draws) {
  using M = model::HmevModel;
  if (draws.dim() < M::kTopLevel || draws.names[M::kLogitLambda] != "logit_lambda") {
    throw StructuralError("predictive: draws do not follow the HMEV layout");
  }
  std::vector<LayerDraw> out(draws.size());
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const auto x = draws.row(r);
    out[r] = {std::exp(x[M::kLogMuGamma]), std::exp(x[M::kLogSigmaGamma]), std::exp(x[M::kLogMuDelta]),
              std::exp(x[M::kLogSigmaDelta]), logistic(x[M::kLogitLambda])};
  }
  return out;
}

/// Stream key of a covariate row, so equal rows share simulated blocks.
inline std::uint64_t row_key(std::span<const double> row) {
  std::uint64_t h = 0x726f77ULL;
  for (double v : row) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v));
  return h;
}

struct QuantileSummary {
  double mean;
  double q05;
  double q95;
};

/// Simulated future blocks for every draw: the Monte Carlo representation of
/// the per-draw maxima cdf.
class MaximaEnsemble {
 public:
  struct Block {
    double shape;
    double log_scale;
    int n;
  };

  MaximaEnsemble() = default;

  /// Draw b uses the stream (seed, key, b).
  static MaximaEnsemble simulate(std::span<const LayerDraw> draws, const PredictiveConfig& cfg, std::uint64_t key) {
    cfg.validate();
    if (draws.empty()) throw StructuralError("predictive: no posterior draws");
    MaximaEnsemble e;
    e.m_ = static_cast<std::size_t>(cfg.n_future_blocks);
    e.blocks_.reserve(draws.size() * e.m_);
    for (std::size_t b = 0; b < draws.size(); ++b) {
      RandomStream rng(cfg.seed, {key, b});
      const auto& d = draws[b];
      for (std::size_t j = 0; j < e.m_; ++j) {
        const double g = gumbel_sample_positive({d.shape_location, d.shape_scale}, rng);
        const double s = gumbel_sample_positive({d.scale_location, d.scale_scale}, rng);
        const int n = binomial_sample({cfg.block_size, d.wet_prob}, rng);
        if (n == 0) ++e.empty_;
        e.blocks_.push_back({g, std::log(s), n});
      }
    }
    return e;
  }

  /// Ensemble whose blocks are given directly, `blocks_per_draw` per draw.
  static MaximaEnsemble from_blocks(std::vector<Block> blocks, std::size_t blocks_per_draw) {
    if (blocks_per_draw == 0 || blocks.empty() || blocks.size() % blocks_per_draw != 0) {
      throw StructuralError("predictive: block count is not a multiple of blocks per draw");
    }
    MaximaEnsemble e;
    e.m_ = blocks_per_draw;
    for (const auto& b : blocks) {
      if (!(b.shape > 0.0) || !std::isfinite(b.log_scale) || b.n < 0) {
        throw DomainError("predictive: invalid block parameters");
      }
      if (b.n == 0) ++e.empty_;
    }
    e.blocks_ = std::move(blocks);
    return e;
  }

  [[nodiscard]] std::size_t n_draws() const { return m_ == 0 ? 0 : blocks_.size() / m_; }
  [[nodiscard]] std::size_t blocks_per_draw() const { return m_; }
  /// Simulated blocks without events; each contributes F^0 = 1.
  [[nodiscard]] std::size_t empty_blocks() const { return empty_; }
  [[nodiscard]] std::span<const Block> blocks(std::size_t b) const { return {blocks_.data() + b * m_, m_}; }

  [[nodiscard]] double draw_cdf(std::size_t b, double y) const {
    if (!(y > 0.0)) return static_cast<double>(count_empty(b)) / static_cast<double>(m_);
    return eval(b, std::log(y)).cdf;
  }

  /// Solves zeta_b(y) = prob to |zeta_b(y) - prob| < 1e-6 by Newton steps in
  /// log y safeguarded by bisection. `lower` is a known point with
  /// zeta_b(lower) <= prob (0 when unknown). Returns 0 when the empty-block
  /// mass alone reaches prob.
  [[nodiscard]] double draw_quantile(std::size_t b, double prob, double lower = 0.0, double guess = 0.0) const {
    if (!(prob > 0.0 && prob < 1.0)) throw DomainError("predictive: probability must lie in (0, 1)");
    constexpr double tol = 1e-6;
    if (static_cast<double>(count_empty(b)) / static_cast<double>(m_) >= prob) return 0.0;
    // Bracket [lo, hi] in log y with zeta(lo) < prob <= zeta(hi).
    double t = std::log(guess > 0.0 ? guess : typical_maximum(b, prob));
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    if (lower > 0.0) {
      const auto e = eval(b, std::log(lower));
      if (std::abs(e.cdf - prob) < tol) return lower;
      if (e.cdf < prob) lo = std::log(lower);
      t = std::max(t, std::log(lower));
    }
    for (int it = 0; it < 400; ++it) {
      const auto e = eval(b, t);
      const double r = e.cdf - prob;
      if (std::abs(r) < tol) return std::exp(t);
      if (r < 0.0) {
        lo = t;
      } else {
        hi = t;
      }
      double next = t - r / e.d_log_y;
      if (!std::isfinite(next) || next <= lo || next >= hi) {
        if (std::isinf(hi)) {
          next = t + 1.0;
        } else if (std::isinf(lo)) {
          next = t - 1.0;
        } else {
          next = 0.5 * (lo + hi);
        }
      }
      if (std::isfinite(lo) && std::isfinite(hi) && hi - lo < 1e-14 * std::max(1.0, std::abs(hi))) {
        return std::exp(hi);
      }
      if (next > 700.0 || next < -700.0) break;
      t = next;
    }
    throw NumericError("predictive: quantile at probability " + std::to_string(prob) + " did not converge");
  }

  /// Per-draw quantiles for each probability; result[k][b]. Probabilities are
  /// solved in increasing order, so each draw's quantiles are nondecreasing.
  [[nodiscard]] std::vector<std::vector<double>> draw_quantiles(std::span<const double> probs) const {
    std::vector<std::size_t> order(probs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return probs[a] < probs[c]; });
    std::vector<std::vector<double>> out(probs.size(), std::vector<double>(n_draws()));
    for (std::size_t b = 0; b < n_draws(); ++b) {
      double lower = 0.0;
      for (std::size_t k : order) {
        lower = draw_quantile(b, probs[k], lower, lower);
        out[k][b] = lower;
      }
    }
    return out;
  }

 private:
  struct Eval {
    double cdf;
    double d_log_y;
  };

  [[nodiscard]] std::size_t count_empty(std::size_t b) const {
    std::size_t c = 0;
    for (const auto& blk : blocks(b)) c += blk.n == 0 ? 1 : 0;
    return c;
  }

  [[nodiscard]] Eval eval(std::size_t b, double log_y) const {
    double cdf = 0.0;
    double deriv = 0.0;
    for (const auto& blk : blocks(b)) {
      if (blk.n == 0) {
        cdf += 1.0;
        continue;
      }
      const double w = std::exp(blk.shape * (log_y - blk.log_scale));  // (y / delta)^gamma
      const double log_f = std::log(-std::expm1(-w));
      const double fn = std::exp(blk.n * log_f);
      cdf += fn;
      // d F^n / d log y = F^n n gamma w e^{-w} / F
      if (fn > 0.0) deriv += fn * blk.n * blk.shape * w * std::exp(-w - log_f);
    }
    const auto m = static_cast<double>(m_);
    return {cdf / m, deriv / m};
  }

  // Quantile of F^n with the draw's average block parameters.
  [[nodiscard]] double typical_maximum(std::size_t b, double prob) const {
    double shape = 0.0, log_scale = 0.0, n = 0.0;
    for (const auto& blk : blocks(b)) {
      shape += blk.shape;
      log_scale += blk.log_scale;
      n += blk.n;
    }
    const auto m = static_cast<double>(m_);
    shape /= m;
    log_scale /= m;
    n = std::max(n / m, 1.0);
    const double y = std::exp(log_scale) * std::pow(-std::log(-std::expm1(std::log(prob) / n)), 1.0 / shape);
    return std::isfinite(y) && y > 0.0 ? y : std::exp(log_scale);
  }

  std::size_t m_ = 0;
  std::vector<Block> blocks_;
  std::size_t empty_ = 0;
};

/// Per-draw GEV distributions of the block-maxima benchmark.
class GevEnsemble {
 public:
  explicit GevEnsemble(std::vector<GevParams> draws) : draws_(std::move(draws)) {
    if (draws_.empty()) throw StructuralError("predictive: no posterior draws");
    for (const auto& d : draws_) validate(d);
  }

  static GevEnsemble from_draws(const sampler::PosteriorDraws& draws) {
    if (draws.dim() != 3 || draws.names[0] != "mu") throw StructuralError("predictive: draws do not follow the GEV layout");
    std::vector<GevParams> out;
    for (std::size_t r = 0; r < draws.size(); ++r) out.push_back({draws.at(r, 0), std::exp(draws.at(r, 1)), draws.at(r, 2)});
    return GevEnsemble(std::move(out));
  }

  [[nodiscard]] std::size_t n_draws() const { return draws_.size(); }
  [[nodiscard]] std::size_t empty_blocks() const { return 0; }
  [[nodiscard]] double draw_cdf(std::size_t b, double y) const { return gev_cdf(y, draws_[b]); }

  [[nodiscard]] std::vector<std::vector<double>> draw_quantiles(std::span<const double> probs) const {
    std::vector<std::vector<double>> out(probs.size(), std::vector<double>(draws_.size()));
    for (std::size_t k = 0; k < probs.size(); ++k) {
      for (std::size_t b = 0; b < draws_.size(); ++b) out[k][b] = gev_quantile(probs[k], draws_[b]);
    }
    return out;
  }

 private:
  std::vector<GevParams> draws_;
};

/// Per-draw and pooled maxima cdf on a grid.
struct MaximaCdfEstimate {
  std::vector<double> y;
  std::vector<double> per_draw;  // n_draws x |y|, row-major
  std::vector<double> pooled;
  std::size_t n_draws = 0;
  std::size_t empty_blocks = 0;

  [[nodiscard]] double at(std::size_t b, std::size_t i) const { return per_draw[b * y.size() + i]; }
};

inline void validate_grid(std::span<const double> y) {
  if (y.empty()) throw StructuralError("predictive: empty y-grid");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0) || (i > 0 && !(y[i] > y[i - 1]))) {
      throw StructuralError("predictive: y-grid must be positive and increasing");
    }
  }
}

template <class Ensemble>
MaximaCdfEstimate predictive_cdf(const Ensemble& ensemble, std::span<const double> y) {
  validate_grid(y);
  MaximaCdfEstimate est;
  est.y.assign(y.begin(), y.end());
  est.n_draws = ensemble.n_draws();
  est.empty_blocks = ensemble.empty_blocks();
  est.per_draw.resize(est.n_draws * y.size());
  est.pooled.assign(y.size(), 0.0);
  for (std::size_t b = 0; b < est.n_draws; ++b) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double v = ensemble.draw_cdf(b, y[i]);
      est.per_draw[b * y.size() + i] = v;
      est.pooled[i] += v;
    }
  }
  for (double& v : est.pooled) v /= static_cast<double>(est.n_draws);
  return est;
}

/// 512 log-spaced points from 0.1x the smallest to 5x the largest magnitude.
inline std::vector<double> default_y_grid(double min_magnitude, double max_magnitude, std::size_t n = 512) {
  if (!(min_magnitude > 0.0 && max_magnitude >= min_magnitude)) {
    throw DomainError("predictive: grid bounds must be positive and ordered");
  }
  if (n < 2) throw DomainError("predictive: grid needs at least two points");
  const double a = std::log(0.1 * min_magnitude);
  const double b = std::log(5.0 * max_magnitude);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return y;
}

inline QuantileSummary summarize(const std::vector<double>& per_draw) {
  return {mean(per_draw), empirical_quantile(per_draw, 0.05), empirical_quantile(per_draw, 0.95)};
}

/// Posterior mean and 90% band of the per-draw quantiles at `prob`.
template <class Ensemble>
QuantileSummary predictive_quantile(const Ensemble& ensemble, double prob) {
  const double p[] = {prob};
  return summarize(ensemble.draw_quantiles(p).front());
}

// ---------------------------------------------------------------------------
// Return-level rasters

struct RasterPoint {
  double lon = 0.0;
  double lat = 0.0;
  double alt = 0.0;
  double dist_coast = 0.0;
  std::vector<double> row;  // standardized covariates, intercept first
};

/// Grid of locations whose rows were standardized with `snapshot`.
struct CovariateRaster {
  std::optional<StandardizationSnapshot> snapshot;
  std::vector<RasterPoint> points;
};

/// Builds standardized rows from raw values keyed by covariate name; the
/// names lon, lat, alt and dist_coast read the point's own fields.
inline CovariateRaster standardize_raster(std::vector<RasterPoint> points, const StandardizationSnapshot& snapshot) {
  for (auto& p : points) {
    std::vector<double> raw;
    for (const auto& name : snapshot.names) {
      if (name == "lon") {
        raw.push_back(p.lon);
      } else if (name == "lat") {
        raw.push_back(p.lat);
      } else if (name == "alt") {
        raw.push_back(p.alt);
      } else if (name == "dist_coast") {
        raw.push_back(p.dist_coast);
      } else {
        throw StructuralError("raster: covariate '" + name + "' is not a raster column");
      }
    }
    p.row = snapshot.standardize(raw);
  }
  return {snapshot, std::move(points)};
}

struct ReturnLevelCell {
  std::size_t point;
  double period;
  QuantileSummary level;
};

struct ReturnLevelField {
  std::vector<double> periods;
  std::vector<ReturnLevelCell> cells;  // point-major, periods in input order
  std::size_t n_draws = 0;
  std::size_t empty_blocks = 0;
};

inline std::vector<double> return_probabilities(std::span<const double> periods) {
  std::vector<double> probs;
  for (double T : periods) {
    if (!(T > 1.0)) throw DomainError("predictive: return periods must exceed 1 year");
    probs.push_back(1.0 - 1.0 / T);
  }
  return probs;
}

/// Pointwise return levels at prob = 1 - 1/T of the spatial model.
inline ReturnLevelField return_level_map(const sampler::PosteriorDraws& draws, const model::ShmevLayout& layout,
                                         const StandardizationSnapshot& training, const CovariateRaster& raster,
                                         std::span<const double> periods, const PredictiveConfig& cfg) {
  if (!raster.snapshot) throw StructuralError("raster: no standardization snapshot declared");
  if (!(*raster.snapshot == training)) {
    throw StructuralError("raster: standardization snapshot differs from the training snapshot");
  }
  const auto probs = return_probabilities(periods);
  ReturnLevelField field;
  field.periods.assign(periods.begin(), periods.end());
  field.n_draws = draws.size();
  for (std::size_t i = 0; i < raster.points.size(); ++i) {
    const auto& row = raster.points[i].row;
    const auto layer = shmev_layer_draws(draws, layout, row);
    const auto ens = MaximaEnsemble::simulate(layer, cfg, row_key(row));
    field.empty_blocks += ens.empty_blocks();
    const auto q = ens.draw_quantiles(probs);
    for (std::size_t k = 0; k < probs.size(); ++k) field.cells.push_back({i, periods[k], summarize(q[k])});
  }
  return field;
}

/// Raster locations from a CSV with columns lon, lat, alt and dist_coast
/// (other columns are ignored). Rows are left unstandardized.
inline std::vector<RasterPoint> read_raster_points(const std::string& path) {
  auto in = csv::open_input(path);
  const auto header = csv::read_header(in, path);
  std::size_t col[4];
  const char* required[4] = {"lon", "lat", "alt", "dist_coast"};
  for (int k = 0; k < 4; ++k) {
    const auto it = std::find(header.begin(), header.end(), required[k]);
    if (it == header.end()) throw DataError(path + ": missing column " + required[k]);
    col[k] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<RasterPoint> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) throw DataError(path + ":" + std::to_string(line_no) + ": wrong field count");
    double v[4];
    for (int k = 0; k < 4; ++k) {
      const auto x = csv::parse_double(f[col[k]]);
      if (!x || !std::isfinite(*x)) throw DataError(path + ":" + std::to_string(line_no) + ": bad number");
      v[k] = *x;
    }
    out.push_back({v[0], v[1], v[2], v[3], {}});
  }
  if (out.empty()) throw DataError(path + ": no raster points");
  return out;
}

inline void write_return_levels(const ReturnLevelField& field, const CovariateRaster& raster, const std::string& path) {
  auto out = csv::open_output(path);
  out << "lon,lat,alt,dist_coast,T,rl_mean,rl_q05,rl_q95\n";
  for (const auto& c : field.cells) {
    const auto& p = raster.points.at(c.point);
    out << csv::format(p.lon) << ',' << csv::format(p.lat) << ',' << csv::format(p.alt) << ','
        << csv::format(p.dist_coast) << ',' << csv::format(c.period) << ',' << csv::format(c.level.mean) << ','
        << csv::format(c.level.q05) << ',' << csv::format(c.level.q95) << '\n';
  }
  csv::finish(out, path);
}

/// Sidecar describing how a return-level raster was produced.
inline nlohmann::json raster_metadata(const ReturnLevelField& field, const PredictiveConfig& cfg,
                                      const StandardizationSnapshot& snapshot) {
  return {{"seed", cfg.seed},
          {"M_g", cfg.n_future_blocks},
          {"B", field.n_draws},
          {"block_size", cfg.block_size},
          {"periods", field.periods},
          {"empty_blocks", field.empty_blocks},
          {"empty_block_flag", field.empty_blocks > 0},
          {"standardization", snapshot}};
}

}  // namespace shmev::predictive
