#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "shmev/error.hpp"

namespace shmev::sampler {

struct ChainStats {
  double mean_accept = 0.0;
  std::size_t divergences = 0;         // post-warmup
  std::size_t warmup_divergences = 0;
  double step_size = 0.0;
  std::vector<double> inv_metric;
};

/// Retained post-warmup draws of all chains, chain-major: the rows of chain c
/// are [c * draws_per_chain, (c + 1) * draws_per_chain).
struct PosteriorDraws {
  std::vector<std::string> names;
  std::size_t n_chains = 0;
  std::size_t draws_per_chain = 0;
  std::vector<double> values;  // size() x dim(), row-major
  std::vector<ChainStats> stats;

  [[nodiscard]] std::size_t dim() const { return names.size(); }
  [[nodiscard]] std::size_t size() const { return n_chains * draws_per_chain; }
  [[nodiscard]] int chain_of(std::size_t row) const { return static_cast<int>(row / draws_per_chain); }
  [[nodiscard]] int iteration_of(std::size_t row) const { return static_cast<int>(row % draws_per_chain); }

  [[nodiscard]] std::span<const double> row(std::size_t r) const { return {values.data() + r * dim(), dim()}; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values[r * dim() + c]; }

  [[nodiscard]] std::vector<double> column(std::size_t c) const {
    std::vector<double> out(size());
    for (std::size_t r = 0; r < size(); ++r) out[r] = at(r, c);
    return out;
  }

  [[nodiscard]] std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw StructuralError("PosteriorDraws: no parameter named " + name);
  }

  /// The first `count` parameters. Chain statistics are kept.
  [[nodiscard]] PosteriorDraws leading(std::size_t count) const {
    if (count > dim()) throw StructuralError("PosteriorDraws::leading: count exceeds dimension");
    PosteriorDraws out;
    out.names.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(count));
    out.n_chains = n_chains;
    out.draws_per_chain = draws_per_chain;
    out.stats = stats;
    out.values.reserve(size() * count);
    for (std::size_t r = 0; r < size(); ++r) {
      const auto rw = row(r);
      out.values.insert(out.values.end(), rw.begin(), rw.begin() + static_cast<std::ptrdiff_t>(count));
    }
    return out;
  }
};

}  // namespace shmev::sampler
