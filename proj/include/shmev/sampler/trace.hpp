#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "shmev/csv.hpp"
#include "shmev/error.hpp"
#include "shmev/sampler/draws.hpp"

namespace shmev::sampler {

/// Long-format trace: one `iter,chain,param,value` row per draw and parameter.
inline void trace_export(const PosteriorDraws& draws, const std::string& path) {
  if (draws.size() == 0 || draws.dim() == 0) throw StructuralError("trace_export: no draws");
  auto out = csv::open_output(path);
  out << "iter,chain,param,value\n";
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const auto rw = draws.row(r);
    for (std::size_t p = 0; p < draws.dim(); ++p) {
      out << draws.iteration_of(r) << ',' << draws.chain_of(r) << ',' << draws.names[p] << ','
          << csv::format(rw[p]) << '\n';
    }
  }
  csv::finish(out, path);
}

/// Inverse of trace_export. Chain statistics are not part of the trace.
inline PosteriorDraws trace_import(const std::string& path) {
  auto in = csv::open_input(path);
  const auto header = csv::read_header(in, path);
  if (header != std::vector<std::string>{"iter", "chain", "param", "value"}) {
    throw DataError(path + ": expected header iter,chain,param,value");
  }
  std::vector<std::string> names;
  std::map<std::string, std::size_t> index;
  struct Entry {
    long long iter, chain;
    std::size_t param;
    double value;
  };
  std::vector<Entry> entries;
  long long max_iter = -1;
  long long max_chain = -1;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(csv::trim(line));
    const auto it = f.size() == 4 ? csv::parse_int(f[0]) : std::nullopt;
    const auto ch = f.size() == 4 ? csv::parse_int(f[1]) : std::nullopt;
    const auto v = f.size() == 4 ? csv::parse_double(f[3]) : std::nullopt;
    if (!it || !ch || !v || *it < 0 || *ch < 0) throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
    const std::string name(f[2]);
    auto [pos, inserted] = index.try_emplace(name, names.size());
    if (inserted) names.push_back(name);
    entries.push_back({*it, *ch, pos->second, *v});
    max_iter = std::max(max_iter, *it);
    max_chain = std::max(max_chain, *ch);
  }
  PosteriorDraws d;
  d.names = names;
  d.n_chains = static_cast<std::size_t>(max_chain + 1);
  d.draws_per_chain = static_cast<std::size_t>(max_iter + 1);
  if (entries.size() != d.size() * d.dim()) throw DataError(path + ": trace is not a complete chain x iteration grid");
  d.values.assign(d.size() * d.dim(), 0.0);
  for (const auto& e : entries) {
    const std::size_t row = static_cast<std::size_t>(e.chain) * d.draws_per_chain + static_cast<std::size_t>(e.iter);
    d.values[row * d.dim() + e.param] = e.value;
  }
  return d;
}

}  // namespace shmev::sampler
