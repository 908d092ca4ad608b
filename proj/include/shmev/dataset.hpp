#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "shmev/error.hpp"

namespace shmev {

inline constexpr int kDefaultBlockSize = 366;
inline constexpr int kSnapshotSchemaVersion = 1;

/// Standardized covariate row of one site. `row` starts with the intercept 1
/// followed by the standardized covariates; `raw` holds the unstandardized
/// values in the same order as the dataset's covariate names.
struct SiteCovariates {
  std::string id;
  std::vector<double> raw;
  std::vector<double> row;
};

/// Positive daily magnitudes of one (site, block). The event count n_j(s) is
/// the number of magnitudes.
struct OrdinaryEventRecord {
  std::vector<double> magnitudes;
  [[nodiscard]] int count() const { return static_cast<int>(magnitudes.size()); }
};

/// Per-covariate training means and standard deviations.
struct StandardizationSnapshot {
  int schema_version = kSnapshotSchemaVersion;
  std::vector<std::string> names;
  std::vector<double> means;
  std::vector<double> sds;

  /// Intercept-led standardized row for raw covariate values.
  [[nodiscard]] std::vector<double> standardize(const std::vector<double>& raw) const {
    if (raw.size() != names.size()) {
      throw StructuralError("standardize: expected " + std::to_string(names.size()) + " covariates, got " +
                            std::to_string(raw.size()));
    }
    std::vector<double> row(raw.size() + 1, 1.0);
    for (std::size_t k = 0; k < raw.size(); ++k) row[k + 1] = (raw[k] - means[k]) / sds[k];
    return row;
  }

  bool operator==(const StandardizationSnapshot&) const = default;

  /// Sample (n - 1) standard deviation; columns with zero spread keep sd = 1
  /// so that the standardized column is identically zero.
  static StandardizationSnapshot fit(const std::vector<std::string>& names,
                                     const std::vector<std::vector<double>>& raw_rows) {
    StandardizationSnapshot snap;
    snap.names = names;
    const std::size_t p = names.size();
    snap.means.assign(p, 0.0);
    snap.sds.assign(p, 1.0);
    const auto n = static_cast<double>(raw_rows.size());
    for (std::size_t k = 0; k < p; ++k) {
      double m = 0.0;
      for (const auto& r : raw_rows) m += r.at(k);
      m /= n;
      double ss = 0.0;
      for (const auto& r : raw_rows) ss += (r[k] - m) * (r[k] - m);
      snap.means[k] = m;
      const double sd = raw_rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      if (sd > 0.0) snap.sds[k] = sd;
    }
    return snap;
  }
};

inline void to_json(nlohmann::json& j, const StandardizationSnapshot& s) {
  j = nlohmann::json{{"schema_version", s.schema_version}, {"names", s.names}, {"means", s.means}, {"sds", s.sds}};
}

inline void from_json(const nlohmann::json& j, StandardizationSnapshot& s) {
  s.schema_version = j.at("schema_version").get<int>();
  if (s.schema_version != kSnapshotSchemaVersion) {
    throw DataError("standardization snapshot: unsupported schema version " + std::to_string(s.schema_version));
  }
  j.at("names").get_to(s.names);
  j.at("means").get_to(s.means);
  j.at("sds").get_to(s.sds);
  if (s.means.size() != s.names.size() || s.sds.size() != s.names.size()) {
    throw DataError("standardization snapshot: inconsistent lengths");
  }
}

/// Training data of the spatial model: S sites, J blocks each, events stored
/// site-major (index s * J + j).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> covariate_names, std::vector<SiteCovariates> sites, std::size_t n_blocks,
          std::vector<OrdinaryEventRecord> events, int block_size = kDefaultBlockSize)
      : covariate_names_(std::move(covariate_names)),
        sites_(std::move(sites)),
        n_blocks_(n_blocks),
        block_size_(block_size),
        events_(std::move(events)) {
    validate();
  }

  [[nodiscard]] const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  [[nodiscard]] const std::vector<SiteCovariates>& sites() const { return sites_; }
  [[nodiscard]] std::size_t n_sites() const { return sites_.size(); }
  [[nodiscard]] std::size_t n_blocks() const { return n_blocks_; }
  /// Number of covariate columns including the intercept.
  [[nodiscard]] std::size_t n_coefficients() const { return covariate_names_.size() + 1; }
  [[nodiscard]] int block_size() const { return block_size_; }
  [[nodiscard]] const OrdinaryEventRecord& record(std::size_t site, std::size_t block) const {
    return events_[site * n_blocks_ + block];
  }
  [[nodiscard]] const std::vector<OrdinaryEventRecord>& records() const { return events_; }

  [[nodiscard]] std::size_t total_events() const {
    std::size_t n = 0;
    for (const auto& r : events_) n += r.magnitudes.size();
    return n;
  }

 private:
  void validate() const {
    if (block_size_ < 1) throw StructuralError("dataset: block size must be >= 1");
    if (events_.size() != sites_.size() * n_blocks_) {
      throw StructuralError("dataset: expected " + std::to_string(sites_.size() * n_blocks_) + " block records, got " +
                            std::to_string(events_.size()));
    }
    for (const auto& s : sites_) {
      if (s.row.size() != covariate_names_.size() + 1) {
        throw StructuralError("dataset: site " + s.id + " covariate row has wrong length");
      }
    }
    for (const auto& r : events_) {
      if (r.count() > block_size_) throw StructuralError("dataset: event count exceeds block size");
      for (double x : r.magnitudes) {
        if (!(x > 0.0) || !std::isfinite(x)) throw StructuralError("dataset: magnitudes must be positive and finite");
      }
    }
  }

  std::vector<std::string> covariate_names_;
  std::vector<SiteCovariates> sites_;
  std::size_t n_blocks_ = 0;
  int block_size_ = kDefaultBlockSize;
  std::vector<OrdinaryEventRecord> events_;
};

}  // namespace shmev
