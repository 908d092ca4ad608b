#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shmev/csv.hpp"
#include "shmev/dataset.hpp"
#include "shmev/error.hpp"

// Daily precipitation records: canonical text input, quality control and
// assembly of the training dataset.
//
// Event file:     station,date,prcp_mm,qflag   (date YYYY-MM-DD, empty prcp = missing)
// Covariate file: station,lat,lon,alt_m,dist_coast_km   (NA = unavailable)

namespace shmev::ingest {

using Date = std::chrono::year_month_day;

struct DailyValue {
  Date date;
  std::optional<double> prcp;
  std::string qflag;
  bool operator==(const DailyValue&) const = default;
};

struct StationRecord {
  std::string id;
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<double> alt;
  std::optional<double> dist_coast;
  std::vector<DailyValue> series;  // strictly increasing dates

  [[nodiscard]] std::vector<int> years() const {
    std::vector<int> out;
    for (const auto& d : series) {
      const int y = static_cast<int>(d.date.year());
      if (out.empty() || out.back() != y) out.push_back(y);
    }
    return out;
  }
  bool operator==(const StationRecord&) const = default;
};

struct QcPolicy {
  int max_missing_days = 30;  // years with more missing days are dropped
  int min_years = 73;         // stations need strictly more retained years
  bool drop_flagged = true;
  double wet_threshold = 0.0;  // wet day: prcp > threshold

  void validate() const {
    if (max_missing_days < 0 || min_years < 0 || !(wet_threshold >= 0.0)) {
      throw ConfigError("qc policy: thresholds must be non-negative");
    }
  }
};

/// One exclusion or retention decision. `year` is 0 for station-level rows.
struct LedgerEntry {
  std::string station;
  int year = 0;
  std::string code;
  std::string detail;
  bool operator==(const LedgerEntry&) const = default;
};

namespace reason {
inline constexpr const char* kRetained = "RETAINED";
inline constexpr const char* kFlagged = "FLAGGED_VALUES";
inline constexpr const char* kMissingDays = "YEAR_MISSING_DAYS";
inline constexpr const char* kFewYears = "STATION_FEW_YEARS";
inline constexpr const char* kNoCovariates = "NO_COVARIATES";
}  // namespace reason

struct Reject {
  std::string file;
  std::size_t line = 0;
  std::string text;
  std::string reason;
};

struct QcResult {
  std::vector<StationRecord> stations;  // sorted by id
  std::vector<LedgerEntry> ledger;
  std::vector<Reject> rejects;
};

// ---------------------------------------------------------------- dates

inline std::optional<Date> parse_date(std::string_view s) {
  s = csv::trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto y = csv::parse_int(s.substr(0, 4));
  const auto m = csv::parse_int(s.substr(5, 2));
  const auto d = csv::parse_int(s.substr(8, 2));
  if (!y || !m || !d || *m < 1 || *d < 1) return std::nullopt;
  const Date date{std::chrono::year{static_cast<int>(*y)}, std::chrono::month{static_cast<unsigned>(*m)},
                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

inline int days_in_year(int year) { return std::chrono::year{year}.is_leap() ? 366 : 365; }

// ---------------------------------------------------------------- readers

namespace detail {

inline std::size_t column(const std::vector<std::string>& header, const std::string& name, const std::string& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError(path + ": missing column " + name);
  return static_cast<std::size_t>(it - header.begin());
}

inline std::optional<double> parse_optional(std::string_view s, bool& ok) {
  s = csv::trim(s);
  ok = true;
  if (s.empty() || s == "NA") return std::nullopt;
  const auto v = csv::parse_double(s);
  if (!v || !std::isfinite(*v)) ok = false;
  return v;
}

}  // namespace detail

/// Appends the rows of one event file; malformed rows go to `rejects`.
inline void read_events(const std::string& path, std::map<std::string, std::vector<DailyValue>>& out,
                        std::vector<Reject>& rejects) {
  auto in = csv::open_input(path);
  const auto header = csv::read_header(in, path);
  const std::size_t c_station = detail::column(header, "station", path);
  const std::size_t c_date = detail::column(header, "date", path);
  const std::size_t c_prcp = detail::column(header, "prcp_mm", path);
  const std::size_t c_flag = detail::column(header, "qflag", path);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = csv::trim(line);
    if (text.empty()) continue;
    const auto f = csv::split(text);
    auto reject = [&](const std::string& why) { rejects.push_back({path, line_no, std::string(text), why}); };
    if (f.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields");
      continue;
    }
    const auto station = std::string(csv::trim(f[c_station]));
    if (station.empty()) {
      reject("empty station id");
      continue;
    }
    const auto date = parse_date(f[c_date]);
    if (!date) {
      reject("invalid date");
      continue;
    }
    bool ok = true;
    const auto prcp = detail::parse_optional(f[c_prcp], ok);
    if (!ok) {
      reject("invalid precipitation");
      continue;
    }
    if (prcp && *prcp < 0.0) {
      reject("negative precipitation");
      continue;
    }
    out[station].push_back({*date, prcp, std::string(csv::trim(f[c_flag]))});
  }
}

struct Coordinates {
  std::optional<double> lat, lon, alt, dist_coast;
};

inline std::map<std::string, Coordinates> read_covariates(const std::string& path, std::vector<Reject>& rejects) {
  auto in = csv::open_input(path);
  const auto header = csv::read_header(in, path);
  const std::size_t c_station = detail::column(header, "station", path);
  const std::size_t cols[4] = {detail::column(header, "lat", path), detail::column(header, "lon", path),
                               detail::column(header, "alt_m", path), detail::column(header, "dist_coast_km", path)};
  std::map<std::string, Coordinates> out;
  std::set<std::string> duplicated;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = csv::trim(line);
    if (text.empty()) continue;
    const auto f = csv::split(text);
    auto reject = [&](const std::string& why) { rejects.push_back({path, line_no, std::string(text), why}); };
    if (f.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields");
      continue;
    }
    const auto station = std::string(csv::trim(f[c_station]));
    if (station.empty()) {
      reject("empty station id");
      continue;
    }
    Coordinates c;
    std::optional<double>* slots[4] = {&c.lat, &c.lon, &c.alt, &c.dist_coast};
    bool ok = true;
    for (int k = 0; k < 4 && ok; ++k) *slots[k] = detail::parse_optional(f[cols[k]], ok);
    if (!ok) {
      reject("invalid covariate value");
      continue;
    }
    if (out.count(station)) {
      duplicated.insert(station);
      reject("duplicate station");
      continue;
    }
    out[station] = c;
  }
  for (const auto& s : duplicated) out.erase(s);
  return out;
}

// ---------------------------------------------------------------- QC

/// Quality control of one station: flagged values removed, years above the
/// missing-day budget dropped whole, station kept only with more than
/// `min_years` retained years.
inline std::optional<StationRecord> qc_station(StationRecord rec, const QcPolicy& policy,
                                               std::vector<LedgerEntry>& ledger) {
  std::map<int, int> flagged, present;
  std::vector<DailyValue> kept;
  for (auto& d : rec.series) {
    const int y = static_cast<int>(d.date.year());
    if (policy.drop_flagged && !d.qflag.empty()) {
      ++flagged[y];
      present.try_emplace(y, 0);
      continue;
    }
    present.try_emplace(y, 0);
    if (d.prcp) ++present[y];
    kept.push_back(std::move(d));
  }
  std::set<int> retained;
  for (const auto& [y, n] : present) {
    if (flagged.count(y)) {
      ledger.push_back({rec.id, y, reason::kFlagged, std::to_string(flagged[y]) + " values"});
    }
    const int missing = days_in_year(y) - n;
    if (missing > policy.max_missing_days) {
      ledger.push_back({rec.id, y, reason::kMissingDays, std::to_string(missing) + " missing days"});
    } else {
      retained.insert(y);
    }
  }
  if (static_cast<int>(retained.size()) <= policy.min_years) {
    ledger.push_back({rec.id, 0, reason::kFewYears,
                      std::to_string(retained.size()) + " retained years, need more than " +
                          std::to_string(policy.min_years)});
    return std::nullopt;
  }
  for (int y : retained) {
    ledger.push_back({rec.id, y, reason::kRetained, "missing=" + std::to_string(days_in_year(y) - present[y])});
  }
  std::erase_if(kept, [&](const DailyValue& d) { return !retained.count(static_cast<int>(d.date.year())); });
  rec.series = std::move(kept);
  return rec;
}

/// Dates must be unique per station; every row of a repeated date is rejected.
inline std::vector<DailyValue> order_series(const std::string& station, std::vector<DailyValue> values,
                                            std::vector<Reject>& rejects) {
  std::stable_sort(values.begin(), values.end(),
                   [](const DailyValue& a, const DailyValue& b) { return a.date < b.date; });
  std::vector<DailyValue> out;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j + 1 < values.size() && values[j + 1].date == values[i].date) ++j;
    if (j == i) {
      out.push_back(std::move(values[i]));
    } else {
      rejects.push_back({station, 0, station + "," + format_date(values[i].date),
                         "duplicate date (" + std::to_string(j - i + 1) + " rows)"});
    }
    i = j + 1;
  }
  return out;
}

inline QcResult load_and_qc(const std::vector<std::string>& event_files, const std::string& covariate_file,
                            const QcPolicy& policy) {
  policy.validate();
  QcResult result;
  std::map<std::string, std::vector<DailyValue>> raw;
  std::vector<std::string> files = event_files;
  std::sort(files.begin(), files.end());
  for (const auto& f : files) read_events(f, raw, result.rejects);
  const auto coords = read_covariates(covariate_file, result.rejects);
  for (auto& [id, values] : raw) {
    StationRecord rec;
    rec.id = id;
    rec.series = order_series(id, std::move(values), result.rejects);
    const auto it = coords.find(id);
    if (it == coords.end()) {
      result.ledger.push_back({id, 0, reason::kNoCovariates, "station absent from covariate file"});
    } else {
      rec.lat = it->second.lat;
      rec.lon = it->second.lon;
      rec.alt = it->second.alt;
      rec.dist_coast = it->second.dist_coast;
    }
    if (auto kept = qc_station(std::move(rec), policy, result.ledger)) result.stations.push_back(std::move(*kept));
  }
  return result;
}

// ---------------------------------------------------------------- writers

inline void write_events(const std::vector<StationRecord>& stations, const std::string& path) {
  auto out = csv::open_output(path);
  out << "station,date,prcp_mm,qflag\n";
  for (const auto& s : stations) {
    for (const auto& d : s.series) {
      out << s.id << ',' << format_date(d.date) << ',' << (d.prcp ? csv::format(*d.prcp) : std::string()) << ','
          << d.qflag << '\n';
    }
  }
  csv::finish(out, path);
}

inline void write_covariates(const std::vector<StationRecord>& stations, const std::string& path) {
  auto out = csv::open_output(path);
  auto fmt = [](const std::optional<double>& v) { return v ? csv::format(*v) : std::string("NA"); };
  out << "station,lat,lon,alt_m,dist_coast_km\n";
  for (const auto& s : stations) {
    out << s.id << ',' << fmt(s.lat) << ',' << fmt(s.lon) << ',' << fmt(s.alt) << ',' << fmt(s.dist_coast) << '\n';
  }
  csv::finish(out, path);
}

inline void write_ledger(const std::vector<LedgerEntry>& ledger, const std::string& path) {
  auto out = csv::open_output(path);
  out << "station,year,code,detail\n";
  for (const auto& e : ledger) {
    out << e.station << ',' << (e.year ? std::to_string(e.year) : std::string()) << ',' << e.code << ',' << e.detail
        << '\n';
  }
  csv::finish(out, path);
}

inline void write_rejects(const std::vector<Reject>& rejects, const std::string& path) {
  auto out = csv::open_output(path);
  out << "file\tline\treason\ttext\n";
  for (const auto& r : rejects) out << r.file << '\t' << r.line << '\t' << r.reason << '\t' << r.text << '\n';
  csv::finish(out, path);
}

// ---------------------------------------------------------------- dataset

inline std::optional<double> covariate_value(const StationRecord& s, const std::string& name) {
  if (name == "lat") return s.lat;
  if (name == "lon") return s.lon;
  if (name == "alt") return s.alt;
  if (name == "dist_coast") return s.dist_coast;
  throw ConfigError("unknown covariate '" + name + "' (expected lat, lon, alt or dist_coast)");
}

struct BuiltDataset {
  Dataset data;
  StandardizationSnapshot snapshot;
  std::vector<std::vector<int>> years;  // training calendar years per site
};

/// Training dataset from the first `train_years` retained years of each
/// station, with covariates standardized over these stations.
inline BuiltDataset build_dataset(const std::vector<StationRecord>& records, std::size_t train_years,
                                  const std::vector<std::string>& covariates, double wet_threshold = 0.0,
                                  int block_size = kDefaultBlockSize) {
  if (records.empty()) throw StructuralError("build_dataset: no stations");
  std::vector<const StationRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->id == order[i - 1]->id) throw StructuralError("build_dataset: duplicate station " + order[i]->id);
  }

  std::vector<std::vector<double>> raw;
  for (const auto* s : order) {
    std::vector<double> row;
    for (const auto& name : covariates) {
      const auto v = covariate_value(*s, name);
      if (!v) throw StructuralError("build_dataset: station " + s->id + " lacks covariate " + name);
      row.push_back(*v);
    }
    raw.push_back(std::move(row));
  }
  BuiltDataset out;
  out.snapshot = StandardizationSnapshot::fit(covariates, raw);

  std::vector<SiteCovariates> sites;
  std::vector<OrdinaryEventRecord> events;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& s = *order[i];
    const auto all_years = s.years();
    if (all_years.size() < train_years) {
      throw DataError("build_dataset: station " + s.id + " has " + std::to_string(all_years.size()) +
                      " retained years, fewer than the training window " + std::to_string(train_years));
    }
    std::vector<int> years(all_years.begin(), all_years.begin() + static_cast<std::ptrdiff_t>(train_years));
    std::vector<OrdinaryEventRecord> blocks(train_years);
    for (const auto& d : s.series) {
      const auto it = std::lower_bound(years.begin(), years.end(), static_cast<int>(d.date.year()));
      if (it == years.end() || *it != static_cast<int>(d.date.year())) continue;
      if (d.prcp && *d.prcp > wet_threshold) blocks[static_cast<std::size_t>(it - years.begin())].magnitudes.push_back(*d.prcp);
    }
    for (auto& b : blocks) events.push_back(std::move(b));
    sites.push_back({s.id, raw[i], out.snapshot.standardize(raw[i])});
    out.years.push_back(std::move(years));
  }
  out.data = Dataset(covariates, std::move(sites), train_years, std::move(events), block_size);
  return out;
}

/// Annual maxima of the retained years after the first `skip_years`; a year
/// without wet days has maximum 0.
inline std::vector<double> annual_maxima(const StationRecord& s, std::size_t skip_years, double wet_threshold = 0.0) {
  const auto years = s.years();
  std::vector<double> out;
  if (years.size() <= skip_years) return out;
  const int first = years[skip_years];
  std::map<int, double> maxima;
  for (std::size_t k = skip_years; k < years.size(); ++k) maxima[years[k]] = 0.0;
  for (const auto& d : s.series) {
    const int y = static_cast<int>(d.date.year());
    if (y < first || !d.prcp || !(*d.prcp > wet_threshold)) continue;
    auto& m = maxima[y];
    m = std::max(m, *d.prcp);
  }
  for (const auto& [y, m] : maxima) out.push_back(m);
  return out;
}

/// Station records for a dataset: block j becomes calendar year
/// `first_year + j`, with its events on the first days and dry days after.
inline std::vector<StationRecord> dataset_to_records(const Dataset& data, int first_year) {
  const auto& names = data.covariate_names();
  std::vector<StationRecord> out;
  for (std::size_t s = 0; s < data.n_sites(); ++s) {
    const auto& site = data.sites()[s];
    StationRecord rec;
    rec.id = site.id;
    for (std::size_t k = 0; k < names.size(); ++k) {
      std::optional<double>* slot = nullptr;
      if (names[k] == "lat") slot = &rec.lat;
      if (names[k] == "lon") slot = &rec.lon;
      if (names[k] == "alt") slot = &rec.alt;
      if (names[k] == "dist_coast") slot = &rec.dist_coast;
      if (!slot) throw StructuralError("dataset_to_records: unsupported covariate " + names[k]);
      *slot = site.raw.at(k);
    }
    for (std::size_t j = 0; j < data.n_blocks(); ++j) {
      const int year = first_year + static_cast<int>(j);
      const auto& mags = data.record(s, j).magnitudes;
      const int n_days = days_in_year(year);
      if (static_cast<int>(mags.size()) > n_days) {
        throw DataError("dataset_to_records: block has more events than days in year " + std::to_string(year));
      }
      std::chrono::sys_days day = std::chrono::sys_days{Date{std::chrono::year{year}, std::chrono::January,
                                                             std::chrono::day{1}}};
      for (int t = 0; t < n_days; ++t, day += std::chrono::days{1}) {
        const double v = t < static_cast<int>(mags.size()) ? mags[static_cast<std::size_t>(t)] : 0.0;
        rec.series.push_back({Date{day}, v, ""});
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------- GHCN daily

/// Converts the fixed-width GHCN daily format (PRCP element only, tenths of
/// mm, -9999 missing) to canonical event rows. Returns the number of rows.
inline std::size_t convert_ghcn_dly(const std::string& in_path, const std::string& out_path,
                                    std::vector<Reject>& rejects) {
  auto in = csv::open_input(in_path);
  std::map<std::string, std::vector<DailyValue>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.size() < 21) {
      rejects.push_back({in_path, line_no, line, "short record"});
      continue;
    }
    if (line.compare(17, 4, "PRCP") != 0) continue;
    if (line.size() < 21 + 31 * 8) {
      rejects.push_back({in_path, line_no, line, "short record"});
      continue;
    }
    const std::string id(csv::trim(std::string_view(line).substr(0, 11)));
    const auto year = csv::parse_int(std::string_view(line).substr(11, 4));
    const auto month = csv::parse_int(std::string_view(line).substr(15, 2));
    if (!year || !month || *month < 1 || *month > 12) {
      rejects.push_back({in_path, line_no, line, "invalid year or month"});
      continue;
    }
    for (unsigned d = 1; d <= 31; ++d) {
      const Date date{std::chrono::year{static_cast<int>(*year)}, std::chrono::month{static_cast<unsigned>(*month)},
                      std::chrono::day{d}};
      if (!date.ok()) continue;
      const std::size_t off = 21 + (d - 1) * 8;
      const auto value = csv::parse_int(std::string_view(line).substr(off, 5));
      if (!value) {
        rejects.push_back({in_path, line_no, line, "invalid value for day " + std::to_string(d)});
        continue;
      }
      const char q = line[off + 6];
      std::optional<double> prcp;
      if (*value != -9999) prcp = static_cast<double>(*value) / 10.0;
      rows[id].push_back({date, prcp, q == ' ' ? std::string() : std::string(1, q)});
    }
  }
  std::vector<StationRecord> stations;
  for (auto& [id, values] : rows) {
    StationRecord s;
    s.id = id;
    s.series = order_series(id, std::move(values), rejects);
    stations.push_back(std::move(s));
  }
  write_events(stations, out_path);
  std::size_t n = 0;
  for (const auto& s : stations) n += s.series.size();
  return n;
}

}  // namespace shmev::ingest
