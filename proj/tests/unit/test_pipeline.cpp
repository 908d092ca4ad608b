#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "shmev/pipeline.hpp"

using namespace shmev;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("shmev_pipeline_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  [[nodiscard]] const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

json tiny_config() {
  return json::parse(R"({
    "schema_version": 1,
    "seed": 11,
    "simulate": {"scenario": "WEI", "n_sites": 4, "train_blocks": 4, "test_blocks": 25},
    "sampler": {"chains": 2, "iterations": 200},
    "predict": {"M_g": 10, "periods": [2, 20], "models": ["shmev", "hmev", "gev"]},
    "evaluate": {"models": ["shmev", "hmev", "gev"]}
  })");
}

void write_raster(const fs::path& p) {
  std::ofstream out(p);
  out << "lon,lat,alt,dist_coast\n0.1,0.2,0,0\n0.8,0.5,0,0\n";
}

void run(const json& j, const std::string& command, const fs::path& out, const std::string& model = "shmev",
         const fs::path& base = {}) {
  auto cfg = config::parse(j, base);
  cfg.model = model;
  pipeline::Context ctx(cfg, out, command);
  pipeline::run(ctx);
}

void full_pipeline(const json& j, const fs::path& out, const fs::path& base) {
  run(j, "simulate", out);
  for (const char* m : {"shmev", "hmev", "gev"}) run(j, "fit", out, m);
  run(j, "diagnose", out, "shmev");
  run(j, "diagnose", out, "hmev");
  run(j, "predict", out);
  run(j, "map", out, "shmev", base);
  run(j, "evaluate", out);
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[e.path().lexically_relative(root).string()] = pipeline::read_file(e.path());
  }
  return files;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Pipeline, EndToEndOnSimulatedData) {
  TempDir dir;
  write_raster(dir.path() / "raster.csv");
  auto j = tiny_config();
  j["map"] = {{"raster", "raster.csv"}, {"periods", {10}}};
  const auto out = dir.path() / "run";
  full_pipeline(j, out, dir.path());
  for (const char* d : {"simulate", "fit_shmev", "fit_hmev", "fit_gev", "diagnose_shmev", "diagnose_hmev", "predict",
                        "map", "evaluate"}) {
    const auto m = pipeline::read_json(out / d / "manifest.json");
    EXPECT_EQ(m.at("seed").get<std::uint64_t>(), 11u) << d;
    EXPECT_EQ(m.at("config_hash").get<std::string>().size(), 16u);
    EXPECT_TRUE(m.at("versions").contains("eigen"));
    EXPECT_FALSE(m.at("outputs").empty());
    EXPECT_FALSE(fs::exists(out / (std::string(d) + ".partial")));
  }
  for (const char* id : {"S001", "S002", "S003", "S004"}) {
    EXPECT_TRUE(fs::exists(out / "fit_hmev" / "sites" / (std::string(id) + ".csv")));
    EXPECT_TRUE(fs::exists(out / "fit_gev" / "sites" / (std::string(id) + ".csv")));
  }
  const auto report = lines_of(out / "evaluate" / "report.csv");
  ASSERT_EQ(report.size(), 1u + 3u * 4u + 3u);
  EXPECT_EQ(report[0], "site,model,fse,bias,width,m_T");
  EXPECT_EQ(report[13].rfind("median,shmev,", 0), 0u);
  const auto quantiles = lines_of(out / "predict" / "quantiles.csv");
  EXPECT_EQ(quantiles.size(), 1u + 3u * 4u * 2u);
  const auto levels = lines_of(out / "map" / "return_levels.csv");
  EXPECT_EQ(levels.size(), 3u);
  const auto truth = pipeline::read_json(out / "simulate" / "truth.json");
  EXPECT_EQ(truth.at("standardized_truth").size(), 11u);
  const auto draws = sampler::trace_import((out / "fit_shmev" / "draws.csv").string());
  EXPECT_EQ(draws.dim(), 11u);
  EXPECT_EQ(draws.size(), 200u);
}

TEST(Pipeline, RerunsAreByteIdentical) {
  TempDir dir;
  write_raster(dir.path() / "raster.csv");
  auto j = tiny_config();
  j["map"] = {{"raster", "raster.csv"}, {"periods", {10}}};
  full_pipeline(j, dir.path() / "a", dir.path());
  full_pipeline(j, dir.path() / "b", dir.path());
  const auto a = snapshot_tree(dir.path() / "a");
  const auto b = snapshot_tree(dir.path() / "b");
  EXPECT_GT(a.size(), 30u);
  EXPECT_EQ(a, b);

  j["seed"] = 12;
  run(j, "simulate", dir.path() / "c");
  EXPECT_NE(pipeline::read_file(dir.path() / "a" / "simulate" / "events.csv"),
            pipeline::read_file(dir.path() / "c" / "simulate" / "events.csv"));
}

TEST(Pipeline, FailedCommandLeavesNoPartialOutput) {
  TempDir dir;
  auto j = tiny_config();
  const auto out = dir.path() / "run";
  run(j, "simulate", out);
  run(j, "fit", out, "gev");
  {
    std::ofstream t(dir.path() / "other.csv");
    t << "station,index,maximum\nZZZ,0,10\nZZZ,1,20\n";
  }
  j["evaluate"] = {{"models", {"gev"}}, {"test_maxima", "other.csv"}};
  EXPECT_THROW(run(j, "evaluate", out, "shmev", dir.path()), DataError);
  EXPECT_FALSE(fs::exists(out / "evaluate"));
  EXPECT_FALSE(fs::exists(out / "evaluate.partial"));
  EXPECT_THROW(run(tiny_config(), "predict", out), DataError);
  EXPECT_FALSE(fs::exists(out / "predict"));
}

TEST(Pipeline, FitFromDailyRecords) {
  TempDir dir;
  std::ofstream events(dir.path() / "events.csv");
  events << "station,date,prcp_mm,qflag\n";
  std::ofstream cov(dir.path() / "cov.csv");
  cov << "station,lat,lon,alt_m,dist_coast_km\n";
  for (int s = 0; s < 3; ++s) {
    const std::string id = "ST" + std::to_string(s);
    RandomStream rng(40 + s);
    for (int y = 1990; y < 1996; ++y) {
      std::chrono::sys_days day{ingest::Date{std::chrono::year{y}, std::chrono::January, std::chrono::day{1}}};
      for (int t = 0; t < ingest::days_in_year(y); ++t, day += std::chrono::days{1}) {
        const double u = rng.uniform();
        const double v = u < 0.3 ? std::round(10.0 * (-8.0 * std::log(rng.uniform()))) / 10.0 : 0.0;
        events << id << ',' << ingest::format_date(ingest::Date{day}) << ',' << csv::format(v) << ','
               << (s == 2 && y == 1993 && t < 40 ? "X" : "") << '\n';
      }
    }
    cov << id << ',' << 35 + s << ',' << -80 + 0.5 * s << ',' << 100 * s << ',' << 10 + 5 * s << '\n';
  }
  events.close();
  cov.close();
  json j = json::parse(R"({
    "schema_version": 1,
    "data": {"events": "events.csv", "covariates": "cov.csv", "qc": {"min_years": 3},
             "train_years": 3, "covariate_names": ["lat", "alt"], "stations": ["ST0", "ST1"]},
    "prior": {"method": "elicit"},
    "sampler": {"chains": 2, "iterations": 120},
    "predict": {"M_g": 5, "periods": [10]}
  })");
  const auto out = dir.path() / "run";
  run(j, "fit", out, "shmev", dir.path());
  const auto ledger = lines_of(out / "fit_shmev" / "qc_ledger.csv");
  EXPECT_NE(std::find(ledger.begin(), ledger.end(), "ST2,1993,YEAR_MISSING_DAYS,40 missing days"), ledger.end());
  const auto sites = pipeline::read_json(out / "fit_shmev" / "sites.json");
  EXPECT_EQ(sites.at("training").size(), 2u);
  EXPECT_EQ(sites.at("holdout").size(), 1u);
  const auto test = pipeline::read_maxima((out / "fit_shmev" / "test_maxima.csv").string());
  EXPECT_EQ(test.at("ST0").size(), 3u);
  EXPECT_EQ(test.at("ST2").size(), 2u);
  const auto prior = pipeline::read_json(out / "fit_shmev" / "prior.json");
  EXPECT_EQ(prior.at("method"), "elicit");
  const auto m = pipeline::read_json(out / "fit_shmev" / "manifest.json");
  EXPECT_EQ(m.at("inputs").size(), 2u);
  run(j, "predict", out, "shmev", dir.path());
  EXPECT_EQ(lines_of(out / "predict" / "quantiles.csv").size(), 4u);

  j["data"]["test_include_training"] = true;
  j["sampler"]["iterations"] = 20;
  run(j, "fit", dir.path() / "full", "gev", dir.path());
  const auto full = pipeline::read_maxima((dir.path() / "full" / "fit_gev" / "test_maxima.csv").string());
  EXPECT_EQ(full.at("ST0").size(), 6u);
  EXPECT_EQ(full.at("ST2").size(), 5u);
}

namespace {

struct Outcome {
  int code;
  std::string err;
};

Outcome cli(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(SHMEV_CLI) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, pipeline::read_file(err)};
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump();
}

}  // namespace

TEST(Cli, ExitCodesAndErrorReports) {
  TempDir dir;
  const auto& d = dir.path();
  auto bad = tiny_config();
  bad["predict"]["M_g"] = -3;
  write_json_file(d / "bad.json", bad);
  auto r = cli("simulate --config " + (d / "bad.json").string() + " --out " + (d / "run").string(), d);
  EXPECT_EQ(r.code, 2);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err.at("status"), "error");
  EXPECT_EQ(err.at("exit_code"), 2);
  EXPECT_FALSE(fs::exists(d / "run"));

  write_json_file(d / "ok.json", tiny_config());
  EXPECT_EQ(cli("fit --config " + (d / "ok.json").string() + " --out " + (d / "run").string(), d).code, 3);
  EXPECT_EQ(cli("simulate --config " + (d / "missing.json").string(), d).code, 2);
  EXPECT_EQ(cli("simulate", d).code, 2);
  EXPECT_EQ(cli("simulate --config " + (d / "ok.json").string() + " --seed 5 --out " + (d / "run").string(), d).code, 0);
  EXPECT_EQ(pipeline::read_json(d / "run" / "simulate" / "manifest.json").at("seed"), 5);

  {
    std::ofstream e(d / "flat.csv");
    e << "station,date,prcp_mm,qflag\n";
    for (int t = 1; t <= 28; ++t) e << "A," << (t < 10 ? "2001-02-0" : "2001-02-") << t << ',' << (t % 2 ? "10" : "10.001") << ",\n";
    std::ofstream c(d / "flat_cov.csv");
    c << "station,lat,lon,alt_m,dist_coast_km\nA,1,2,3,4\n";
  }
  json flat = json::parse(R"({"schema_version": 1,
    "data": {"events": "flat.csv", "covariates": "flat_cov.csv", "qc": {"min_years": 0, "max_missing_days": 366},
             "train_years": 1, "covariate_names": ["lat"]}})");
  write_json_file(d / "flat.json", flat);
  r = cli("fit --model hmev --config " + (d / "flat.json").string() + " --out " + (d / "flat_run").string(), d);
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(json::parse(r.err).at("category"), "numeric");
  EXPECT_FALSE(fs::exists(d / "flat_run" / "fit_hmev"));
  EXPECT_FALSE(fs::exists(d / "flat_run" / "fit_hmev.partial"));
}

TEST(Cli, ConvertsGhcnDaily) {
  TempDir dir;
  std::string line = "USC00310001195001PRCP";
  for (int day = 0; day < 31; ++day) line += "   25   ";
  {
    std::ofstream out(dir.path() / "a.dly");
    out << line << '\n';
  }
  const auto r = cli("convert-ghcn --input " + (dir.path() / "a.dly").string() + " --output " +
                         (dir.path() / "e.csv").string(),
                     dir.path());
  EXPECT_EQ(r.code, 0);
  const auto rows = lines_of(dir.path() / "e.csv");
  ASSERT_EQ(rows.size(), 32u);
  EXPECT_EQ(rows[1], "USC00310001,1950-01-01,2.5,");
}
