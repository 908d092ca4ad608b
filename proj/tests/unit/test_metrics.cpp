#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>

#include "shmev/metrics.hpp"
#include "shmev/random.hpp"

using namespace shmev;
using namespace shmev::metrics;

namespace {

// Per-draw quantiles given directly for each probability.
struct Fixed {
  std::function<std::vector<double>(double)> at;
  [[nodiscard]] std::vector<std::vector<double>> draw_quantiles(std::span<const double> probs) const {
    std::vector<std::vector<double>> out;
    for (double p : probs) out.push_back(at(p));
    return out;
  }
};

}  // namespace

TEST(ReturnTimes, SingleMaximum) {
  const std::vector<double> y = {12.0};
  const auto rt = empirical_return_times(y);
  EXPECT_DOUBLE_EQ(rt[0].prob, 0.5);
  EXPECT_DOUBLE_EQ(rt[0].period, 2.0);
}

TEST(ReturnTimes, RankArithmetic) {
  const std::vector<double> y = {5.0, 9.0, 7.0};
  const auto rt = empirical_return_times(y);
  EXPECT_DOUBLE_EQ(rt[0].prob, 0.25);
  EXPECT_DOUBLE_EQ(rt[1].prob, 0.75);
  EXPECT_DOUBLE_EQ(rt[2].prob, 0.5);
  EXPECT_DOUBLE_EQ(rt[0].period, 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(rt[1].period, 4.0);
  EXPECT_DOUBLE_EQ(rt[2].period, 2.0);
}

TEST(ReturnTimes, HundredYearsMaxPeriod) {
  std::vector<double> y(100);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>((i * 37) % 100);
  const auto rt = empirical_return_times(y);
  double max_t = 0.0;
  for (const auto& r : rt) max_t = std::max(max_t, r.period);
  EXPECT_DOUBLE_EQ(max_t, 101.0);
}

TEST(ReturnTimes, TiesShareAverageRank) {
  const std::vector<double> y = {3.0, 8.0, 3.0, 1.0};
  const auto rt = empirical_return_times(y);
  EXPECT_DOUBLE_EQ(rt[0].prob, 2.5 / 5.0);
  EXPECT_DOUBLE_EQ(rt[2].prob, 2.5 / 5.0);
  EXPECT_DOUBLE_EQ(rt[3].prob, 0.2);
  EXPECT_DOUBLE_EQ(rt[1].prob, 0.8);
}

TEST(Metrics, PerfectPredictorScoresZero) {
  const std::vector<double> y = {10.0, 20.0};
  const auto m = score({{10.0, 10.0}, {20.0, 20.0}}, y, 5, 2.0);
  EXPECT_EQ(*m.fse, 0.0);
  EXPECT_EQ(*m.bias, 0.0);
  EXPECT_EQ(*m.width, 0.0);
}

TEST(Metrics, ConstantRelativeError) {
  const std::vector<double> y = {10.0, 40.0};
  const auto m = score({{11.0, 11.0, 11.0}, {44.0, 44.0, 44.0}}, y, 3, 2.0);
  EXPECT_NEAR(*m.fse, 0.1, 1e-12);
  EXPECT_NEAR(*m.bias, 0.1, 1e-12);
  EXPECT_NEAR(*m.width, 0.0, 1e-12);
}

TEST(Metrics, SymmetricTwoDrawErrors) {
  const std::vector<double> y = {50.0};
  const auto m = score({{45.0, 55.0}}, y, 10, 2.0);
  EXPECT_NEAR(*m.fse, 0.1, 1e-12);
  EXPECT_NEAR(*m.bias, 0.0, 1e-12);
}

TEST(Metrics, WidthFromEmpiricalBand) {
  std::vector<double> q(101);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<double>(i);
  const std::vector<double> y = {50.0};
  const auto m = score({q}, y, 1, 2.0);
  EXPECT_NEAR(*m.width, 95.0 - 5.0, 1e-12);
}

TEST(Metrics, NoQualifyingYearsIsAbsent) {
  const std::vector<double> y = {10.0};
  const Fixed f{[](double) { return std::vector<double>{10.0}; }};
  const auto m = evaluate_site(f, y, 2.0);
  EXPECT_EQ(m.m_T, 0u);
  EXPECT_FALSE(m.fse.has_value());
  EXPECT_FALSE(m.bias.has_value());
  EXPECT_FALSE(m.width.has_value());
}

TEST(Metrics, ThresholdIsStrict) {
  const std::vector<double> y = {5.0, 9.0, 7.0};
  const Fixed f{[](double) { return std::vector<double>{8.0}; }};
  EXPECT_EQ(evaluate_site(f, y, 2.0).m_T, 1u);
  EXPECT_EQ(evaluate_site(f, y, 1.0).m_T, 3u);
}

TEST(Metrics, Properties) {
  RandomStream rng(5);
  std::vector<double> y(60);
  for (double& v : y) v = 20.0 + 10.0 * rng.uniform();
  const Fixed f{[](double p) {
    std::vector<double> q;
    for (int b = 0; b < 30; ++b) q.push_back(18.0 + 12.0 * p + 0.3 * b);
    return q;
  }};
  const Fixed f_cm{[&](double p) {
    auto q = f.at(p);
    for (double& v : q) v /= 10.0;
    return q;
  }};
  std::vector<double> y_cm = y;
  for (double& v : y_cm) v /= 10.0;
  const auto a = evaluate_site(f, y, 2.0);
  const auto b = evaluate_site(f_cm, y_cm, 2.0);
  EXPECT_GE(*a.fse, std::abs(*a.bias));
  EXPECT_GE(*a.width, 0.0);
  EXPECT_NEAR(*a.fse, *b.fse, 1e-12);
  EXPECT_NEAR(*a.bias, *b.bias, 1e-12);
  EXPECT_NEAR(*a.width / 10.0, *b.width, 1e-12);
  std::size_t previous = y.size() + 1;
  for (double t : {1.0, 2.0, 5.0, 10.0, 30.0, 100.0}) {
    const auto m = evaluate_site(f, y, t);
    EXPECT_LE(m.m_T, previous);
    EXPECT_LE(m.m_T, m.M_x);
    previous = m.m_T;
  }
}

TEST(Metrics, ReportHasMedianRows) {
  std::vector<ReportRow> rows;
  for (int s = 0; s < 3; ++s) {
    SiteMetrics m;
    m.fse = 0.1 * (s + 1);
    m.bias = -0.01 * s;
    m.width = 5.0 + s;
    m.m_T = 40 + static_cast<std::size_t>(s);
    rows.push_back({"S" + std::to_string(s), "shmev", m});
  }
  rows.push_back({"S0", "gev", SiteMetrics{}});
  const auto path = (std::filesystem::temp_directory_path() / "shmev_report.csv").string();
  write_report(rows, path);
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "site,model,fse,bias,width,m_T");
  EXPECT_EQ(lines[4], "S0,gev,NA,NA,NA,0");
  EXPECT_EQ(lines[5], "median,shmev,0.2,-0.01,6,41");
  EXPECT_EQ(lines[6], "median,gev,NA,NA,NA,0");
  std::filesystem::remove(path);
}
