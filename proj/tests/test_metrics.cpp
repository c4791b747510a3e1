#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "kgp/metrics.hpp"
#include "kgp/rng.hpp"

using namespace kgp;
using metrics::deg_correlation;
using metrics::paired_bootstrap;
using metrics::pearson;

namespace {

// textbook two-pass formula, independent of the library
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

std::vector<double> normals(std::size_t n, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> z(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

}  // namespace

TEST(Pearson, Examples) {
  EXPECT_DOUBLE_EQ(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-15);
}

TEST(Pearson, DegenerateVarianceIsZero) {
  EXPECT_EQ(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), 0.0);
  EXPECT_EQ(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5}), 0.0);
}

TEST(Pearson, Errors) {
  try {
    pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
}

TEST(Pearson, MatchesOracleOnRandomPairs) {
  Rng rng(1);
  std::uniform_int_distribution<std::size_t> len(2, 200);
  for (int i = 0; i < 1000; ++i) {
    const auto n = len(rng);
    auto x = normals(n, 1000 + i);
    auto y = normals(n, 5000 + i);
    for (std::size_t k = 0; k < n; ++k) y[k] += 0.5 * x[k];
    EXPECT_NEAR(pearson(x, y), pearson_oracle(x, y), 1e-10);
  }
}

TEST(Pearson, AffineInvariance) {
  auto x = normals(100, 2);
  auto y = normals(100, 3);
  const double r = pearson(x, y);
  for (double a : {0.01, 1.0, 7.5, 1e3}) {
    std::vector<double> ax(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ax[i] = a * x[i] - 3.0;
    EXPECT_NEAR(pearson(ax, y), r, 1e-12);
  }
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
}

TEST(DegCorrelation, SelectsLargestAbsoluteDelta) {
  std::vector<double> base{0, 0, 0, 0};
  std::vector<double> obs{0.1, -5, 3, 0.05};
  auto idx = metrics::top_k_perturbed<double>(obs, base, 2);
  EXPECT_EQ(idx, (std::vector<std::size_t>{1, 2}));
}

TEST(DegCorrelation, TiesGoToLowerIndex) {
  std::vector<double> base{0, 0, 0, 0};
  std::vector<double> obs{1, -2, 2, 1};
  EXPECT_EQ(metrics::top_k_perturbed<double>(obs, base, 3), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(DegCorrelation, PerfectPredictionIsOne) {
  auto obs = normals(64, 4);
  auto base = normals(64, 5);
  for (std::size_t k : {2u, 10u, 50u, 64u}) EXPECT_NEAR(deg_correlation<double>(obs, obs, base, k), 1.0, 1e-15);
}

TEST(DegCorrelation, FullKEqualsPearson) {
  for (int s = 0; s < 50; ++s) {
    auto pred = normals(64, 100 + s);
    auto obs = normals(64, 200 + s);
    auto base = normals(64, 300 + s);
    EXPECT_EQ(deg_correlation<double>(pred, obs, base, 64), pearson(pred, obs));
  }
}

TEST(DegCorrelation, MatchesOracleOnSubset) {
  auto pred = normals(64, 6);
  auto obs = normals(64, 7);
  auto base = normals(64, 8);
  std::vector<std::pair<double, std::size_t>> mag;
  for (std::size_t i = 0; i < 64; ++i) mag.push_back({-std::abs(obs[i] - base[i]), i});
  std::sort(mag.begin(), mag.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 20; ++i) idx.push_back(mag[i].second);
  std::sort(idx.begin(), idx.end());
  std::vector<double> p, o;
  for (auto i : idx) p.push_back(pred[i]), o.push_back(obs[i]);
  EXPECT_NEAR(deg_correlation<double>(pred, obs, base, 20), pearson_oracle(p, o), 1e-12);
}

TEST(DegCorrelation, KTooLarge) {
  std::vector<double> v{1, 2, 3};
  try {
    deg_correlation<double>(v, v, v, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::KTooLarge);
  }
}

TEST(Bootstrap, IdenticalInputs) {
  auto a = normals(30, 9);
  auto r = paired_bootstrap(a, a, 1000, 1);
  EXPECT_EQ(r.mean_diff, 0.0);
  EXPECT_EQ(r.ci_lo, 0.0);
  EXPECT_EQ(r.ci_hi, 0.0);
  EXPECT_EQ(r.p_one_sided, 1.0);
}

TEST(Bootstrap, ConstantShift) {
  // dyadic values keep every resampled mean exactly 1
  std::vector<double> b{0.5, -1.25, 2.0, 0.75, 3.5, -0.5, 1.0, 0.25};
  std::vector<double> a(b);
  for (auto& x : a) x += 1.0;
  auto r = paired_bootstrap(a, b, 1000, 2);
  EXPECT_EQ(r.mean_diff, 1.0);
  EXPECT_EQ(r.ci_lo, 1.0);
  EXPECT_EQ(r.ci_hi, 1.0);
  EXPECT_DOUBLE_EQ(r.p_one_sided, 1.0 / 1001.0);
}

TEST(Bootstrap, SeededDeterminism) {
  auto a = normals(40, 10);
  auto b = normals(40, 11);
  auto r1 = paired_bootstrap(a, b, 500, 7);
  auto r2 = paired_bootstrap(a, b, 500, 7);
  EXPECT_EQ(r1.ci_lo, r2.ci_lo);
  EXPECT_EQ(r1.ci_hi, r2.ci_hi);
  EXPECT_EQ(r1.p_one_sided, r2.p_one_sided);
  auto r3 = paired_bootstrap(a, b, 500, 8);
  EXPECT_NE(r1.ci_lo, r3.ci_lo);
}

TEST(Bootstrap, CiBracketsMean) {
  for (int s = 0; s < 20; ++s) {
    auto a = normals(25, 400 + s, 0.1);
    auto b = normals(25, 500 + s);
    auto r = paired_bootstrap(a, b, 400, s);
    EXPECT_LE(r.ci_lo, r.ci_hi);
    EXPECT_LE(r.ci_lo, r.mean_diff);
    EXPECT_GE(r.ci_hi, r.mean_diff);
    EXPECT_GT(r.p_one_sided, 0.0);
    EXPECT_LE(r.p_one_sided, 1.0);
  }
}

TEST(Bootstrap, AgreesWithHighIterationReference) {
  auto a = normals(50, 12, 0.15);
  auto b = normals(50, 13);
  // reference: 100000 resamples from a separate generator
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  std::mt19937 gen(2024);
  std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
  std::size_t le = 0;
  const std::size_t N = 100000;
  for (std::size_t it = 0; it < N; ++it) {
    double acc = 0;
    for (std::size_t k = 0; k < d.size(); ++k) acc += d[pick(gen)];
    if (acc <= 0) ++le;
  }
  const double p_ref = static_cast<double>(le + 1) / static_cast<double>(N + 1);
  ASSERT_GT(p_ref, 0.05);
  ASSERT_LT(p_ref, 0.95);
  auto r = paired_bootstrap(a, b, 1000, 3);
  EXPECT_NEAR(r.p_one_sided, p_ref, 0.02);
}

TEST(Bootstrap, LengthMismatch) {
  try {
    paired_bootstrap(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}, 10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
}

TEST(MetricTable, RoundTrip) {
  std::vector<metrics::SampleMetric> rows{{"d0", "c0", 0.1234567890123, -0.5}, {"d1", "c1", 1.0 / 3.0, 0.0}};
  auto path = std::filesystem::temp_directory_path() / "kgp_test_metrics.csv";
  metrics::write_metric_table(path, rows);
  auto back = metrics::read_metric_table(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].drug_id, rows[i].drug_id);
    EXPECT_EQ(back[i].cell_id, rows[i].cell_id);
    EXPECT_EQ(back[i].pearson, rows[i].pearson);
    EXPECT_EQ(back[i].deg, rows[i].deg);
  }
  std::filesystem::remove(path);
}
