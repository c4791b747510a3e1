#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/io.hpp"
#include "kgp/rng.hpp"

namespace kgp::metrics {

/// Product-moment correlation with float64 accumulation. Zero variance on
/// either side gives 0.
template <class A, class B>
double pearson(std::span<const A> x, std::span<const B> y) {
  if (x.size() != y.size()) throw Error(Errc::LengthMismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  if (x.size() < 2) throw Error(Errc::ParamDomain, "pearson needs at least 2 values");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += static_cast<double>(x[i]);
    my += static_cast<double>(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = static_cast<double>(x[i]) - mx;
    const double dy = static_cast<double>(y[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

template <class A, class B>
double pearson(const std::vector<A>& x, const std::vector<B>& y) {
  return pearson(std::span<const A>(x), std::span<const B>(y));
}

/// Indices of the k largest |obs - baseline|, ties to the lower index,
/// returned in ascending index order.
template <class T>
std::vector<std::size_t> top_k_perturbed(std::span<const T> obs, std::span<const T> baseline, std::size_t k) {
  if (obs.size() != baseline.size()) throw Error(Errc::LengthMismatch, "observed vs baseline");
  if (k > obs.size()) throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " > G=" + std::to_string(obs.size()));
  std::vector<std::size_t> idx(obs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto mag = [&](std::size_t i) { return std::abs(static_cast<double>(obs[i]) - static_cast<double>(baseline[i])); };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return mag(a) > mag(b); });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class T>
double deg_correlation(std::span<const T> pred, std::span<const T> obs, std::span<const T> baseline, std::size_t k = 50) {
  if (pred.size() != obs.size()) throw Error(Errc::LengthMismatch, "pred vs observed");
  auto idx = top_k_perturbed(obs, baseline, k);
  std::vector<double> p, o;
  for (auto i : idx) {
    p.push_back(static_cast<double>(pred[i]));
    o.push_back(static_cast<double>(obs[i]));
  }
  return pearson(p, o);
}

struct BootstrapResult {
  double mean_diff = 0;
  double ci_lo = 0;
  double ci_hi = 0;
  double p_one_sided = 1;
  std::size_t iters = 0;

  nlohmann::json to_json(const std::string& a = "a", const std::string& b = "b") const {
    return {{"model_a", a}, {"model_b", b}, {"mean_diff", mean_diff}, {"ci95", {ci_lo, ci_hi}}, {"p", p_one_sided}, {"iters", iters}};
  }
};

/// Linear-interpolated percentile of sorted data, q in [0, 1].
inline double percentile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return 0;
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + (s[hi] - s[lo]) * frac;
}

/// Paired bootstrap of mean(a) - mean(b). Each iteration draws S indices with
/// replacement from its own derived stream. p = (1 + #{diff <= 0}) / (iters + 1).
inline BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, std::size_t iters, std::uint64_t seed) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.size() < 2) throw Error(Errc::ParamDomain, "bootstrap needs at least 2 paired samples");
  if (iters == 0) throw Error(Errc::ParamDomain, "iters must be positive");
  const std::size_t S = a.size();
  std::vector<double> d(S);
  for (std::size_t i = 0; i < S; ++i) d[i] = a[i] - b[i];

  BootstrapResult r;
  r.iters = iters;
  r.mean_diff = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(S);
  std::vector<double> diffs(iters);
  std::size_t non_positive = 0;
  for (std::size_t it = 0; it < iters; ++it) {
    auto rng = derive_rng(seed, {it});
    std::uniform_int_distribution<std::size_t> pick(0, S - 1);
    double acc = 0;
    for (std::size_t k = 0; k < S; ++k) acc += d[pick(rng)];
    diffs[it] = acc / static_cast<double>(S);
    if (diffs[it] <= 0) ++non_positive;
  }
  std::sort(diffs.begin(), diffs.end());
  r.ci_lo = percentile_sorted(diffs, 0.025);
  r.ci_hi = percentile_sorted(diffs, 0.975);
  r.p_one_sided = static_cast<double>(1 + non_positive) / static_cast<double>(iters + 1);
  return r;
}

inline BootstrapResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b, std::size_t iters, std::uint64_t seed) {
  return paired_bootstrap(std::span<const double>(a), std::span<const double>(b), iters, seed);
}

struct SampleMetric {
  std::string drug_id;
  std::string cell_id;
  double pearson = 0;
  double deg = 0;
};

inline double mean_of(const std::vector<SampleMetric>& rows, double SampleMetric::*field) {
  if (rows.empty()) return 0;
  double s = 0;
  for (const auto& r : rows) s += r.*field;
  return s / static_cast<double>(rows.size());
}

inline std::vector<double> column(const std::vector<SampleMetric>& rows, double SampleMetric::*field) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

inline void write_metric_table(const std::filesystem::path& path, const std::vector<SampleMetric>& rows) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.push_back({std::to_string(i), rows[i].drug_id, rows[i].cell_id, io::fmt_real(rows[i].pearson), io::fmt_real(rows[i].deg)});
  io::write_tsv(path, {"sample", "drug_id", "cell_id", "pearson", "deg"}, out, ',');
}

inline std::vector<SampleMetric> read_metric_table(const std::filesystem::path& path) {
  auto text = io::read_text(path);
  std::vector<SampleMetric> rows;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no++ == 0) {
      if (line != "sample,drug_id,cell_id,pearson,deg") throw Error(Errc::Format, path.string() + ": unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    auto f = io::split_tabs(line, ',');
    if (f.size() != 5) throw Error(Errc::Format, path.string() + " line " + std::to_string(line_no) + ": expected 5 fields");
    rows.push_back({f[1], f[2], std::stod(f[3]), std::stod(f[4])});
  }
  return rows;
}

}  // namespace kgp::metrics
