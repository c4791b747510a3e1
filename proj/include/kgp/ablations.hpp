#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgp/chem.hpp"
#include "kgp/graph.hpp"
#include "kgp/io.hpp"
#include "kgp/metrics.hpp"
#include "kgp/rng.hpp"
#include "kgp/trainer.hpp"

namespace kgp {

/// Within each edge type, permutes destination endpoints with a seeded
/// uniform permutation. Per-type counts and per-source out-degrees are kept.
/// With `rewire`, destinations are instead drawn uniformly from the
/// destination node set (in-degrees are not kept).
inline HeteroGraph shuffle_edges(const HeteroGraph& g, std::uint64_t seed, bool rewire = false) {
  HeteroGraph out = g;
  auto& sets = out.mutable_edge_sets();
  for (std::size_t k = 0; k < sets.size(); ++k) {
    auto& es = sets[k];
    auto rng = derive_rng(seed, {0xED6E, k});
    const auto n_dst = g.node_count(es.type.dst);
    if (rewire) {
      std::uniform_int_distribution<std::uint32_t> pick(0, n_dst - 1);
      for (auto& d : es.dst) d = pick(rng);
    } else {
      std::shuffle(es.dst.begin(), es.dst.end(), rng);
    }
    finalize_edge_set(es, g.node_count(es.type.src), n_dst);
  }
  return out;
}

/// Replaces the features of every node type not in `exclude` with normal
/// draws matched to each column's mean and standard deviation.
inline HeteroGraph randomize_node_features(const HeteroGraph& g, const std::set<NodeType>& exclude, std::uint64_t seed) {
  HeteroGraph out = g;
  for (auto t : kAllNodeTypes) {
    if (exclude.count(t) || !g.has_features(t) || g.node_count(t) == 0) continue;
    auto& f = out.mutable_features(t);
    const auto w = f.width();
    const auto n = static_cast<std::size_t>(f.rows);
    std::vector<double> mean(w, 0.0), sd(w, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < w; ++k) mean[k] += f.values[i * w + k];
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < w; ++k) {
        const double d = f.values[i * w + k] - mean[k];
        sd[k] += d * d;
      }
    for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n));
    auto rng = derive_rng(seed, {0xFEA7, index_of(t)});
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < w; ++k) f.values[i * w + k] = static_cast<float>(mean[k] + sd[k] * z(rng));
  }
  return out;
}

enum class Ablation { none, edge_shuffle, node_randomize };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::edge_shuffle: return "edge_shuffle";
    case Ablation::node_randomize: return "node_randomize";
  }
  return "?";
}

inline Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::none;
  if (s == "edge_shuffle") return Ablation::edge_shuffle;
  if (s == "node_randomize") return Ablation::node_randomize;
  throw Error(Errc::ParamDomain, "unknown ablation " + std::string(s));
}

inline HeteroGraph apply_ablation(const HeteroGraph& g, Ablation a, std::uint64_t seed) {
  switch (a) {
    case Ablation::none: return g;
    case Ablation::edge_shuffle: return shuffle_edges(g, seed);
    case Ablation::node_randomize: return randomize_node_features(g, {NodeType::drug, NodeType::cell}, seed);
  }
  return g;
}

struct MatrixCell {
  Architecture model = Architecture::mlp;
  std::string split;
  Ablation ablation = Ablation::none;
  TrainResult result;
  std::vector<metrics::SampleMetric> test_metrics;  // best checkpoint on the test samples
  double pearson_mean = 0;
  double deg_mean = 0;
  double deg_ci_lo = 0;
  double deg_ci_hi = 0;
  double p_vs_mlp = 1;
};

struct MatrixOptions {
  std::size_t bootstrap_iters = 1000;
  std::uint64_t bootstrap_seed = 0;
  std::uint64_t ablation_seed = 0;
  std::function<void(const MatrixCell&)> on_cell;  // progress hook
};

/// The graph a checkpoint was trained against: the dataset graph with the
/// recorded ablation applied (GAT runs only).
inline HeteroGraph graph_for(const TrainConfig& cfg, const HeteroGraph& g) {
  if (cfg.model.architecture != Architecture::gat) return g;
  return apply_ablation(g, parse_ablation(cfg.ablation), cfg.ablation_seed);
}

/// Scores the checkpoint on the test samples of `split`.
inline std::vector<metrics::SampleMetric> score_checkpoint(const ModelCheckpoint& ck, const TrainConfig& cfg, const PerturbationData& data,
                                                           const HeteroGraph& g, const SplitSamples& split) {
  auto model = model_from_checkpoint<float>(ck);
  return evaluate_epoch(*model, g, data, split.test, cfg);
}

/// Runs one condition: ablate the graph (GAT only), train, and score the
/// selected checkpoint.
inline MatrixCell run_cell(const TrainConfig& base, const PerturbationData& data, const chem::SplitAssignment& split,
                           Architecture model, Ablation ablation, std::uint64_t ablation_seed) {
  MatrixCell cell;
  cell.model = model;
  cell.split = split.mode;
  cell.ablation = ablation;
  TrainConfig cfg = base;
  cfg.model.architecture = model;
  cfg.model.input_widths.clear();
  cfg.model.relations.clear();
  cfg.split_mode = split.mode;
  cfg.ablation = to_string(ablation);
  cfg.ablation_seed = ablation_seed;
  const auto g = apply_ablation(data.graph, model == Architecture::gat ? ablation : Ablation::none, ablation_seed);
  const auto samples = partition_samples(data, split);
  cell.result = train(cfg, data, g, samples);
  cell.test_metrics = score_checkpoint(cell.result.checkpoint, cfg, data, g, samples);
  cell.pearson_mean = metrics::mean_of(cell.test_metrics, &metrics::SampleMetric::pearson);
  cell.deg_mean = metrics::mean_of(cell.test_metrics, &metrics::SampleMetric::deg);
  return cell;
}

/// {mlp, mlp_targets, gat} x {scaffold, random} plus edge-shuffle and
/// node-randomization GAT runs per split: 10 rows. The CI is the bootstrap
/// interval of the mean DEG correlation; p compares against the MLP row of
/// the same split.
inline std::vector<MatrixCell> run_matrix(const TrainConfig& base, const PerturbationData& data,
                                          const std::vector<chem::SplitAssignment>& splits, const MatrixOptions& opt = {}) {
  std::vector<MatrixCell> cells;
  for (const auto& split : splits) {
    const std::size_t first = cells.size();
    const std::pair<Architecture, Ablation> plan[] = {{Architecture::mlp, Ablation::none},
                                                      {Architecture::mlp_targets, Ablation::none},
                                                      {Architecture::gat, Ablation::none},
                                                      {Architecture::gat, Ablation::edge_shuffle},
                                                      {Architecture::gat, Ablation::node_randomize}};
    for (auto [m, a] : plan) {
      auto cell = run_cell(base, data, split, m, a, opt.ablation_seed);
      auto deg = metrics::column(cell.test_metrics, &metrics::SampleMetric::deg);
      std::vector<double> zeros(deg.size(), 0.0);
      auto ci = metrics::paired_bootstrap(deg, zeros, opt.bootstrap_iters, opt.bootstrap_seed);
      cell.deg_ci_lo = ci.ci_lo;
      cell.deg_ci_hi = ci.ci_hi;
      if (cells.size() > first) {
        auto mlp = metrics::column(cells[first].test_metrics, &metrics::SampleMetric::deg);
        cell.p_vs_mlp = metrics::paired_bootstrap(deg, mlp, opt.bootstrap_iters, opt.bootstrap_seed).p_one_sided;
      } else {
        cell.p_vs_mlp = 1.0;
      }
      if (opt.on_cell) opt.on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

inline void write_matrix(const std::filesystem::path& path, const std::vector<MatrixCell>& cells) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : cells)
    rows.push_back({to_string(c.model), c.split, to_string(c.ablation), io::fmt_real(c.pearson_mean), io::fmt_real(c.deg_mean),
                    io::fmt_real(c.deg_ci_lo), io::fmt_real(c.deg_ci_hi), io::fmt_real(c.p_vs_mlp)});
  io::write_tsv(path, {"model", "split", "ablation", "pearson_mean", "deg_mean", "deg_ci_lo", "deg_ci_hi", "p_vs_mlp"}, rows, ',');
}

}  // namespace kgp
