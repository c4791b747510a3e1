#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgp/error.hpp"
#include "kgp/graph.hpp"
#include "kgp/io.hpp"
#include "kgp/rng.hpp"
#include "kgp/tensor.hpp"

namespace kgp {

struct PerturbationSample {
  std::uint32_t drug = 0;  // drug node index
  std::uint32_t cell = 0;  // cell node index
  std::uint32_t row = 0;   // row of the observed expression matrix
};

/// Graph plus supervised samples and per-cell baselines, loaded from a
/// dataset directory described by manifest.json.
struct PerturbationData {
  HeteroGraph graph;
  std::vector<PerturbationSample> samples;
  Matrix<float> expression;  // [S, G] observed perturbed expression
  Matrix<float> baselines;   // [n_cells, G], row = cell node index
  std::vector<bool> has_baseline;
  std::filesystem::path dir;

  std::size_t genes() const { return expression.cols; }

  std::span<const float> observed(const PerturbationSample& s) const { return expression.row(s.row); }
  std::span<const float> baseline(std::uint32_t cell) const { return baselines.row(cell); }
};

inline Matrix<float> to_matrix(const io::NdfMatrix& m) {
  return Matrix<float>(m.rows, m.width(), m.values);
}

inline PerturbationData load_dataset(const std::filesystem::path& dir, std::filesystem::path manifest_name = "manifest.json") {
  PerturbationData d;
  d.dir = dir;
  const auto manifest_path = dir / manifest_name;
  d.graph = load_graph(manifest_path);
  auto m = read_manifest(manifest_path);
  auto path_of = [&](const char* key, const char* fallback) {
    return dir / (m.extra.contains(key) ? m.extra[key].get<std::string>() : std::string(fallback));
  };

  auto expr = io::read_ndf(path_of("expression", "samples.ndf"));
  d.expression = to_matrix(expr);
  for (float v : d.expression.data)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteFeature, "observed expression contains non-finite values");
  const auto G = d.expression.cols;

  auto base = to_matrix(io::read_ndf(path_of("baseline_matrix", "baselines.ndf")));
  if (base.cols != G)
    throw Error(Errc::WidthMismatch, "baselines have " + std::to_string(base.cols) + " genes, samples have " + std::to_string(G));
  const auto n_cells = d.graph.node_count(NodeType::cell);
  d.baselines = Matrix<float>(n_cells, G);
  d.has_baseline.assign(n_cells, false);
  auto base_index = io::read_tsv(path_of("baselines", "baselines.tsv"), {"cell_id", "row"});
  for (const auto& r : base_index.rows) {
    auto ref = d.graph.find_node(r[0]);
    if (!ref || ref->type != NodeType::cell) throw Error(Errc::UnknownId, "baseline cell " + r[0]);
    auto row = std::stoul(r[1]);
    if (row >= base.rows) throw Error(Errc::Format, "baseline row " + r[1] + " out of range");
    std::copy(base.row(row).begin(), base.row(row).end(), d.baselines.row(ref->index).begin());
    d.has_baseline[ref->index] = true;
  }
  for (float v : d.baselines.data)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteFeature, "baselines contain non-finite values");

  auto samples = io::read_tsv(path_of("samples", "samples.tsv"), {"drug_id", "cell_id", "row"});
  for (const auto& r : samples.rows) {
    auto drug = d.graph.find_node(r[0]);
    if (!drug || drug->type != NodeType::drug) throw Error(Errc::UnknownId, "sample drug " + r[0]);
    auto cell = d.graph.find_node(r[1]);
    if (!cell || cell->type != NodeType::cell) throw Error(Errc::UnknownId, "sample cell " + r[1]);
    if (!d.has_baseline[cell->index]) throw Error(Errc::UnknownId, "no baseline for cell " + r[1]);
    auto row = static_cast<std::uint32_t>(std::stoul(r[2]));
    if (row >= d.expression.rows) throw Error(Errc::Format, "sample row " + r[2] + " out of range");
    d.samples.push_back({drug->index, cell->index, row});
  }
  return d;
}

/// Sampled in-edges of one relation at one hop, as local node indices.
struct SampledEdges {
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;

  std::size_t size() const { return src.size(); }
};

struct SampledSubgraph {
  std::vector<Relation> relations;
  std::vector<std::uint32_t> seeds;  // drug node indices; seed i has drug-local index i
  std::array<std::vector<std::uint32_t>, kNodeTypeCount> nodes;  // local -> global
  std::vector<std::vector<SampledEdges>> hops;  // [hop][relation]

  std::uint32_t node_count(NodeType t) const { return static_cast<std::uint32_t>(nodes[index_of(t)].size()); }

  std::uint32_t global(NodeType t, std::uint32_t local) const { return nodes[index_of(t)].at(local); }

  /// Edges of relation `r` across all hops.
  SampledEdges edges(std::size_t r) const {
    SampledEdges out;
    for (const auto& hop : hops) {
      out.src.insert(out.src.end(), hop[r].src.begin(), hop[r].src.end());
      out.dst.insert(out.dst.end(), hop[r].dst.begin(), hop[r].dst.end());
    }
    return out;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& hop : hops)
      for (const auto& e : hop) n += e.size();
    return n;
  }
};

/// Layer-wise sampling toward the seeds: at hop h every node discovered at
/// hop h-1 keeps at most fanouts[h] in-edges per relation, drawn without
/// replacement. Multi-edges are distinct candidates.
inline SampledSubgraph sample_neighbors(const HeteroGraph& g, std::span<const std::uint32_t> seed_drugs,
                                        std::span<const std::size_t> fanouts, std::uint64_t seed) {
  SampledSubgraph sg;
  sg.relations = g.relations();
  std::array<std::unordered_map<std::uint32_t, std::uint32_t>, kNodeTypeCount> local;
  auto intern = [&](NodeType t, std::uint32_t global, std::vector<NodeRef>* fresh) {
    auto& m = local[index_of(t)];
    auto [it, inserted] = m.emplace(global, static_cast<std::uint32_t>(sg.nodes[index_of(t)].size()));
    if (inserted) {
      sg.nodes[index_of(t)].push_back(global);
      if (fresh) fresh->push_back({t, global});
    }
    return it->second;
  };

  std::vector<NodeRef> frontier;
  for (auto s : seed_drugs) {
    if (s >= g.node_count(NodeType::drug)) throw Error(Errc::MissingSeedNode, "drug index " + std::to_string(s));
    auto before = sg.nodes[index_of(NodeType::drug)].size();
    intern(NodeType::drug, s, &frontier);
    if (sg.nodes[index_of(NodeType::drug)].size() > before) sg.seeds.push_back(s);
  }

  auto rng = derive_rng(seed, {0x5A3D});
  std::vector<std::uint32_t> positions, chosen;
  for (std::size_t fanout : fanouts) {
    std::vector<SampledEdges> hop(sg.relations.size());
    std::vector<NodeRef> next;
    for (const auto& v : frontier) {
      const auto dst_local = local[index_of(v.type)].at(v.index);
      for (std::size_t r = 0; r < sg.relations.size(); ++r) {
        const auto& rel = sg.relations[r];
        if (rel.target != v.type) continue;
        auto nbrs = g.in_neighbors(rel, v.index);
        if (nbrs.empty()) continue;
        positions.resize(nbrs.size());
        std::iota(positions.begin(), positions.end(), 0u);
        chosen.clear();
        if (nbrs.size() <= fanout) {
          chosen = positions;
        } else {
          std::sample(positions.begin(), positions.end(), std::back_inserter(chosen), fanout, rng);
        }
        for (auto p : chosen) {
          auto src_local = intern(rel.source, nbrs[p], &next);
          hop[r].src.push_back(src_local);
          hop[r].dst.push_back(dst_local);
        }
      }
    }
    sg.hops.push_back(std::move(hop));
    frontier = std::move(next);
  }
  return sg;
}

/// Seeded shuffle then contiguous chunks; the last chunk may be short.
inline std::vector<std::vector<std::uint32_t>> make_batches(std::span<const std::uint32_t> items, std::size_t batch_size,
                                                            std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw Error(Errc::ParamDomain, "batch_size must be positive");
  std::vector<std::uint32_t> order(items.begin(), items.end());
  auto rng = derive_rng(shuffle_seed, {0xBA7C});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  return out;
}

}  // namespace kgp
