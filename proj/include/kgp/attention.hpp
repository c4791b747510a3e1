#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/graph.hpp"
#include "kgp/io.hpp"
#include "kgp/models.hpp"
#include "kgp/rng.hpp"
#include "kgp/sampler.hpp"

namespace kgp {

/// Eval-mode forward over the sampled neighborhoods of `drugs`, in chunks,
/// returning one record per (sampled edge, layer, head).
template <class Real>
std::vector<AttentionRecord> record_attention(const HeteroGat<Real>& model, const HeteroGraph& g, std::span<const std::uint32_t> drugs,
                                              const std::vector<std::size_t>& fanouts, std::size_t chunk, std::uint64_t seed) {
  AttentionSink sink;
  if (chunk == 0) chunk = drugs.size();
  for (std::size_t start = 0, b = 0; start < drugs.size(); start += chunk, ++b) {
    auto ids = drugs.subspan(start, std::min(chunk, drugs.size() - start));
    auto sg = sample_neighbors(g, ids, fanouts, derive_seed(seed, {0xA77E, b}));
    ModelInputs<Real> in;
    in.subgraph = &sg;
    for (std::uint32_t i = 0; i < sg.seeds.size(); ++i) in.seed_rows.push_back(i);
    for (auto t : kAllNodeTypes) {
      const auto& nodes = sg.nodes[index_of(t)];
      if (nodes.empty()) continue;
      const auto& f = g.features(t);
      auto& m = in.node_x[index_of(t)];
      m = Matrix<Real>(nodes.size(), f.width());
      for (std::size_t r = 0; r < nodes.size(); ++r) {
        auto row = f.row(nodes[r]);
        for (std::size_t k = 0; k < row.size(); ++k) m(r, k) = static_cast<Real>(row[k]);
      }
    }
    Tape<Real> tape;
    model.embed_seeds(tape, in, nn::Mode{false, nullptr}, &sink);
  }
  return std::move(sink.records);
}

/// Share of attention mass per source node type over records into
/// destinations of `dst_type`, optionally restricted to one layer.
inline std::map<NodeType, double> aggregate_by_source_type(std::span<const AttentionRecord> records, NodeType dst_type = NodeType::drug,
                                                           std::optional<std::uint32_t> layer = std::nullopt) {
  std::map<NodeType, double> mass;
  double total = 0;
  for (const auto& r : records) {
    if (r.dst.type != dst_type || (layer && r.layer != *layer)) continue;
    mass[r.src.type] += r.weight;
    total += r.weight;
  }
  if (mass.empty() || total <= 0) throw Error(Errc::EmptyRecords, "no attention records into " + std::string(to_string(dst_type)));
  for (auto& [t, m] : mass) m /= total;
  return mass;
}

inline nlohmann::json distribution_json(const std::map<NodeType, double>& d) {
  nlohmann::json j = nlohmann::json::object();
  for (auto& [t, m] : d) j[std::string(to_string(t))] = m;
  return j;
}

/// Rows `scope,source_type,destination_type,mass` for all layers and for the
/// final layer alone.
inline std::string attention_csv(std::span<const AttentionRecord> records, std::uint32_t final_layer, NodeType dst_type = NodeType::drug) {
  std::vector<std::vector<std::string>> rows;
  auto emit = [&](const char* scope, const std::map<NodeType, double>& d) {
    for (auto& [t, m] : d) rows.push_back({scope, std::string(to_string(t)), std::string(to_string(dst_type)), io::fmt_real(m)});
  };
  emit("all_layers", aggregate_by_source_type(records, dst_type));
  emit("final_layer", aggregate_by_source_type(records, dst_type, final_layer));
  return io::format_table({"scope", "source_type", "destination_type", "mass"}, rows, ',');
}

inline void write_attention_csv(const std::filesystem::path& path, std::span<const AttentionRecord> records, std::uint32_t final_layer,
                                NodeType dst_type = NodeType::drug) {
  io::write_text(path, attention_csv(records, final_layer, dst_type));
}

/// Attention-weighted k-hop neighborhood of one drug. Hop h reads the layer
/// whose output feeds hop h-1 (the last layer for hop 1). Each expanded node
/// keeps its top_m in-edges by head-mean weight.
template <class Real>
nlohmann::json khop_reasoning_subgraph(const HeteroGat<Real>& model, const HeteroGraph& g, const std::string& drug_id, std::size_t k,
                                       std::size_t top_m, std::uint64_t seed = 0) {
  auto ref = g.find_node(drug_id);
  if (!ref || ref->type != NodeType::drug) throw Error(Errc::UnknownDrug, drug_id);
  const auto L = model.config().gat_layers;
  if (k < 1 || k > L) throw Error(Errc::ParamDomain, "k must lie in [1, " + std::to_string(L) + "]");
  if (top_m == 0) throw Error(Errc::ParamDomain, "top_m must be positive");

  const std::uint32_t seeds[] = {ref->index};
  std::vector<std::size_t> all(L, std::numeric_limits<std::size_t>::max());
  auto records = record_attention(model, g, std::span<const std::uint32_t>(seeds), all, 0, seed);

  struct EdgeAgg {
    std::vector<double> alpha;
    const AttentionRecord* rec = nullptr;
  };
  using EdgeKey = std::tuple<NodeRef, std::string>;  // (source, relation)
  const std::size_t H = model.config().heads;

  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json hops = nlohmann::json::array();
  std::set<NodeRef> seen{*ref};
  auto add_node = [&](NodeRef r, std::size_t hop) {
    nodes.push_back({{"id", g.node_id(r)}, {"type", to_string(r.type)}, {"name", g.node_name(r)}, {"hop", hop}});
  };
  add_node(*ref, 0);

  std::vector<NodeRef> frontier{*ref};
  nlohmann::json first_pie = nlohmann::json::object();
  for (std::size_t hop = 1; hop <= k; ++hop) {
    const auto layer = static_cast<std::uint32_t>(L - hop);
    std::vector<NodeRef> next;
    std::map<NodeType, double> pie;
    double pie_total = 0;
    for (const auto& v : frontier) {
      std::map<EdgeKey, EdgeAgg> in;
      for (const auto& r : records) {
        if (r.layer != layer || r.dst != v) continue;
        auto& e = in[{r.src, r.relation}];
        if (e.alpha.empty()) e.alpha.assign(H, 0.0);
        e.alpha[r.head] += r.weight;
        e.rec = &r;
        pie[r.src.type] += r.weight / static_cast<double>(H);
        pie_total += r.weight / static_cast<double>(H);
      }
      std::vector<std::pair<double, const std::pair<const EdgeKey, EdgeAgg>*>> ranked;
      for (const auto& kv : in) {
        double mean = 0;
        for (double a : kv.second.alpha) mean += a;
        ranked.push_back({mean / static_cast<double>(H), &kv});
      }
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      if (ranked.size() > top_m) ranked.resize(top_m);
      for (const auto& [mean, kv] : ranked) {
        const auto& rec = *kv->second.rec;
        edges.push_back({{"src", g.node_id(rec.src)},
                         {"dst", g.node_id(rec.dst)},
                         {"relation", rec.edge_type.relation},
                         {"reversed", rec.reversed},
                         {"hop", hop},
                         {"alpha", kv->second.alpha},
                         {"alpha_mean", mean}});
        if (seen.insert(rec.src).second) {
          add_node(rec.src, hop);
          next.push_back(rec.src);
        }
      }
    }
    nlohmann::json pie_j = nlohmann::json::object();
    for (auto& [t, m] : pie) pie_j[std::string(to_string(t))] = pie_total > 0 ? m / pie_total : 0.0;
    if (hop == 1) first_pie = pie_j;
    hops.push_back({{"hop", hop}, {"layer", layer}, {"source_type_distribution", pie_j}});
    frontier = std::move(next);
  }
  return {{"drug", drug_id}, {"k", k},        {"top_m", top_m}, {"nodes", nodes}, {"edges", edges},
          {"source_type_distribution", first_pie}, {"hops", hops}};
}

}  // namespace kgp
