#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/io.hpp"

namespace kgp {

enum class NodeType : std::uint8_t {
  drug,
  gene_protein,
  disease,
  biological_process,
  molecular_function,
  cellular_component,
  pathway,
  cell,
};

inline constexpr std::size_t kNodeTypeCount = 8;

inline constexpr std::array<NodeType, kNodeTypeCount> kAllNodeTypes = {
    NodeType::drug,           NodeType::gene_protein,       NodeType::disease,
    NodeType::biological_process, NodeType::molecular_function, NodeType::cellular_component,
    NodeType::pathway,        NodeType::cell,
};

constexpr std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::drug: return "drug";
    case NodeType::gene_protein: return "gene_protein";
    case NodeType::disease: return "disease";
    case NodeType::biological_process: return "biological_process";
    case NodeType::molecular_function: return "molecular_function";
    case NodeType::cellular_component: return "cellular_component";
    case NodeType::pathway: return "pathway";
    case NodeType::cell: return "cell";
  }
  return "?";
}

inline NodeType parse_node_type(std::string_view s) {
  for (auto t : kAllNodeTypes)
    if (to_string(t) == s) return t;
  throw Error(Errc::UnknownNodeType, std::string(s));
}

constexpr std::size_t index_of(NodeType t) { return static_cast<std::size_t>(t); }

struct EdgeType {
  NodeType src = NodeType::drug;
  std::string relation;
  NodeType dst = NodeType::drug;

  auto operator<=>(const EdgeType&) const = default;
  bool operator==(const EdgeType&) const = default;

  std::string name() const {
    return std::string(to_string(src)) + ":" + relation + ":" + std::string(to_string(dst));
  }
};

struct NodeRef {
  NodeType type = NodeType::drug;
  std::uint32_t index = 0;

  auto operator<=>(const NodeRef&) const = default;
  bool operator==(const NodeRef&) const = default;
};

enum class Direction { forward, reverse };

/// Per-type node features, row-major [rows, modalities * dim].
struct FeatureMatrix {
  NodeType type = NodeType::drug;
  std::uint32_t rows = 0;
  std::uint32_t modalities = 2;
  std::uint32_t dim = 768;
  std::vector<float> values;

  std::size_t width() const { return static_cast<std::size_t>(modalities) * dim; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * width(), width()}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * width(), width()}; }
};

struct Csr {
  std::vector<std::uint32_t> offsets;  // size n_nodes + 1
  std::vector<std::uint32_t> indices;

  std::span<const std::uint32_t> at(std::uint32_t v) const {
    return {indices.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }
  std::uint32_t degree(std::uint32_t v) const { return offsets[v + 1] - offsets[v]; }

  bool operator==(const Csr&) const = default;
};

/// One edge type's edges, sorted by (src, dst). Duplicates are kept.
struct EdgeSet {
  EdgeType type;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  Csr forward;  // src -> sorted dst list
  Csr reverse;  // dst -> sorted src list

  std::size_t size() const { return src.size(); }
};

namespace detail {

inline Csr make_csr(std::uint32_t n_nodes, std::span<const std::uint32_t> from,
                    std::span<const std::uint32_t> to) {
  Csr c;
  c.offsets.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
  for (auto f : from) ++c.offsets[f + 1];
  std::partial_sum(c.offsets.begin(), c.offsets.end(), c.offsets.begin());
  c.indices.resize(from.size());
  std::vector<std::uint32_t> cursor(c.offsets.begin(), c.offsets.end() - 1);
  for (std::size_t e = 0; e < from.size(); ++e) c.indices[cursor[from[e]]++] = to[e];
  for (std::uint32_t v = 0; v < n_nodes; ++v)
    std::sort(c.indices.begin() + c.offsets[v], c.indices.begin() + c.offsets[v + 1]);
  return c;
}

}  // namespace detail

/// Rebuilds both CSR views after src/dst were edited (sorts the edge list first).
inline void finalize_edge_set(EdgeSet& es, std::uint32_t n_src, std::uint32_t n_dst) {
  std::vector<std::size_t> order(es.src.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(es.src[a], es.dst[a]) < std::pair(es.src[b], es.dst[b]);
  });
  std::vector<std::uint32_t> s(order.size()), d(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    s[i] = es.src[order[i]];
    d[i] = es.dst[order[i]];
  }
  es.src = std::move(s);
  es.dst = std::move(d);
  es.forward = detail::make_csr(n_src, es.src, es.dst);
  es.reverse = detail::make_csr(n_dst, es.dst, es.src);
}

struct NodeRecord {
  std::string id;
  NodeType type = NodeType::drug;
  std::string name;
  std::string smiles;
};

struct EdgeRecord {
  std::string src_id;
  std::string relation;
  std::string dst_id;
};

/// Direction a message travels along a stored edge type. A reversed relation
/// carries messages dst -> src and is named "rev_<relation>".
struct Relation {
  std::uint32_t edge_type = 0;
  bool reversed = false;
  NodeType source = NodeType::drug;  // type of the message sender
  NodeType target = NodeType::drug;  // type of the message receiver
  std::string name;
};

class HeteroGraph {
 public:
  std::uint32_t node_count(NodeType t) const { return static_cast<std::uint32_t>(ids_[index_of(t)].size()); }
  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (const auto& v : ids_) n += v.size();
    return n;
  }

  const std::vector<EdgeSet>& edge_sets() const { return edges_; }
  std::vector<EdgeSet>& mutable_edge_sets() { return edges_; }
  const EdgeSet& edge_set(std::size_t i) const { return edges_.at(i); }

  std::optional<std::size_t> find_edge_type(const EdgeType& et) const {
    for (std::size_t i = 0; i < edges_.size(); ++i)
      if (edges_[i].type == et) return i;
    return std::nullopt;
  }

  std::size_t edge_type_index(const EdgeType& et) const {
    auto i = find_edge_type(et);
    if (!i) throw Error(Errc::UnknownEdgeType, et.name());
    return *i;
  }

  bool has_features(NodeType t) const { return features_[index_of(t)].has_value(); }
  const FeatureMatrix& features(NodeType t) const {
    const auto& f = features_[index_of(t)];
    if (!f) throw Error(Errc::FeatureShapeMismatch, "no features for node type " + std::string(to_string(t)));
    return *f;
  }
  FeatureMatrix& mutable_features(NodeType t) {
    auto& f = features_[index_of(t)];
    if (!f) throw Error(Errc::FeatureShapeMismatch, "no features for node type " + std::string(to_string(t)));
    return *f;
  }

  const std::string& node_id(NodeRef r) const { return ids_[index_of(r.type)].at(r.index); }
  const std::string& node_name(NodeRef r) const { return names_[index_of(r.type)].at(r.index); }
  const std::string& smiles(NodeRef r) const { return smiles_[index_of(r.type)].at(r.index); }

  std::optional<NodeRef> find_node(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  NodeRef node(const std::string& id) const {
    auto r = find_node(id);
    if (!r) throw Error(Errc::UnknownId, id);
    return *r;
  }

  /// Sorted neighbor list of `node` under `etype`; forward = out-neighbors.
  std::span<const std::uint32_t> neighbors(NodeRef node, const EdgeType& etype, Direction dir) const {
    const auto& es = edges_[edge_type_index(etype)];
    return neighbors(node, es, dir);
  }

  std::span<const std::uint32_t> neighbors(NodeRef node, const EdgeSet& es, Direction dir) const {
    if (dir == Direction::forward) {
      if (node.type != es.type.src || node.index >= node_count(node.type))
        throw Error(Errc::UnknownEdgeType, "node type does not match source of " + es.type.name());
      return es.forward.at(node.index);
    }
    if (node.type != es.type.dst || node.index >= node_count(node.type))
      throw Error(Errc::UnknownEdgeType, "node type does not match destination of " + es.type.name());
    return es.reverse.at(node.index);
  }

  /// Senders of messages to `dst` under relation `r`.
  std::span<const std::uint32_t> in_neighbors(const Relation& r, std::uint32_t dst) const {
    const auto& es = edges_[r.edge_type];
    return r.reversed ? es.forward.at(dst) : es.reverse.at(dst);
  }

  /// Message-passing relations: every stored edge type in its declared
  /// direction, plus the reverse direction when source and destination node
  /// types differ (same-type relations are expected to be stored both ways).
  std::vector<Relation> relations() const {
    std::vector<Relation> out;
    for (std::uint32_t i = 0; i < edges_.size(); ++i) {
      const auto& t = edges_[i].type;
      out.push_back({i, false, t.src, t.dst, t.relation});
      if (t.src != t.dst) out.push_back({i, true, t.dst, t.src, "rev_" + t.relation});
    }
    return out;
  }

  friend HeteroGraph build_graph(const std::vector<NodeRecord>&, const std::vector<EdgeRecord>&,
                                 std::map<NodeType, FeatureMatrix>);

 private:
  std::array<std::vector<std::string>, kNodeTypeCount> ids_;
  std::array<std::vector<std::string>, kNodeTypeCount> names_;
  std::array<std::vector<std::string>, kNodeTypeCount> smiles_;
  std::array<std::optional<FeatureMatrix>, kNodeTypeCount> features_;
  std::unordered_map<std::string, NodeRef> lookup_;
  std::vector<EdgeSet> edges_;
};

inline HeteroGraph build_graph(const std::vector<NodeRecord>& nodes, const std::vector<EdgeRecord>& edges,
                               std::map<NodeType, FeatureMatrix> features) {
  HeteroGraph g;
  for (std::size_t row = 0; row < nodes.size(); ++row) {
    const auto& n = nodes[row];
    if (n.id.empty()) throw Error(Errc::Format, "node row " + std::to_string(row) + ": empty node_id");
    auto ti = index_of(n.type);
    NodeRef ref{n.type, static_cast<std::uint32_t>(g.ids_[ti].size())};
    if (!g.lookup_.emplace(n.id, ref).second)
      throw Error(Errc::Format, "node row " + std::to_string(row) + ": duplicate node_id " + n.id);
    g.ids_[ti].push_back(n.id);
    g.names_[ti].push_back(n.name);
    g.smiles_[ti].push_back(n.smiles);
  }

  for (auto t : kAllNodeTypes) {
    auto n = g.node_count(t);
    auto it = features.find(t);
    if (it == features.end()) {
      if (n > 0) throw Error(Errc::FeatureShapeMismatch, "missing feature file for node type " + std::string(to_string(t)));
      continue;
    }
    auto& f = it->second;
    f.type = t;
    if (f.rows != n || f.values.size() != static_cast<std::size_t>(f.rows) * f.width())
      throw Error(Errc::FeatureShapeMismatch, std::string(to_string(t)) + ": " + std::to_string(f.rows) +
                                                  " feature rows for " + std::to_string(n) + " nodes");
    for (std::size_t i = 0; i < f.values.size(); ++i)
      if (!std::isfinite(f.values[i])) {
        auto r = i / std::max<std::size_t>(1, f.width());
        throw Error(Errc::NonFiniteFeature, std::string(to_string(t)) + " row " + std::to_string(r) + " (" +
                                                g.ids_[index_of(t)][r] + ")");
      }
    g.features_[index_of(t)] = std::move(f);
  }

  std::map<EdgeType, EdgeSet> by_type;
  for (std::size_t row = 0; row < edges.size(); ++row) {
    const auto& e = edges[row];
    auto s = g.find_node(e.src_id);
    if (!s) throw Error(Errc::DanglingEdgeEndpoint, e.src_id + " (edge row " + std::to_string(row) + ")");
    auto d = g.find_node(e.dst_id);
    if (!d) throw Error(Errc::DanglingEdgeEndpoint, e.dst_id + " (edge row " + std::to_string(row) + ")");
    if (e.relation.empty()) throw Error(Errc::Format, "edge row " + std::to_string(row) + ": empty relation");
    EdgeType et{s->type, e.relation, d->type};
    auto& es = by_type[et];
    es.type = et;
    es.src.push_back(s->index);
    es.dst.push_back(d->index);
  }
  for (auto& [et, es] : by_type) {
    finalize_edge_set(es, g.node_count(et.src), g.node_count(et.dst));
    g.edges_.push_back(std::move(es));
  }
  return g;
}

struct GraphManifest {
  std::filesystem::path nodes = "nodes.tsv";
  std::filesystem::path edges = "edges.tsv";
  std::map<NodeType, std::filesystem::path> features;
  nlohmann::json extra = nlohmann::json::object();  // dataset pieces owned by other modules
};

inline GraphManifest read_manifest(const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, manifest_path.string() + ": " + e.what());
  }
  auto base = manifest_path.parent_path();
  GraphManifest m;
  m.nodes = base / j.at("nodes").get<std::string>();
  m.edges = base / j.at("edges").get<std::string>();
  for (auto& [k, v] : j.at("features").items()) m.features[parse_node_type(k)] = base / v.get<std::string>();
  for (auto& [k, v] : j.items())
    if (k != "nodes" && k != "edges" && k != "features") m.extra[k] = v;
  return m;
}

inline std::vector<NodeRecord> read_node_table(const std::filesystem::path& p) {
  auto t = io::read_tsv(p, {"node_id", "node_type", "name", "smiles"});
  std::vector<NodeRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto& r = t.rows[i];
    NodeType type;
    try {
      type = parse_node_type(r[1]);
    } catch (const Error&) {
      throw Error(Errc::UnknownNodeType, r[1] + " (" + p.string() + ":" + std::to_string(t.line_numbers[i]) + ")");
    }
    out.push_back({r[0], type, r[2], r[3]});
  }
  return out;
}

inline std::vector<EdgeRecord> read_edge_table(const std::filesystem::path& p) {
  auto t = io::read_tsv(p, {"src_id", "relation", "dst_id"});
  std::vector<EdgeRecord> out;
  out.reserve(t.rows.size());
  for (auto& r : t.rows) out.push_back({r[0], r[1], r[2]});
  return out;
}

inline FeatureMatrix to_feature_matrix(NodeType t, io::NdfMatrix m) {
  FeatureMatrix f;
  f.type = t;
  f.rows = m.rows;
  f.modalities = m.modalities;
  f.dim = m.dim;
  f.values = std::move(m.values);
  return f;
}

inline HeteroGraph load_graph(const std::filesystem::path& manifest_path) {
  auto m = read_manifest(manifest_path);
  std::map<NodeType, FeatureMatrix> feats;
  for (auto& [t, path] : m.features) feats[t] = to_feature_matrix(t, io::read_ndf(path));
  return build_graph(read_node_table(m.nodes), read_edge_table(m.edges), std::move(feats));
}

/// Writes nodes.tsv, edges.tsv, features/<type>.ndf and manifest.json into
/// `dir`. Keys in `extra` are merged into the manifest unchanged.
inline void save_graph(const HeteroGraph& g, const std::filesystem::path& dir,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  std::vector<std::vector<std::string>> node_rows;
  for (auto t : kAllNodeTypes)
    for (std::uint32_t i = 0; i < g.node_count(t); ++i) {
      NodeRef r{t, i};
      node_rows.push_back({g.node_id(r), std::string(to_string(t)), g.node_name(r), g.smiles(r)});
    }
  io::write_tsv(dir / "nodes.tsv", {"node_id", "node_type", "name", "smiles"}, node_rows);

  std::vector<std::vector<std::string>> edge_rows;
  for (const auto& es : g.edge_sets())
    for (std::size_t e = 0; e < es.size(); ++e)
      edge_rows.push_back({g.node_id({es.type.src, es.src[e]}), es.type.relation, g.node_id({es.type.dst, es.dst[e]})});
  io::write_tsv(dir / "edges.tsv", {"src_id", "relation", "dst_id"}, edge_rows);

  nlohmann::json manifest = extra;
  manifest["nodes"] = "nodes.tsv";
  manifest["edges"] = "edges.tsv";
  manifest["features"] = nlohmann::json::object();
  for (auto t : kAllNodeTypes) {
    if (!g.has_features(t)) continue;
    const auto& f = g.features(t);
    std::string rel = "features/" + std::string(to_string(t)) + ".ndf";
    io::write_ndf(dir / rel, {f.rows, f.modalities, f.dim, f.values});
    manifest["features"][std::string(to_string(t))] = rel;
  }
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct GraphReport {
  std::map<std::string, std::uint32_t> node_counts;   // by node type name
  std::map<std::string, std::size_t> edge_counts;     // by EdgeType::name()
  // edge type -> degree -> number of nodes with that degree
  std::map<std::string, std::map<std::uint32_t, std::uint32_t>> out_degree_histogram;
  std::map<std::string, std::map<std::uint32_t, std::uint32_t>> in_degree_histogram;
  std::size_t nonfinite_features = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["node_counts"] = node_counts;
    j["edge_counts"] = edge_counts;
    auto hist = [](const auto& h) {
      nlohmann::json o = nlohmann::json::object();
      for (const auto& [et, m] : h) {
        nlohmann::json row = nlohmann::json::object();
        for (auto [deg, n] : m) row[std::to_string(deg)] = n;
        o[et] = row;
      }
      return o;
    };
    j["out_degree_histogram"] = hist(out_degree_histogram);
    j["in_degree_histogram"] = hist(in_degree_histogram);
    j["nonfinite_features"] = nonfinite_features;
    return j;
  }
};

inline GraphReport validate(const HeteroGraph& g) {
  GraphReport r;
  for (auto t : kAllNodeTypes) {
    if (g.node_count(t) > 0) r.node_counts[std::string(to_string(t))] = g.node_count(t);
    if (g.has_features(t))
      for (float v : g.features(t).values)
        if (!std::isfinite(v)) ++r.nonfinite_features;
  }
  for (const auto& es : g.edge_sets()) {
    auto name = es.type.name();
    r.edge_counts[name] = es.size();
    auto& out = r.out_degree_histogram[name];
    for (std::uint32_t v = 0; v < g.node_count(es.type.src); ++v) ++out[es.forward.degree(v)];
    auto& in = r.in_degree_histogram[name];
    for (std::uint32_t v = 0; v < g.node_count(es.type.dst); ++v) ++in[es.reverse.degree(v)];
  }
  return r;
}

}  // namespace kgp
