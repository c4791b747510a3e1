#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/graph.hpp"
#include "kgp/nn.hpp"
#include "kgp/rng.hpp"
#include "kgp/sampler.hpp"
#include "kgp/tensor.hpp"

namespace kgp {

enum class Architecture { mlp, mlp_targets, gat };

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::mlp: return "mlp";
    case Architecture::mlp_targets: return "mlp_targets";
    case Architecture::gat: return "gat";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "mlp") return Architecture::mlp;
  if (s == "mlp_targets") return Architecture::mlp_targets;
  if (s == "gat") return Architecture::gat;
  throw Error(Errc::ParamDomain, "unknown model " + std::string(s));
}

/// A message-passing relation as the model sees it: sender type, name, receiver type.
struct RelationSpec {
  NodeType source = NodeType::drug;
  std::string name;
  NodeType target = NodeType::drug;

  std::string key() const { return std::string(to_string(source)) + ":" + name + ":" + std::string(to_string(target)); }
  bool operator==(const RelationSpec&) const = default;
};

struct ModelConfig {
  Architecture architecture = Architecture::mlp;
  std::size_t genes = 978;
  std::size_t embed_dim = 256;
  std::size_t encoder_hidden = 1024;
  std::size_t delta_hidden = 1024;
  std::size_t heads = 4;
  std::size_t gat_layers = 2;
  double dropout = 0.1;
  bool batch_norm = true;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool joint_attention = true;  // false: softmax per (relation, destination)
  std::string target_relation = "targets";
  std::uint64_t seed = 0;
  std::map<NodeType, std::size_t> input_widths;
  std::vector<RelationSpec> relations;

  nlohmann::json to_json() const {
    nlohmann::json widths = nlohmann::json::object();
    for (auto& [t, w] : input_widths) widths[std::string(to_string(t))] = w;
    nlohmann::json rels = nlohmann::json::array();
    for (auto& r : relations) rels.push_back({std::string(to_string(r.source)), r.name, std::string(to_string(r.target))});
    return {{"architecture", to_string(architecture)},
            {"genes", genes},
            {"embed_dim", embed_dim},
            {"encoder_hidden", encoder_hidden},
            {"delta_hidden", delta_hidden},
            {"heads", heads},
            {"gat_layers", gat_layers},
            {"dropout", dropout},
            {"batch_norm", batch_norm},
            {"leaky_slope", leaky_slope},
            {"bn_eps", bn_eps},
            {"bn_momentum", bn_momentum},
            {"joint_attention", joint_attention},
            {"target_relation", target_relation},
            {"seed", seed},
            {"input_widths", widths},
            {"relations", rels}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.architecture = parse_architecture(j.value("architecture", std::string("mlp")));
    c.genes = j.value("genes", c.genes);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.delta_hidden = j.value("delta_hidden", c.delta_hidden);
    c.heads = j.value("heads", c.heads);
    c.gat_layers = j.value("gat_layers", c.gat_layers);
    c.dropout = j.value("dropout", c.dropout);
    c.batch_norm = j.value("batch_norm", c.batch_norm);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.bn_eps = j.value("bn_eps", c.bn_eps);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.joint_attention = j.value("joint_attention", c.joint_attention);
    c.target_relation = j.value("target_relation", c.target_relation);
    c.seed = j.value("seed", c.seed);
    if (j.contains("input_widths"))
      for (auto& [k, v] : j["input_widths"].items()) c.input_widths[parse_node_type(k)] = v.get<std::size_t>();
    if (j.contains("relations"))
      for (auto& r : j["relations"])
        c.relations.push_back({parse_node_type(r[0].get<std::string>()), r[1].get<std::string>(), parse_node_type(r[2].get<std::string>())});
    return c;
  }

  /// Copies feature widths and the relation schema from `g`.
  void adopt_schema(const HeteroGraph& g) {
    input_widths.clear();
    for (auto t : kAllNodeTypes)
      if (g.has_features(t) && g.node_count(t) > 0) input_widths[t] = g.features(t).width();
    relations.clear();
    for (const auto& r : g.relations()) relations.push_back({r.source, r.name, r.target});
  }

  std::size_t width_of(NodeType t) const {
    auto it = input_widths.find(t);
    if (it == input_widths.end()) throw Error(Errc::WidthMismatch, "no input width for node type " + std::string(to_string(t)));
    return it->second;
  }
};

/// Model inputs for one minibatch. Only the fields an architecture reads
/// need to be filled.
template <class Real>
struct ModelInputs {
  Matrix<Real> drug_x;    // [B, W_drug]
  Matrix<Real> target_x;  // [B, W_drug], mean-pooled target features
  Matrix<Real> baseline;  // [B, G]
  const SampledSubgraph* subgraph = nullptr;
  std::array<Matrix<Real>, kNodeTypeCount> node_x;  // subgraph-local rows per type
  std::vector<std::uint32_t> seed_rows;            // drug-local index for each batch row
};

struct AttentionRecord {
  std::uint32_t layer = 0;
  std::uint32_t head = 0;
  std::string relation;  // message relation name, "rev_" prefix for reversed traversal
  EdgeType edge_type;
  bool reversed = false;
  NodeRef src;  // global indices
  NodeRef dst;
  double weight = 0;
};

struct AttentionSink {
  std::vector<AttentionRecord> records;
};

/// y_hat = baseline + delta. The baseline enters as a constant.
template <class Real>
Var<Real> predict_residual(Var<Real> delta, Var<Real> baseline) {
  if (!delta.value().same_shape(baseline.value()))
    throw Error(Errc::ShapeMismatch, "delta " + delta.value().shape_string() + " vs baseline " + baseline.value().shape_string());
  return ops::add(delta, baseline);
}

/// Mean over target rows; no targets gives the zero row.
template <class Real>
Var<Real> mean_pool_targets(Var<Real> targets) {
  return ops::row_mean(targets);
}

template <class Real>
class PerturbationModel {
 public:
  explicit PerturbationModel(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~PerturbationModel() = default;

  virtual Var<Real> delta(Tape<Real>& t, const ModelInputs<Real>& in, const nn::Mode& mode,
                          AttentionSink* sink = nullptr) const = 0;

  Var<Real> forward(Tape<Real>& t, const ModelInputs<Real>& in, const nn::Mode& mode, AttentionSink* sink = nullptr) const {
    if (in.baseline.cols != cfg_.genes)
      throw Error(Errc::WidthMismatch, "baseline width " + std::to_string(in.baseline.cols) + ", model expects " + std::to_string(cfg_.genes));
    return predict_residual(delta(t, in, mode, sink), t.constant(in.baseline));
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<Real>& params() { return store_; }
  const nn::ParamStore<Real>& params() const { return store_; }

 protected:
  nn::MlpOptions encoder_options() const {
    nn::MlpOptions o;
    o.batch_norm = cfg_.batch_norm;
    o.dropout = cfg_.dropout;
    o.bn = {cfg_.bn_eps, cfg_.bn_momentum};
    return o;
  }

  nn::Mlp<Real> make_delta_head(std::size_t in, Rng& init) {
    return nn::Mlp<Real>(store_, "delta", {in, cfg_.delta_hidden, cfg_.delta_hidden, cfg_.genes}, nn::MlpOptions{}, init);
  }

  ModelConfig cfg_;
  nn::ParamStore<Real> store_;
};

/// Drug features and cell baseline only.
template <class Real>
class MlpModel : public PerturbationModel<Real> {
 public:
  explicit MlpModel(ModelConfig cfg) : PerturbationModel<Real>(std::move(cfg)) {
    auto init = derive_rng(this->cfg_.seed, {1});
    const auto& c = this->cfg_;
    enc_ = nn::Mlp<Real>(this->store_, "enc.drug", {c.width_of(NodeType::drug), c.encoder_hidden, c.embed_dim},
                         this->encoder_options(), init);
    head_ = this->make_delta_head(c.embed_dim + c.genes, init);
  }

  Var<Real> delta(Tape<Real>& t, const ModelInputs<Real>& in, const nn::Mode& mode, AttentionSink* = nullptr) const override {
    auto h = enc_(t, t.constant(in.drug_x), mode);
    return head_(t, ops::concat_cols<Real>({h, t.constant(in.baseline)}), mode);
  }

 private:
  nn::Mlp<Real> enc_, head_;
};

/// Adds the mean-pooled features of the drug's targets, encoded by the same
/// encoder as the drug.
template <class Real>
class MlpTargetsModel : public PerturbationModel<Real> {
 public:
  explicit MlpTargetsModel(ModelConfig cfg) : PerturbationModel<Real>(std::move(cfg)) {
    auto init = derive_rng(this->cfg_.seed, {1});
    const auto& c = this->cfg_;
    enc_ = nn::Mlp<Real>(this->store_, "enc.drug", {c.width_of(NodeType::drug), c.encoder_hidden, c.embed_dim},
                         this->encoder_options(), init);
    head_ = this->make_delta_head(2 * c.embed_dim + c.genes, init);
  }

  Var<Real> delta(Tape<Real>& t, const ModelInputs<Real>& in, const nn::Mode& mode, AttentionSink* = nullptr) const override {
    auto hd = enc_(t, t.constant(in.drug_x), mode);
    auto ht = enc_(t, t.constant(in.target_x), mode);
    return head_(t, ops::concat_cols<Real>({hd, ht, t.constant(in.baseline)}), mode);
  }

 private:
  nn::Mlp<Real> enc_, head_;
};

/// Heterogeneous GATv2 over a sampled subgraph. Each relation has its own
/// W_l, W_r and attention vectors; messages into a node are normalized jointly
/// over all its in-edges (or per relation), summed, and added residually.
template <class Real>
class HeteroGat : public PerturbationModel<Real> {
 public:
  explicit HeteroGat(ModelConfig cfg) : PerturbationModel<Real>(std::move(cfg)) {
    const auto& c = this->cfg_;
    if (c.heads == 0 || c.embed_dim % c.heads != 0)
      throw Error(Errc::WidthMismatch, "embed_dim " + std::to_string(c.embed_dim) + " not divisible by heads " + std::to_string(c.heads));
    auto init = derive_rng(c.seed, {2});
    for (auto& [type, width] : c.input_widths)
      encoders_[index_of(type)] = nn::Mlp<Real>(this->store_, "enc." + std::string(to_string(type)),
                                                {width, c.encoder_hidden, c.encoder_hidden, c.embed_dim},
                                                this->encoder_options(), init);
    const std::size_t dh = c.embed_dim / c.heads;
    layers_.resize(c.gat_layers);
    for (std::size_t l = 0; l < c.gat_layers; ++l)
      for (const auto& r : c.relations) {
        auto prefix = "gat" + std::to_string(l) + "." + r.key();
        RelParams p;
        p.wl = &this->store_.add(prefix + ".wl", c.embed_dim, c.embed_dim);
        p.wr = &this->store_.add(prefix + ".wr", c.embed_dim, c.embed_dim);
        p.att = &this->store_.add(prefix + ".att", c.heads, dh);
        nn::glorot_uniform(p.wl->value, init);
        nn::glorot_uniform(p.wr->value, init);
        nn::glorot_uniform(p.att->value, init);
        layers_[l][r.key()] = p;
      }
    head_ = this->make_delta_head(c.embed_dim + c.genes, init);
  }

  Var<Real> delta(Tape<Real>& t, const ModelInputs<Real>& in, const nn::Mode& mode, AttentionSink* sink = nullptr) const override {
    auto z = embed_seeds(t, in, mode, sink);
    return head_(t, ops::concat_cols<Real>({z, t.constant(in.baseline)}), mode);
  }

  /// Final drug embeddings for the batch rows, [B, embed_dim].
  Var<Real> embed_seeds(Tape<Real>& t, const ModelInputs<Real>& in, const nn::Mode& mode, AttentionSink* sink = nullptr) const {
    if (!in.subgraph) throw Error(Errc::MissingSeedNode, "GAT forward needs a sampled subgraph");
    const auto& sg = *in.subgraph;
    const auto& c = this->cfg_;
    const Real slope = static_cast<Real>(c.leaky_slope);

    std::array<std::optional<Var<Real>>, kNodeTypeCount> h;
    for (auto type : kAllNodeTypes) {
      const auto ti = index_of(type);
      if (sg.node_count(type) == 0) continue;
      if (!encoders_[ti]) throw Error(Errc::WidthMismatch, "model has no encoder for node type " + std::string(to_string(type)));
      if (in.node_x[ti].rows != sg.node_count(type))
        throw Error(Errc::ShapeMismatch, std::string(to_string(type)) + " features have " + std::to_string(in.node_x[ti].rows) +
                                             " rows for " + std::to_string(sg.node_count(type)) + " sampled nodes");
      h[ti] = (*encoders_[ti])(t, t.constant(in.node_x[ti]), mode);
    }

    std::vector<SampledEdges> edges(sg.relations.size());
    std::vector<std::string> keys(sg.relations.size());
    for (std::size_t r = 0; r < sg.relations.size(); ++r) {
      edges[r] = sg.edges(r);
      const auto& rel = sg.relations[r];
      keys[r] = RelationSpec{rel.source, rel.name, rel.target}.key();
    }

    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const bool last = l + 1 == layers_.size();
      auto next = h;
      for (auto dtype : kAllNodeTypes) {
        const auto di = index_of(dtype);
        if (!h[di]) continue;
        const std::uint32_t n_dst = sg.node_count(dtype);
        std::vector<Var<Real>> scores, values;
        std::vector<std::uint32_t> target, segment, rel_of_row;
        for (std::size_t r = 0; r < sg.relations.size(); ++r) {
          const auto& rel = sg.relations[r];
          if (rel.target != dtype || edges[r].size() == 0) continue;
          auto it = layers_[l].find(keys[r]);
          if (it == layers_[l].end()) throw Error(Errc::UnknownEdgeType, "model has no parameters for relation " + keys[r]);
          const auto& p = it->second;
          auto xl = ops::gather_rows(ops::matmul(*h[index_of(rel.source)], t.parameter(*p.wl)), edges[r].src);
          auto xr = ops::gather_rows(ops::matmul(*h[di], t.parameter(*p.wr)), edges[r].dst);
          scores.push_back(ops::head_dot(ops::leaky_relu(ops::add(xl, xr), slope), t.parameter(*p.att)));
          values.push_back(xl);
          for (auto d : edges[r].dst) {
            target.push_back(d);
            segment.push_back(c.joint_attention ? d : static_cast<std::uint32_t>(r) * n_dst + d);
            rel_of_row.push_back(static_cast<std::uint32_t>(r));
          }
        }
        if (scores.empty()) continue;
        // compact segment ids to the ones actually present
        std::unordered_map<std::uint32_t, std::uint32_t> compact;
        std::vector<std::uint32_t> seg_ids(segment.size());
        for (std::size_t e = 0; e < segment.size(); ++e) {
          auto [it, _] = compact.emplace(segment[e], static_cast<std::uint32_t>(compact.size()));
          seg_ids[e] = it->second;
        }
        ops::Segments seg(std::move(seg_ids), compact.size());
        auto alpha = ops::segment_softmax(ops::concat_rows(scores), seg);
        auto msg = ops::segment_weighted_sum(ops::concat_rows(values), alpha, target, n_dst);
        next[di] = ops::add(*h[di], last ? msg : ops::leaky_relu(msg, slope));

        if (sink) {
          const auto& A = alpha.value();
          std::vector<std::uint32_t> srcs;
          for (std::size_t r = 0; r < sg.relations.size(); ++r)
            if (sg.relations[r].target == dtype && edges[r].size() > 0)
              srcs.insert(srcs.end(), edges[r].src.begin(), edges[r].src.end());
          for (std::size_t e = 0; e < A.rows; ++e) {
            const auto& rel = sg.relations[rel_of_row[e]];
            for (std::size_t hd = 0; hd < A.cols; ++hd) {
              AttentionRecord rec;
              rec.layer = static_cast<std::uint32_t>(l);
              rec.head = static_cast<std::uint32_t>(hd);
              rec.relation = rel.name;
              rec.edge_type = EdgeType{rel.reversed ? rel.target : rel.source,
                                       rel.reversed ? rel.name.substr(4) : rel.name,
                                       rel.reversed ? rel.source : rel.target};
              rec.reversed = rel.reversed;
              rec.src = {rel.source, sg.global(rel.source, srcs[e])};
              rec.dst = {dtype, sg.global(dtype, target[e])};
              rec.weight = static_cast<double>(A(e, hd));
              sink->records.push_back(std::move(rec));
            }
          }
        }
      }
      h = std::move(next);
    }
    return ops::gather_rows(*h[index_of(NodeType::drug)], in.seed_rows);
  }

 private:
  struct RelParams {
    Parameter<Real>* wl = nullptr;
    Parameter<Real>* wr = nullptr;
    Parameter<Real>* att = nullptr;
  };

  std::array<std::optional<nn::Mlp<Real>>, kNodeTypeCount> encoders_;
  std::vector<std::map<std::string, RelParams>> layers_;
  nn::Mlp<Real> head_;
};

template <class Real>
std::unique_ptr<PerturbationModel<Real>> make_model(const ModelConfig& cfg) {
  switch (cfg.architecture) {
    case Architecture::mlp: return std::make_unique<MlpModel<Real>>(cfg);
    case Architecture::mlp_targets: return std::make_unique<MlpTargetsModel<Real>>(cfg);
    case Architecture::gat: return std::make_unique<HeteroGat<Real>>(cfg);
  }
  throw Error(Errc::ParamDomain, "unknown architecture");
}

}  // namespace kgp
