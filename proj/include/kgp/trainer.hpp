#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "kgp/checkpoint.hpp"
#include "kgp/chem.hpp"
#include "kgp/error.hpp"
#include "kgp/graph.hpp"
#include "kgp/io.hpp"
#include "kgp/metrics.hpp"
#include "kgp/models.hpp"
#include "kgp/optim.hpp"
#include "kgp/rng.hpp"
#include "kgp/sampler.hpp"
#include "kgp/tensor.hpp"

namespace kgp {

struct TrainConfig {
  ModelConfig model;
  AdamWOptions optim;
  std::size_t batch_size = 512;
  std::size_t eval_batch_size = 512;
  std::size_t epochs = 20;
  std::vector<std::size_t> fanouts{20, 10};
  std::size_t deg_k = 50;
  std::uint64_t seed = 0;
  std::string split_mode = "scaffold";
  std::string ablation = "none";
  std::uint64_t ablation_seed = 0;
  bool record_time = true;  // false writes 0 seconds so histories compare byte-for-byte

  nlohmann::json to_json() const {
    return {{"model", model.to_json()},
            {"optimizer", optim.to_json()},
            {"batch_size", batch_size},
            {"eval_batch_size", eval_batch_size},
            {"epochs", epochs},
            {"fanouts", fanouts},
            {"deg_k", deg_k},
            {"seed", seed},
            {"split_mode", split_mode},
            {"ablation", ablation},
            {"ablation_seed", ablation_seed}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
    if (j.contains("optimizer")) c.optim = AdamWOptions::from_json(j["optimizer"]);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("fanouts")) c.fanouts = j["fanouts"].get<std::vector<std::size_t>>();
    c.deg_k = j.value("deg_k", c.deg_k);
    c.seed = j.value("seed", c.seed);
    c.split_mode = j.value("split_mode", c.split_mode);
    c.ablation = j.value("ablation", c.ablation);
    c.ablation_seed = j.value("ablation_seed", c.ablation_seed);
    return c;
  }

  void check() const {
    if (batch_size == 0 || eval_batch_size == 0) throw Error(Errc::ParamDomain, "batch sizes must be positive");
    if (!(optim.lr >= 0) || !std::isfinite(optim.lr)) throw Error(Errc::ParamDomain, "lr must be finite and non-negative");
    if (model.architecture == Architecture::gat && fanouts.empty()) throw Error(Errc::ParamDomain, "GAT needs at least one fan-out");
    if (deg_k == 0) throw Error(Errc::ParamDomain, "deg_k must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0;
  double test_pearson = 0;
  double test_deg = 0;
  double seconds = 0;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> history;
  std::optional<std::size_t> best_epoch;
  double best_deg = -std::numeric_limits<double>::infinity();
};

inline void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& h : history)
    rows.push_back({std::to_string(h.epoch), io::fmt_real(h.train_mse), io::fmt_real(h.test_pearson), io::fmt_real(h.test_deg),
                    io::fmt_real(h.seconds)});
  io::write_tsv(path, {"epoch", "train_mse", "test_pearson", "test_deg", "seconds"}, rows, ',');
}

struct SplitSamples {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> test;
};

/// Sample indices whose drug falls on each side; drugs on neither side are dropped.
inline SplitSamples partition_samples(const PerturbationData& d, const chem::SplitAssignment& split) {
  std::unordered_set<std::string> train(split.train.begin(), split.train.end());
  std::unordered_set<std::string> test(split.test.begin(), split.test.end());
  SplitSamples out;
  for (std::uint32_t i = 0; i < d.samples.size(); ++i) {
    const auto& id = d.graph.node_id({NodeType::drug, d.samples[i].drug});
    if (train.count(id)) out.train.push_back(i);
    else if (test.count(id)) out.test.push_back(i);
  }
  return out;
}

/// Drug ids with their SMILES, in node order.
inline std::vector<chem::DrugEntry> drug_entries(const HeteroGraph& g) {
  std::vector<chem::DrugEntry> out;
  for (std::uint32_t i = 0; i < g.node_count(NodeType::drug); ++i) {
    NodeRef r{NodeType::drug, i};
    out.push_back({g.node_id(r), g.smiles(r)});
  }
  return out;
}

/// Mean feature row of each drug's targets under `relation` (drug -> gene_protein);
/// drugs without targets get zeros.
inline Matrix<float> pooled_target_features(const HeteroGraph& g, const std::string& relation) {
  const auto n = g.node_count(NodeType::drug);
  const auto wd = g.features(NodeType::drug).width();
  Matrix<float> out(n, wd);
  auto et = g.find_edge_type({NodeType::drug, relation, NodeType::gene_protein});
  if (!et) return out;
  const auto& pf = g.features(NodeType::gene_protein);
  if (pf.width() != wd)
    throw Error(Errc::WidthMismatch, "target features have width " + std::to_string(pf.width()) + ", drug features " + std::to_string(wd));
  const auto& es = g.edge_set(*et);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto targets = es.forward.at(i);
    if (targets.empty()) continue;
    std::vector<double> acc(wd, 0.0);
    for (auto p : targets) {
      auto row = pf.row(p);
      for (std::size_t k = 0; k < wd; ++k) acc[k] += row[k];
    }
    for (std::size_t k = 0; k < wd; ++k) out(i, k) = static_cast<float>(acc[k] / static_cast<double>(targets.size()));
  }
  return out;
}

/// Builds model inputs for a list of samples against graph `g`, which may be
/// an ablated copy of the dataset graph with the same node sets.
template <class Real>
class BatchBuilder {
 public:
  BatchBuilder(const HeteroGraph& g, const PerturbationData& data, const ModelConfig& mc, std::vector<std::size_t> fanouts)
      : g_(g), data_(data), mc_(mc), fanouts_(std::move(fanouts)) {
    if (mc_.architecture == Architecture::mlp_targets) pooled_ = pooled_target_features(g_, mc_.target_relation);
  }

  ModelInputs<Real> build(std::span<const std::uint32_t> sample_ids, std::uint64_t sample_seed, SampledSubgraph& sg) const {
    ModelInputs<Real> in;
    const auto B = sample_ids.size();
    const auto G = data_.genes();
    in.baseline = Matrix<Real>(B, G);
    for (std::size_t i = 0; i < B; ++i) {
      auto src = data_.baseline(data_.samples[sample_ids[i]].cell);
      for (std::size_t k = 0; k < G; ++k) in.baseline(i, k) = static_cast<Real>(src[k]);
    }
    if (mc_.architecture == Architecture::gat) {
      std::vector<std::uint32_t> seeds;
      for (auto s : sample_ids) seeds.push_back(data_.samples[s].drug);
      sg = sample_neighbors(g_, seeds, fanouts_, sample_seed);
      std::unordered_map<std::uint32_t, std::uint32_t> local;
      for (std::uint32_t i = 0; i < sg.seeds.size(); ++i) local[sg.seeds[i]] = i;
      for (auto s : sample_ids) in.seed_rows.push_back(local.at(data_.samples[s].drug));
      for (auto t : kAllNodeTypes) {
        const auto& nodes = sg.nodes[index_of(t)];
        if (nodes.empty()) continue;
        const auto& f = g_.features(t);
        auto& m = in.node_x[index_of(t)];
        m = Matrix<Real>(nodes.size(), f.width());
        for (std::size_t r = 0; r < nodes.size(); ++r) {
          auto row = f.row(nodes[r]);
          for (std::size_t k = 0; k < row.size(); ++k) m(r, k) = static_cast<Real>(row[k]);
        }
      }
      in.subgraph = &sg;
      return in;
    }
    const auto& df = g_.features(NodeType::drug);
    in.drug_x = Matrix<Real>(B, df.width());
    for (std::size_t i = 0; i < B; ++i) {
      auto row = df.row(data_.samples[sample_ids[i]].drug);
      for (std::size_t k = 0; k < row.size(); ++k) in.drug_x(i, k) = static_cast<Real>(row[k]);
    }
    if (mc_.architecture == Architecture::mlp_targets) {
      in.target_x = Matrix<Real>(B, pooled_.cols);
      for (std::size_t i = 0; i < B; ++i) {
        auto row = pooled_.row(data_.samples[sample_ids[i]].drug);
        for (std::size_t k = 0; k < row.size(); ++k) in.target_x(i, k) = static_cast<Real>(row[k]);
      }
    }
    return in;
  }

  Matrix<Real> targets(std::span<const std::uint32_t> sample_ids) const {
    Matrix<Real> y(sample_ids.size(), data_.genes());
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
      auto src = data_.observed(data_.samples[sample_ids[i]]);
      for (std::size_t k = 0; k < src.size(); ++k) y(i, k) = static_cast<Real>(src[k]);
    }
    return y;
  }

 private:
  const HeteroGraph& g_;
  const PerturbationData& data_;
  const ModelConfig& mc_;
  std::vector<std::size_t> fanouts_;
  Matrix<float> pooled_;
};

/// Eval-mode predictions [n, G] in the order of `sample_ids`. Neighbor
/// sampling uses streams keyed by `seed` and the chunk index only.
template <class Real>
Matrix<Real> predict(const PerturbationModel<Real>& model, const HeteroGraph& g, const PerturbationData& data,
                     std::span<const std::uint32_t> sample_ids, const std::vector<std::size_t>& fanouts, std::size_t chunk,
                     std::uint64_t seed, AttentionSink* sink = nullptr) {
  BatchBuilder<Real> builder(g, data, model.config(), fanouts);
  Matrix<Real> out(sample_ids.size(), data.genes());
  for (std::size_t start = 0, b = 0; start < sample_ids.size(); start += chunk, ++b) {
    auto ids = sample_ids.subspan(start, std::min(chunk, sample_ids.size() - start));
    SampledSubgraph sg;
    auto in = builder.build(ids, derive_seed(seed, {0xE7A1, b}), sg);
    Tape<Real> tape;
    auto y = model.forward(tape, in, nn::Mode{false, nullptr}, sink);
    const auto& Y = y.value();
    std::copy(Y.data.begin(), Y.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * out.cols));
  }
  return out;
}

template <class Real>
std::vector<metrics::SampleMetric> evaluate_epoch(const PerturbationModel<Real>& model, const HeteroGraph& g,
                                                  const PerturbationData& data, std::span<const std::uint32_t> sample_ids,
                                                  const TrainConfig& cfg) {
  auto pred = predict(model, g, data, sample_ids, cfg.fanouts, cfg.eval_batch_size, cfg.seed);
  std::vector<metrics::SampleMetric> rows;
  std::vector<float> p(data.genes());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    const auto& s = data.samples[sample_ids[i]];
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = static_cast<float>(pred(i, k));
    auto obs = data.observed(s);
    auto base = data.baseline(s.cell);
    metrics::SampleMetric m;
    m.drug_id = data.graph.node_id({NodeType::drug, s.drug});
    m.cell_id = data.graph.node_id({NodeType::cell, s.cell});
    m.pearson = metrics::pearson(std::span<const float>(p), obs);
    m.deg = metrics::deg_correlation(std::span<const float>(p), obs, base, cfg.deg_k);
    rows.push_back(std::move(m));
  }
  return rows;
}

inline ModelCheckpoint make_checkpoint(const TrainConfig& cfg, std::vector<NamedMatrix> params, const TrainResult* result) {
  ModelCheckpoint ck;
  ck.meta = cfg.to_json();
  nlohmann::json best = nullptr;
  if (result && result->best_epoch) {
    const auto& h = result->history[*result->best_epoch - 1];
    best = {{"epoch", h.epoch}, {"test_deg", h.test_deg}, {"test_pearson", h.test_pearson}};
  }
  ck.meta["best"] = best;
  ck.params = std::move(params);
  return ck;
}

/// Trains on `split.train`, evaluates on `split.test` after every epoch and
/// keeps the parameters of the epoch with the highest mean test DEG
/// correlation (earliest on ties). `g` may be an ablated graph.
inline TrainResult train(TrainConfig cfg, const PerturbationData& data, const HeteroGraph& g, const SplitSamples& split) {
  cfg.check();
  if (split.train.empty() || split.test.empty()) throw Error(Errc::DegenerateSplit, "train and test sample sets must be nonempty");
  cfg.model.seed = cfg.seed;
  cfg.model.genes = data.genes();
  if (cfg.model.input_widths.empty()) cfg.model.adopt_schema(g);

  auto model = make_model<float>(cfg.model);
  AdamW<float> opt(model->params().all(), cfg.optim);
  BatchBuilder<float> builder(g, data, model->config(), cfg.fanouts);

  TrainResult result;
  auto best_params = capture_params(model->params());
  using clock = std::chrono::steady_clock;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    auto batches = make_batches(split.train, cfg.batch_size, derive_seed(cfg.seed, {0xE90C, epoch}));
    double sq_sum = 0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& ids = batches[b];
      SampledSubgraph sg;
      auto in = builder.build(ids, derive_seed(cfg.seed, {0x5A11, epoch, b}), sg);
      auto rng = derive_rng(cfg.seed, {0xD40F, epoch, b});
      Tape<float> tape;
      auto pred = model->forward(tape, in, nn::Mode{true, &rng});
      auto loss = ops::mse_loss(pred, tape.constant(builder.targets(ids)));
      const double lv = loss.value().data[0];
      if (!std::isfinite(lv))
        throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b) + " (" +
                                             std::to_string(ids.size()) + " samples)");
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      sq_sum += lv * static_cast<double>(ids.size());
      count += ids.size();
    }
    auto rows = evaluate_epoch(*model, g, data, split.test, cfg);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_mse = sq_sum / static_cast<double>(count);
    rec.test_pearson = metrics::mean_of(rows, &metrics::SampleMetric::pearson);
    rec.test_deg = metrics::mean_of(rows, &metrics::SampleMetric::deg);
    rec.seconds = cfg.record_time ? std::chrono::duration<double>(clock::now() - t0).count() : 0.0;
    result.history.push_back(rec);
    if (rec.test_deg > result.best_deg) {
      result.best_deg = rec.test_deg;
      result.best_epoch = rec.epoch;
      best_params = capture_params(model->params());
    }
  }
  cfg.model = model->config();
  result.checkpoint = make_checkpoint(cfg, std::move(best_params), &result);
  return result;
}

}  // namespace kgp
