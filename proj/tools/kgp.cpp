#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgp/ablations.hpp"
#include "kgp/attention.hpp"
#include "kgp/checkpoint.hpp"
#include "kgp/chem.hpp"
#include "kgp/io.hpp"
#include "kgp/metrics.hpp"
#include "kgp/sampler.hpp"
#include "kgp/synthbench.hpp"
#include "kgp/trainer.hpp"

#ifndef KGP_VERSION
#define KGP_VERSION "0.0.0"
#endif
#ifndef KGP_BUILD_TYPE
#define KGP_BUILD_TYPE "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainFlags {
  std::string model = "mlp";
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch = 512;
  std::size_t eval_batch = 512;
  std::string fanouts = "20,10";
  double dropout = 0.1;
  std::size_t embed_dim = 256;
  std::size_t hidden = 1024;
  std::size_t delta_hidden = 1024;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::string attention = "joint";
  bool no_batch_norm = false;
  bool deterministic = false;
  std::size_t deg_k = 50;

  void attach(CLI::App* app, bool with_model) {
    if (with_model)
      app->add_option("--model", model, "Architecture")->check(CLI::IsMember({"mlp", "mlp_targets", "gat"}))->capture_default_str();
    app->add_option("--seed", seed, "Seed for initialization, batching, sampling and dropout")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--lr", lr, "AdamW learning rate")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "AdamW decoupled weight decay")->capture_default_str();
    app->add_option("--batch", batch, "Training batch size")->capture_default_str();
    app->add_option("--eval-batch", eval_batch, "Evaluation chunk size")->capture_default_str();
    app->add_option("--fanouts", fanouts, "Per-hop neighbor fan-outs, comma separated")->capture_default_str();
    app->add_option("--dropout", dropout, "Dropout rate")->capture_default_str();
    app->add_option("--embed-dim", embed_dim, "Embedding width")->capture_default_str();
    app->add_option("--hidden", hidden, "Encoder hidden width")->capture_default_str();
    app->add_option("--delta-hidden", delta_hidden, "Delta head hidden width")->capture_default_str();
    app->add_option("--heads", heads, "Attention heads")->capture_default_str();
    app->add_option("--layers", layers, "Message-passing layers")->capture_default_str();
    app->add_option("--attention", attention, "Softmax scope: joint over all in-edges or per relation")
        ->check(CLI::IsMember({"joint", "per_relation"}))
        ->capture_default_str();
    app->add_option("--deg-k", deg_k, "Genes in the DEG correlation")->capture_default_str();
    app->add_flag("--no-batch-norm", no_batch_norm, "Disable batch normalization in encoders");
    app->add_flag("--deterministic", deterministic, "Record 0 seconds per epoch so histories compare byte-for-byte");
  }

  kgp::TrainConfig config() const {
    kgp::TrainConfig c;
    c.model.architecture = kgp::parse_architecture(model);
    c.model.embed_dim = embed_dim;
    c.model.encoder_hidden = hidden;
    c.model.delta_hidden = delta_hidden;
    c.model.heads = heads;
    c.model.gat_layers = layers;
    c.model.dropout = dropout;
    c.model.batch_norm = !no_batch_norm;
    c.model.joint_attention = attention == "joint";
    c.optim.lr = lr;
    c.optim.weight_decay = weight_decay;
    c.batch_size = batch;
    c.eval_batch_size = eval_batch;
    c.epochs = epochs;
    c.deg_k = deg_k;
    c.seed = seed;
    c.record_time = !deterministic;
    c.fanouts.clear();
    std::stringstream ss(fanouts);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        long v = std::stol(item, &used);
        if (used != item.size() || v <= 0) throw std::invalid_argument(item);
        c.fanouts.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw kgp::Error(kgp::Errc::ParamDomain, "bad fan-out '" + item + "'");
      }
    }
    if (c.fanouts.size() != layers && c.model.architecture == kgp::Architecture::gat)
      throw kgp::Error(kgp::Errc::ParamDomain, "need one fan-out per layer (" + std::to_string(layers) + ")");
    return c;
  }
};

kgp::chem::SplitAssignment read_split(const fs::path& p) {
  json j;
  try {
    j = json::parse(kgp::io::read_text(p));
  } catch (const json::exception& e) {
    throw kgp::Error(kgp::Errc::Format, p.string() + ": " + e.what());
  }
  return kgp::chem::split_from_json(j);
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  kgp::io::write_text(p, j.dump(2) + "\n");
}

json summary_json(const std::vector<kgp::metrics::SampleMetric>& rows) {
  return {{"samples", rows.size()},
          {"pearson_mean", kgp::metrics::mean_of(rows, &kgp::metrics::SampleMetric::pearson)},
          {"deg_mean", kgp::metrics::mean_of(rows, &kgp::metrics::SampleMetric::deg)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph perturbation prediction pipeline"};
  app.set_version_flag("--version", std::string("kgp ") + KGP_VERSION + " (" + KGP_BUILD_TYPE + ", C++" + std::to_string(__cplusplus / 100 % 100) + ")");
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a planted graph mechanism");
  fs::path synth_out;
  kgp::synth::SynthParams sp;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", sp.seed, "Generator seed")->capture_default_str();
  synth->add_option("--n-drugs", sp.n_drugs, "Drugs")->capture_default_str();
  synth->add_option("--n-proteins", sp.n_proteins, "Proteins")->capture_default_str();
  synth->add_option("--n-pathways", sp.n_pathways, "Pathways")->capture_default_str();
  synth->add_option("--n-cells", sp.n_cells, "Cell lines")->capture_default_str();
  synth->add_option("--genes", sp.genes, "Genes per expression profile")->capture_default_str();
  synth->add_option("--targets-min", sp.targets_min, "Minimum targets per drug")->capture_default_str();
  synth->add_option("--targets-max", sp.targets_max, "Maximum targets per drug")->capture_default_str();
  synth->add_option("--families", sp.scaffold_families, "Scaffold families")->capture_default_str();
  synth->add_option("--noise-sd", sp.noise_sd, "Observation noise sd")->capture_default_str();
  synth->add_option("--feature-dim", sp.feature_dim, "Feature width per modality")->capture_default_str();
  synth->add_option("--latent-dim", sp.latent_dim, "Latent width behind signatures and features")->capture_default_str();
  synth->add_option("--ppi-degree", sp.ppi_degree, "Protein interactions per protein")->capture_default_str();
  synth->add_option("--similarity-degree", sp.similarity_degree, "Similarity edges per drug")->capture_default_str();
  synth->add_option("--baseline-sd", sp.baseline_sd, "Baseline expression sd")->capture_default_str();
  synth->add_option("--pathway-scale", sp.pathway_scale, "Pathway modifier scale")->capture_default_str();
  synth->add_option("--common-scale", sp.common_scale, "Per-cell shared response scale")->capture_default_str();
  synth->add_option("--feature-noise", sp.feature_noise, "Protein and pathway feature noise sd")->capture_default_str();
  synth->add_option("--drug-feature-noise", sp.drug_feature_noise, "Drug feature noise sd")->capture_default_str();

  // split
  auto* split = app.add_subcommand("split", "Assign drugs to train and test by scaffold or at random");
  fs::path split_data, split_out, split_audit;
  std::string split_mode = "scaffold";
  double split_frac = 0.8;
  std::uint64_t split_seed = 0;
  split->add_option("--data", split_data, "Dataset directory")->required();
  split->add_option("--mode", split_mode, "Split mode")->check(CLI::IsMember({"scaffold", "random"}))->capture_default_str();
  split->add_option("--frac", split_frac, "Target train fraction")->capture_default_str();
  split->add_option("--seed", split_seed, "Split seed")->capture_default_str();
  split->add_option("--out", split_out, "Split JSON path (default <data>/split_<mode>.json)");
  split->add_option("--audit", split_audit, "Audit JSON path (default <out> with _audit suffix)");

  // train
  auto* train = app.add_subcommand("train", "Train one model and write its checkpoint and history");
  fs::path train_data, train_split, train_out;
  std::string train_ablation = "none";
  std::uint64_t train_ablation_seed = 0;
  TrainFlags tf;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--split", train_split, "Split JSON")->required();
  tf.attach(train, true);
  train->add_option("--ablation", train_ablation, "Graph ablation (GAT only)")
      ->check(CLI::IsMember({"none", "edge_shuffle", "node_randomize"}))
      ->capture_default_str();
  train->add_option("--ablation-seed", train_ablation_seed, "Ablation seed")->capture_default_str();
  train->add_option("--out", train_out, "Output directory (model.dgck, history.csv)")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the test side of a split");
  fs::path eval_ckpt, eval_data, eval_split, eval_out;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--split", eval_split, "Split JSON")->required();
  eval->add_option("--out", eval_out, "Output directory (metrics.csv, summary.json)")->required();

  // bootstrap
  auto* boot = app.add_subcommand("bootstrap", "Paired bootstrap of mean(a) - mean(b) over per-sample metrics");
  fs::path boot_a, boot_b, boot_out;
  std::size_t boot_iters = 1000;
  std::uint64_t boot_seed = 0;
  std::string boot_metric = "deg";
  boot->add_option("--a", boot_a, "Metric CSV of model a")->required();
  boot->add_option("--b", boot_b, "Metric CSV of model b")->required();
  boot->add_option("--iters", boot_iters, "Bootstrap iterations")->capture_default_str();
  boot->add_option("--seed", boot_seed, "Bootstrap seed")->capture_default_str();
  boot->add_option("--metric", boot_metric, "Metric column")->check(CLI::IsMember({"deg", "pearson"}))->capture_default_str();
  boot->add_option("--out", boot_out, "Comparison JSON path (default stdout)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run the model x split x ablation matrix");
  fs::path abl_data, abl_out;
  bool abl_matrix = false;
  double abl_frac = 0.8;
  std::uint64_t abl_split_seed = 0, abl_ablation_seed = 0, abl_boot_seed = 0;
  std::size_t abl_iters = 1000;
  TrainFlags af;
  ablate->add_option("--data", abl_data, "Dataset directory")->required();
  ablate->add_flag("--matrix", abl_matrix, "Run the full 10-row matrix")->required();
  ablate->add_option("--frac", abl_frac, "Target train fraction of both splits")->capture_default_str();
  ablate->add_option("--split-seed", abl_split_seed, "Split seed")->capture_default_str();
  ablate->add_option("--ablation-seed", abl_ablation_seed, "Ablation seed")->capture_default_str();
  ablate->add_option("--bootstrap-seed", abl_boot_seed, "Bootstrap seed")->capture_default_str();
  ablate->add_option("--iters", abl_iters, "Bootstrap iterations")->capture_default_str();
  af.attach(ablate, false);
  ablate->add_option("--out", abl_out, "Results CSV path (default <data>/matrix.csv)");

  // attn
  auto* attn = app.add_subcommand("attn", "Attention source-type aggregate or a drug's reasoning subgraph");
  fs::path attn_ckpt, attn_data, attn_split, attn_out;
  std::string attn_drug;
  std::size_t attn_k = 2, attn_top_m = 5;
  std::uint64_t attn_seed = 0;
  attn->add_option("--ckpt", attn_ckpt, "GAT checkpoint")->required();
  attn->add_option("--data", attn_data, "Dataset directory")->required();
  attn->add_option("--split", attn_split, "Restrict the aggregate to the test drugs of this split");
  attn->add_option("--drug", attn_drug, "Export the reasoning subgraph of this drug instead of the aggregate");
  attn->add_option("--k", attn_k, "Hops in the reasoning subgraph")->capture_default_str();
  attn->add_option("--top-m", attn_top_m, "In-edges kept per expanded node")->capture_default_str();
  attn->add_option("--seed", attn_seed, "Neighbor sampling seed")->capture_default_str();
  attn->add_option("--out", attn_out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      auto ds = kgp::synth::generate(sp);
      kgp::synth::write_dataset(ds, synth_out);
      std::cout << "wrote " << ds.truth.drug_ids.size() << " drugs, " << ds.samples.size() << " samples to " << synth_out.string() << "\n";
    } else if (*split) {
      auto g = kgp::load_graph(split_data / "manifest.json");
      auto drugs = kgp::drug_entries(g);
      kgp::chem::SplitAssignment s;
      if (split_mode == "scaffold") {
        s = kgp::chem::scaffold_split(drugs, split_frac, split_seed);
      } else {
        std::vector<std::string> ids;
        for (auto& d : drugs) ids.push_back(d.id);
        s = kgp::chem::random_split(ids, split_frac, split_seed);
      }
      if (split_out.empty()) split_out = split_data / ("split_" + split_mode + ".json");
      if (split_audit.empty()) split_audit = split_out.parent_path() / (split_out.stem().string() + "_audit.json");
      auto audit = kgp::chem::scaffold_audit(s, drugs);
      write_json(split_out, kgp::chem::to_json(s));
      write_json(split_audit, {{"mode", s.mode},
                               {"overlap", kgp::chem::overlap_count(audit)},
                               {"achieved_train_fraction", s.achieved_train_fraction},
                               {"scaffolds", kgp::chem::audit_to_json(audit)}});
      std::cout << s.mode << " split: " << s.train.size() << " train, " << s.test.size() << " test, "
                << kgp::chem::overlap_count(audit) << " overlapping scaffolds\n";
    } else if (*train) {
      auto data = kgp::load_dataset(train_data);
      auto s = read_split(train_split);
      auto cfg = tf.config();
      cfg.split_mode = s.mode;
      cfg.ablation = train_ablation;
      cfg.ablation_seed = train_ablation_seed;
      const auto g = kgp::graph_for(cfg, data.graph);
      auto result = kgp::train(cfg, data, g, kgp::partition_samples(data, s));
      fs::create_directories(train_out);
      kgp::save_checkpoint(train_out / "model.dgck", result.checkpoint);
      kgp::write_history(train_out / "history.csv", result.history);
      std::cout << "trained " << tf.model << " for " << result.history.size() << " epochs";
      if (result.best_epoch) std::cout << ", best epoch " << *result.best_epoch << " test DEG " << kgp::io::fmt_real(result.best_deg);
      std::cout << "\n";
    } else if (*eval) {
      auto ck = kgp::load_checkpoint(eval_ckpt);
      auto cfg = kgp::TrainConfig::from_json(ck.meta);
      auto data = kgp::load_dataset(eval_data);
      auto s = read_split(eval_split);
      const auto g = kgp::graph_for(cfg, data.graph);
      auto rows = kgp::score_checkpoint(ck, cfg, data, g, kgp::partition_samples(data, s));
      fs::create_directories(eval_out);
      kgp::metrics::write_metric_table(eval_out / "metrics.csv", rows);
      auto summary = summary_json(rows);
      summary["model"] = kgp::to_string(cfg.model.architecture);
      summary["split"] = s.mode;
      summary["ablation"] = cfg.ablation;
      write_json(eval_out / "summary.json", summary);
      std::cout << summary.dump() << "\n";
    } else if (*boot) {
      auto a = kgp::metrics::read_metric_table(boot_a);
      auto b = kgp::metrics::read_metric_table(boot_b);
      if (a.size() != b.size()) throw kgp::Error(kgp::Errc::LengthMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " rows");
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].drug_id != b[i].drug_id || a[i].cell_id != b[i].cell_id)
          throw kgp::Error(kgp::Errc::LengthMismatch, "row " + std::to_string(i) + " pairs different samples");
      auto field = boot_metric == "deg" ? &kgp::metrics::SampleMetric::deg : &kgp::metrics::SampleMetric::pearson;
      auto r = kgp::metrics::paired_bootstrap(kgp::metrics::column(a, field), kgp::metrics::column(b, field), boot_iters, boot_seed);
      auto j = r.to_json(boot_a.string(), boot_b.string());
      j["metric"] = boot_metric;
      j["seed"] = boot_seed;
      if (boot_out.empty()) std::cout << j.dump(2) << "\n";
      else write_json(boot_out, j);
    } else if (*ablate) {
      auto data = kgp::load_dataset(abl_data);
      auto drugs = kgp::drug_entries(data.graph);
      std::vector<std::string> ids;
      for (auto& d : drugs) ids.push_back(d.id);
      std::vector<kgp::chem::SplitAssignment> splits{kgp::chem::scaffold_split(drugs, abl_frac, abl_split_seed),
                                                     kgp::chem::random_split(ids, abl_frac, abl_split_seed)};
      auto cfg = af.config();
      kgp::MatrixOptions opt;
      opt.bootstrap_iters = abl_iters;
      opt.bootstrap_seed = abl_boot_seed;
      opt.ablation_seed = abl_ablation_seed;
      opt.on_cell = [](const kgp::MatrixCell& c) {
        std::cerr << kgp::to_string(c.model) << " " << c.split << " " << kgp::to_string(c.ablation) << " deg " << kgp::io::fmt_real(c.deg_mean)
                  << "\n";
      };
      auto cells = kgp::run_matrix(cfg, data, splits, opt);
      if (abl_out.empty()) abl_out = abl_data / "matrix.csv";
      if (abl_out.has_parent_path()) fs::create_directories(abl_out.parent_path());
      kgp::write_matrix(abl_out, cells);
      std::cout << kgp::io::read_text(abl_out);
    } else if (*attn) {
      auto ck = kgp::load_checkpoint(attn_ckpt);
      auto cfg = kgp::TrainConfig::from_json(ck.meta);
      if (cfg.model.architecture != kgp::Architecture::gat)
        throw kgp::Error(kgp::Errc::ParamDomain, "attention needs a gat checkpoint, got " + std::string(kgp::to_string(cfg.model.architecture)));
      auto data = kgp::load_dataset(attn_data);
      const auto g = kgp::graph_for(cfg, data.graph);
      auto base = kgp::model_from_checkpoint<float>(ck);
      const auto& gat = dynamic_cast<const kgp::HeteroGat<float>&>(*base);
      if (!attn_drug.empty()) {
        auto j = kgp::khop_reasoning_subgraph(gat, g, attn_drug, attn_k, attn_top_m, attn_seed);
        if (attn_out.empty()) std::cout << j.dump(2) << "\n";
        else write_json(attn_out, j);
      } else {
        std::vector<std::uint32_t> drugs;
        if (!attn_split.empty()) {
          auto s = read_split(attn_split);
          for (const auto& id : s.test) {
            auto r = g.find_node(id);
            if (!r || r->type != kgp::NodeType::drug) throw kgp::Error(kgp::Errc::UnknownDrug, id);
            drugs.push_back(r->index);
          }
        } else {
          for (std::uint32_t i = 0; i < g.node_count(kgp::NodeType::drug); ++i) drugs.push_back(i);
        }
        auto records = kgp::record_attention(gat, g, drugs, cfg.fanouts, cfg.eval_batch_size, attn_seed);
        const auto last = static_cast<std::uint32_t>(cfg.model.gat_layers - 1);
        auto csv = kgp::attention_csv(records, last);
        if (attn_out.empty()) std::cout << csv;
        else kgp::io::write_text(attn_out, csv);
      }
    }
  } catch (const kgp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Io: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
