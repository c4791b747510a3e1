#pragma once

#include "kgp/sampler.hpp"
#include "kgp/synthbench.hpp"
#include "kgp/trainer.hpp"
#include "toy_graph.hpp"

namespace toy {

inline kgp::synth::SynthParams small_params(std::uint64_t seed = 7) {
  kgp::synth::SynthParams p;
  p.n_drugs = 40;
  p.n_proteins = 24;
  p.n_pathways = 4;
  p.n_cells = 2;
  p.genes = 12;
  p.scaffold_families = 8;
  p.feature_dim = 6;
  p.latent_dim = 4;
  p.seed = seed;
  return p;
}

// Small synthetic dataset written to a temp dir and loaded back.
inline kgp::PerturbationData small_synth(const std::string& name, std::uint64_t seed = 7) {
  auto dir = temp_dir(name);
  kgp::synth::write_dataset(kgp::synth::generate(small_params(seed)), dir);
  return kgp::load_dataset(dir);
}

inline kgp::TrainConfig small_train_config(kgp::Architecture a) {
  kgp::TrainConfig c;
  c.model.architecture = a;
  c.model.embed_dim = 8;
  c.model.encoder_hidden = 16;
  c.model.delta_hidden = 16;
  c.model.heads = 2;
  c.batch_size = 16;
  c.eval_batch_size = 16;
  c.epochs = 3;
  c.fanouts = {5, 3};
  c.deg_k = 5;
  c.seed = 1;
  c.record_time = false;
  return c;
}

inline kgp::SplitSamples small_split(const kgp::PerturbationData& d, std::uint64_t seed = 42) {
  return kgp::partition_samples(d, kgp::chem::scaffold_split(kgp::drug_entries(d.graph), 0.8, seed));
}

}  // namespace toy
