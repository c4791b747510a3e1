#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "kgp/chem.hpp"
#include "kgp/error.hpp"
#include "kgp/graph.hpp"
#include "kgp/io.hpp"
#include "kgp/rng.hpp"

namespace kgp::synth {

struct SynthParams {
  std::size_t n_drugs = 300;
  std::size_t n_proteins = 100;
  std::size_t n_pathways = 20;
  std::size_t n_cells = 3;
  std::size_t genes = 64;
  std::size_t targets_min = 1;
  std::size_t targets_max = 3;
  std::size_t scaffold_families = 30;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;

  std::size_t feature_dim = 32;  // per modality; two modalities
  std::size_t latent_dim = 8;
  std::size_t ppi_degree = 4;
  std::size_t similarity_degree = 3;
  double baseline_sd = 0.5;
  double pathway_scale = 0.2;
  double feature_noise = 0.1;
  double drug_feature_noise = 0.3;
  double common_scale = 1.5;  // per-cell response shared by every drug

  void check() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw Error(Errc::ParamDomain, std::string(name) + " must be positive");
    };
    positive(n_drugs, "n_drugs");
    positive(n_proteins, "n_proteins");
    positive(n_pathways, "n_pathways");
    positive(n_cells, "n_cells");
    positive(genes, "genes");
    positive(targets_min, "targets_min");
    positive(scaffold_families, "scaffold_families");
    positive(feature_dim, "feature_dim");
    positive(latent_dim, "latent_dim");
    if (targets_max < targets_min) throw Error(Errc::ParamDomain, "targets_max < targets_min");
    if (scaffold_families > n_drugs) throw Error(Errc::ParamDomain, "scaffold_families > n_drugs");
    if (scaffold_families > n_proteins) throw Error(Errc::ParamDomain, "need at least one protein per scaffold family");
    if (!(noise_sd >= 0) || !(baseline_sd >= 0) || !(pathway_scale >= 0) || !(feature_noise >= 0) || !(drug_feature_noise >= 0) ||
        !(common_scale >= 0))
      throw Error(Errc::ParamDomain, "scales must be non-negative");
  }

  nlohmann::json to_json() const {
    return {{"n_drugs", n_drugs},         {"n_proteins", n_proteins},
            {"n_pathways", n_pathways},   {"n_cells", n_cells},
            {"genes", genes},             {"targets_min", targets_min},
            {"targets_max", targets_max}, {"scaffold_families", scaffold_families},
            {"noise_sd", noise_sd},       {"seed", seed},
            {"feature_dim", feature_dim}, {"latent_dim", latent_dim},
            {"ppi_degree", ppi_degree},   {"similarity_degree", similarity_degree},
            {"baseline_sd", baseline_sd}, {"pathway_scale", pathway_scale},
            {"feature_noise", feature_noise}, {"drug_feature_noise", drug_feature_noise},
            {"common_scale", common_scale}};
  }

  static SynthParams from_json(const nlohmann::json& j) {
    SynthParams p;
    p.n_drugs = j.value("n_drugs", p.n_drugs);
    p.n_proteins = j.value("n_proteins", p.n_proteins);
    p.n_pathways = j.value("n_pathways", p.n_pathways);
    p.n_cells = j.value("n_cells", p.n_cells);
    p.genes = j.value("genes", p.genes);
    p.targets_min = j.value("targets_min", p.targets_min);
    p.targets_max = j.value("targets_max", p.targets_max);
    p.scaffold_families = j.value("scaffold_families", p.scaffold_families);
    p.noise_sd = j.value("noise_sd", p.noise_sd);
    p.seed = j.value("seed", p.seed);
    p.feature_dim = j.value("feature_dim", p.feature_dim);
    p.latent_dim = j.value("latent_dim", p.latent_dim);
    p.ppi_degree = j.value("ppi_degree", p.ppi_degree);
    p.similarity_degree = j.value("similarity_degree", p.similarity_degree);
    p.baseline_sd = j.value("baseline_sd", p.baseline_sd);
    p.pathway_scale = j.value("pathway_scale", p.pathway_scale);
    p.feature_noise = j.value("feature_noise", p.feature_noise);
    p.drug_feature_noise = j.value("drug_feature_noise", p.drug_feature_noise);
    p.common_scale = j.value("common_scale", p.common_scale);
    return p;
  }
};

/// Ring systems used as scaffold families. "{R}" marks the attachment point.
inline const std::vector<std::string>& ring_templates() {
  static const std::vector<std::string> t = {
      "{R}c1ccccc1",          "{R}c1ccccn1",           "{R}c1ncccn1",        "{R}c1cccs1",
      "{R}c1ccco1",           "{R}c1ccc[nH]1",         "{R}c1ncc[nH]1",      "{R}c1ccc2ccccc2c1",
      "{R}c1ccc2[nH]ccc2c1",  "{R}c1ccc2ncccc2c1",     "{R}c1ccc2occc2c1",   "{R}c1ccc2sccc2c1",
      "{R}C1CCCCC1",          "{R}C1CCCC1",            "{R}C1CCNCC1",        "{R}C1COCCN1",
      "{R}N1CCNCC1",          "{R}C1CCCO1",            "{R}C1CC1",           "{R}c1ccc(cc1)-c1ccccc1",
      "{R}c1ccc(Cc2ccccc2)cc1", "{R}c1ccc(cc1)C1CCNCC1", "{R}c1ccc(cc1)C1CCCCC1", "{R}c1ncco1",
      "{R}c1nccs1",           "{R}c1cnccn1",           "{R}c1ccc2[nH]cnc2c1", "{R}c1ccc2CCCCc2c1",
      "{R}C1CCCCCC1",         "{R}c1ccc(Oc2ccccc2)cc1", "{R}c1cccnn1",       "{R}C1CCOCC1"};
  return t;
}

/// Acyclic substituents; they are pruned by scaffold extraction.
inline const std::vector<std::string>& substituents() {
  static const std::vector<std::string> s = {"C",  "CC",   "CCC",   "O",      "OC",  "N",   "CN",
                                             "F",  "Cl",   "Br",    "C(=O)O", "C#N", "CCO", "C(C)C",
                                             "S",  "NC(=O)C", "OCC", "CC(=O)N"};
  return s;
}

inline std::string decorate(const std::string& tmpl, const std::string& sub) {
  auto pos = tmpl.find("{R}");
  return tmpl.substr(0, pos) + sub + tmpl.substr(pos + 3);
}

/// Everything the generator drew; the oracle reads only this.
struct SynthTruth {
  SynthParams params;
  std::vector<std::string> drug_ids, protein_ids, pathway_ids, cell_ids;
  std::vector<std::size_t> drug_family;
  std::vector<std::string> family_key;                   // scaffold key per family
  std::vector<std::vector<std::uint32_t>> drug_targets;  // protein indices, sorted
  std::vector<std::uint32_t> protein_pathway;
  std::vector<std::vector<double>> signature;  // [protein][G]
  std::vector<std::vector<double>> modifier;   // [pathway][G]
  std::vector<std::vector<double>> cell_mask;  // [cell][G]
  std::vector<std::vector<double>> common;     // [cell][G]
  std::vector<std::vector<double>> baseline;   // [cell][G]

  nlohmann::json to_json() const {
    return {{"params", params.to_json()},     {"drug_ids", drug_ids},         {"protein_ids", protein_ids},
            {"pathway_ids", pathway_ids},     {"cell_ids", cell_ids},         {"drug_family", drug_family},
            {"family_key", family_key},       {"drug_targets", drug_targets}, {"protein_pathway", protein_pathway},
            {"signature", signature},         {"modifier", modifier},         {"cell_mask", cell_mask},         {"common", common},
            {"baseline", baseline}};
  }

  static SynthTruth from_json(const nlohmann::json& j) {
    SynthTruth t;
    t.params = SynthParams::from_json(j.at("params"));
    j.at("drug_ids").get_to(t.drug_ids);
    j.at("protein_ids").get_to(t.protein_ids);
    j.at("pathway_ids").get_to(t.pathway_ids);
    j.at("cell_ids").get_to(t.cell_ids);
    j.at("drug_family").get_to(t.drug_family);
    j.at("family_key").get_to(t.family_key);
    j.at("drug_targets").get_to(t.drug_targets);
    j.at("protein_pathway").get_to(t.protein_pathway);
    j.at("signature").get_to(t.signature);
    j.at("modifier").get_to(t.modifier);
    j.at("cell_mask").get_to(t.cell_mask);
    j.at("common").get_to(t.common);
    j.at("baseline").get_to(t.baseline);
    return t;
  }

  std::size_t drug_index(const std::string& id) const {
    auto it = std::find(drug_ids.begin(), drug_ids.end(), id);
    if (it == drug_ids.end()) throw Error(Errc::UnknownId, "drug " + id);
    return static_cast<std::size_t>(it - drug_ids.begin());
  }
  std::size_t cell_index(const std::string& id) const {
    auto it = std::find(cell_ids.begin(), cell_ids.end(), id);
    if (it == cell_ids.end()) throw Error(Errc::UnknownId, "cell " + id);
    return static_cast<std::size_t>(it - cell_ids.begin());
  }
};

/// Noiseless delta: u_c + sum over targets p of s_p * m_c + r_pathway(p).
inline std::vector<double> oracle_delta(const SynthTruth& t, std::size_t drug, std::size_t cell) {
  if (drug >= t.drug_targets.size()) throw Error(Errc::UnknownId, "drug index " + std::to_string(drug));
  if (cell >= t.cell_mask.size()) throw Error(Errc::UnknownId, "cell index " + std::to_string(cell));
  const auto G = t.params.genes;
  std::vector<double> d = t.common[cell];
  for (auto p : t.drug_targets[drug]) {
    const auto& s = t.signature[p];
    const auto& r = t.modifier[t.protein_pathway[p]];
    for (std::size_t k = 0; k < G; ++k) d[k] += s[k] * t.cell_mask[cell][k] + r[k];
  }
  return d;
}

inline std::vector<double> oracle_delta(const SynthTruth& t, const std::string& drug_id, const std::string& cell_id) {
  return oracle_delta(t, t.drug_index(drug_id), t.cell_index(cell_id));
}

inline SynthTruth load_truth(const std::filesystem::path& dir) { return SynthTruth::from_json(nlohmann::json::parse(io::read_text(dir / "truth.json"))); }

namespace detail {

inline std::string pad_id(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

inline int digits(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

using Mat = Eigen::MatrixXd;

inline Mat gaussian(std::size_t r, std::size_t c, double sd, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = sd * z(rng);
  return m;
}

inline std::vector<double> row_of(const Mat& m, Eigen::Index i) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

/// Random symmetric edges with roughly `degree` partners per node.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> random_pairs(std::size_t n, std::size_t degree, Rng& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  if (n < 2) return out;
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  const std::size_t want = n * degree / 2;
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
  const std::size_t max_pairs = n * (n - 1) / 2;
  while (seen.size() < std::min(want, max_pairs)) {
    auto a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (seen.insert({a, b}).second) out.push_back({a, b});
  }
  return out;
}

}  // namespace detail

struct SynthDataset {
  SynthTruth truth;
  std::vector<NodeRecord> nodes;
  std::vector<EdgeRecord> edges;
  std::map<NodeType, FeatureMatrix> features;
  io::NdfMatrix expression;  // [S, 1, G]
  io::NdfMatrix baselines;   // [C, 1, G]
  std::vector<std::array<std::string, 3>> samples;  // drug_id, cell_id, row
};

/// Planted mechanism: each scaffold family owns a disjoint pool of proteins
/// and its drugs target 1-3 of them. Every drug in a cell also shares that
/// cell's common response. Drug features carry the family code but
/// not the targets; protein and pathway features are noisy linear images of
/// the latents that define their signatures and modifiers.
inline SynthDataset generate(const SynthParams& p) {
  p.check();
  using namespace detail;
  SynthDataset ds;
  auto& t = ds.truth;
  t.params = p;
  const auto G = p.genes;
  const auto L = p.latent_dim;
  const auto F = p.scaffold_families;
  const auto W = p.feature_dim;

  for (std::size_t i = 0; i < p.n_drugs; ++i) t.drug_ids.push_back(pad_id("D", i, digits(p.n_drugs - 1)));
  for (std::size_t i = 0; i < p.n_proteins; ++i) t.protein_ids.push_back(pad_id("P", i, digits(p.n_proteins - 1)));
  for (std::size_t i = 0; i < p.n_pathways; ++i) t.pathway_ids.push_back(pad_id("W", i, digits(p.n_pathways - 1)));
  for (std::size_t i = 0; i < p.n_cells; ++i) t.cell_ids.push_back(pad_id("C", i, digits(p.n_cells - 1)));

  // latent structure
  auto rng_lat = derive_rng(p.seed, {1});
  const Mat A = gaussian(G, L, 1.0 / std::sqrt(static_cast<double>(L)), rng_lat);  // protein latent -> signature
  const Mat R = gaussian(G, L, p.pathway_scale / std::sqrt(static_cast<double>(L)), rng_lat);
  const Mat Zp = gaussian(p.n_proteins, L, 1.0, rng_lat);
  const Mat Zw = gaussian(p.n_pathways, L, 1.0, rng_lat);
  const Mat S = Zp * A.transpose();  // [P, G]
  const Mat M = Zw * R.transpose();  // [W, G]
  for (std::size_t i = 0; i < p.n_proteins; ++i) t.signature.push_back(row_of(S, static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < p.n_pathways; ++i) t.modifier.push_back(row_of(M, static_cast<Eigen::Index>(i)));

  auto rng_cell = derive_rng(p.seed, {2});
  std::uniform_real_distribution<double> mask(0.5, 1.5);
  std::normal_distribution<double> base(0.0, 1.0);
  for (std::size_t c = 0; c < p.n_cells; ++c) {
    std::vector<double> m(G), b(G);
    for (auto& v : m) v = mask(rng_cell);
    for (auto& v : b) v = p.baseline_sd * base(rng_cell);
    t.cell_mask.push_back(std::move(m));
    t.baseline.push_back(std::move(b));
  }
  std::normal_distribution<double> shared(0.0, 1.0);
  for (std::size_t c = 0; c < p.n_cells; ++c) {
    std::vector<double> u(G);
    for (auto& v : u) v = p.common_scale * shared(rng_cell);
    t.common.push_back(std::move(u));
  }

  // proteins -> pathways
  auto rng_graph = derive_rng(p.seed, {3});
  std::uniform_int_distribution<std::uint32_t> pick_pathway(0, static_cast<std::uint32_t>(p.n_pathways - 1));
  for (std::size_t i = 0; i < p.n_proteins; ++i) t.protein_pathway.push_back(pick_pathway(rng_graph));

  // families, scaffolds, targets
  const auto& templates = ring_templates();
  if (F > templates.size()) throw Error(Errc::ParamDomain, "at most " + std::to_string(templates.size()) + " scaffold families");
  const std::size_t pool = p.n_proteins / F;
  const auto& subs = substituents();
  auto rng_drug = derive_rng(p.seed, {4});
  std::uniform_int_distribution<std::size_t> pick_sub(0, subs.size() - 1);
  for (std::size_t f = 0; f < F; ++f) t.family_key.push_back(chem::murcko_scaffold(decorate(templates[f], "")));
  std::vector<std::string> smiles(p.n_drugs);
  for (std::size_t i = 0; i < p.n_drugs; ++i) {
    const std::size_t f = i % F;
    t.drug_family.push_back(f);
    smiles[i] = decorate(templates[f], subs[pick_sub(rng_drug)]);
    std::vector<std::uint32_t> members(pool);
    std::iota(members.begin(), members.end(), static_cast<std::uint32_t>(f * pool));
    const std::size_t hi = std::min(p.targets_max, pool);
    const std::size_t lo = std::min(p.targets_min, hi);
    std::uniform_int_distribution<std::size_t> count(lo, hi);
    std::vector<std::uint32_t> chosen;
    std::sample(members.begin(), members.end(), std::back_inserter(chosen), count(rng_drug), rng_drug);
    std::sort(chosen.begin(), chosen.end());
    t.drug_targets.push_back(std::move(chosen));
  }

  // nodes
  for (std::size_t i = 0; i < p.n_drugs; ++i)
    ds.nodes.push_back({t.drug_ids[i], NodeType::drug, "drug_" + t.drug_ids[i] + "_f" + std::to_string(t.drug_family[i]), smiles[i]});
  for (std::size_t i = 0; i < p.n_proteins; ++i) ds.nodes.push_back({t.protein_ids[i], NodeType::gene_protein, "protein_" + t.protein_ids[i], ""});
  for (std::size_t i = 0; i < p.n_pathways; ++i) ds.nodes.push_back({t.pathway_ids[i], NodeType::pathway, "pathway_" + t.pathway_ids[i], ""});
  for (std::size_t i = 0; i < p.n_cells; ++i) ds.nodes.push_back({t.cell_ids[i], NodeType::cell, "cell_" + t.cell_ids[i], ""});

  // edges
  for (std::size_t i = 0; i < p.n_drugs; ++i)
    for (auto q : t.drug_targets[i]) ds.edges.push_back({t.drug_ids[i], "targets", t.protein_ids[q]});
  for (std::size_t i = 0; i < p.n_proteins; ++i) ds.edges.push_back({t.protein_ids[i], "in_pathway", t.pathway_ids[t.protein_pathway[i]]});
  for (auto [a, b] : random_pairs(p.n_proteins, p.ppi_degree, rng_graph)) {
    ds.edges.push_back({t.protein_ids[a], "interacts", t.protein_ids[b]});
    ds.edges.push_back({t.protein_ids[b], "interacts", t.protein_ids[a]});
  }
  for (auto [a, b] : random_pairs(p.n_drugs, p.similarity_degree, rng_graph)) {
    ds.edges.push_back({t.drug_ids[a], "similar", t.drug_ids[b]});
    ds.edges.push_back({t.drug_ids[b], "similar", t.drug_ids[a]});
  }

  // features: two modalities, each a noisy linear image of the node's latent
  auto rng_feat = derive_rng(p.seed, {5});
  auto features = [&](const Mat& Z, double noise) {
    const Mat P1 = gaussian(W, L, 1.0 / std::sqrt(static_cast<double>(L)), rng_feat);
    const Mat P2 = gaussian(W, L, 1.0 / std::sqrt(static_cast<double>(L)), rng_feat);
    Mat X(Z.rows(), static_cast<Eigen::Index>(2 * W));
    X.leftCols(static_cast<Eigen::Index>(W)) = Z * P1.transpose();
    X.rightCols(static_cast<Eigen::Index>(W)) = Z * P2.transpose();
    X += gaussian(static_cast<std::size_t>(Z.rows()), 2 * W, noise, rng_feat);
    return X;
  };
  auto to_fm = [&](NodeType type, const Mat& X, std::uint32_t modalities, std::uint32_t dim) {
    FeatureMatrix f;
    f.type = type;
    f.rows = static_cast<std::uint32_t>(X.rows());
    f.modalities = modalities;
    f.dim = dim;
    f.values.resize(static_cast<std::size_t>(X.rows() * X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index j = 0; j < X.cols(); ++j) f.values[static_cast<std::size_t>(i * X.cols() + j)] = static_cast<float>(X(i, j));
    return f;
  };
  // drugs: one code per family, mutually orthogonal when the width allows, so
  // unseen families point away from the seen ones
  Mat codes = gaussian(F, 2 * W, 1.0, rng_feat);
  if (F <= 2 * W) {
    Eigen::HouseholderQR<Mat> qr(codes.transpose());
    codes = (qr.householderQ() * Mat::Identity(static_cast<Eigen::Index>(2 * W), static_cast<Eigen::Index>(F))).transpose() *
            std::sqrt(static_cast<double>(2 * W));
  }
  Mat Xd = gaussian(p.n_drugs, 2 * W, p.drug_feature_noise, rng_feat);
  for (std::size_t i = 0; i < p.n_drugs; ++i) Xd.row(static_cast<Eigen::Index>(i)) += codes.row(static_cast<Eigen::Index>(t.drug_family[i]));
  ds.features[NodeType::drug] = to_fm(NodeType::drug, Xd, 2, static_cast<std::uint32_t>(W));
  ds.features[NodeType::gene_protein] = to_fm(NodeType::gene_protein, features(Zp, p.feature_noise), 2, static_cast<std::uint32_t>(W));
  ds.features[NodeType::pathway] = to_fm(NodeType::pathway, features(Zw, p.feature_noise), 2, static_cast<std::uint32_t>(W));
  Mat cellx(static_cast<Eigen::Index>(p.n_cells), static_cast<Eigen::Index>(2 * G));
  for (std::size_t c = 0; c < p.n_cells; ++c)
    for (std::size_t k = 0; k < G; ++k) {
      cellx(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = t.baseline[c][k];
      cellx(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(G + k)) = t.baseline[c][k];
    }
  ds.features[NodeType::cell] = to_fm(NodeType::cell, cellx, 2, static_cast<std::uint32_t>(G));

  // samples: every (drug, cell) pair
  auto rng_noise = derive_rng(p.seed, {6});
  std::normal_distribution<double> noise(0.0, 1.0);
  ds.expression = {static_cast<std::uint32_t>(p.n_drugs * p.n_cells), 1, static_cast<std::uint32_t>(G), {}};
  ds.expression.values.reserve(p.n_drugs * p.n_cells * G);
  std::size_t row = 0;
  for (std::size_t i = 0; i < p.n_drugs; ++i)
    for (std::size_t c = 0; c < p.n_cells; ++c) {
      auto d = oracle_delta(t, i, c);
      for (std::size_t k = 0; k < G; ++k)
        ds.expression.values.push_back(static_cast<float>(t.baseline[c][k] + d[k] + p.noise_sd * noise(rng_noise)));
      ds.samples.push_back({t.drug_ids[i], t.cell_ids[c], std::to_string(row++)});
    }
  ds.baselines = {static_cast<std::uint32_t>(p.n_cells), 1, static_cast<std::uint32_t>(G), {}};
  for (std::size_t c = 0; c < p.n_cells; ++c)
    for (std::size_t k = 0; k < G; ++k) ds.baselines.values.push_back(static_cast<float>(t.baseline[c][k]));
  return ds;
}

/// Writes the dataset in the graph/sample file formats plus truth.json.
inline void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  auto g = build_graph(ds.nodes, ds.edges, ds.features);
  nlohmann::json extra = {{"samples", "samples.tsv"},
                          {"expression", "samples.ndf"},
                          {"baselines", "baselines.tsv"},
                          {"baseline_matrix", "baselines.ndf"}};
  save_graph(g, dir, extra);
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : ds.samples) rows.push_back({s[0], s[1], s[2]});
  io::write_tsv(dir / "samples.tsv", {"drug_id", "cell_id", "row"}, rows);
  io::write_ndf(dir / "samples.ndf", ds.expression);
  std::vector<std::vector<std::string>> brows;
  for (std::size_t c = 0; c < ds.truth.cell_ids.size(); ++c) brows.push_back({ds.truth.cell_ids[c], std::to_string(c)});
  io::write_tsv(dir / "baselines.tsv", {"cell_id", "row"}, brows);
  io::write_ndf(dir / "baselines.ndf", ds.baselines);
  io::write_text(dir / "truth.json", ds.truth.to_json().dump() + "\n");
}

struct ProbeResult {
  double features_only = 0;      // exact target-set accuracy from drug features
  double features_and_edges = 0;  // same, with the drug's target multi-hot appended
};

/// Ridge probes predicting each drug's multi-hot target vector, scored by
/// exact set match (threshold 0.5) on a held-out fifth of the drugs.
inline ProbeResult target_probe(const SynthDataset& ds, std::uint64_t seed, double ridge = 1e-2) {
  const auto& t = ds.truth;
  const auto n = t.drug_ids.size();
  const auto P = t.protein_ids.size();
  const auto& df = ds.features.at(NodeType::drug);
  const auto w = df.width();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = derive_rng(seed, {0x960B});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = std::max<std::size_t>(1, n / 5);

  auto run = [&](bool with_edges) {
    const auto cols = w + (with_edges ? P : 0) + 1;
    auto design = [&](std::size_t i) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols));
      for (std::size_t k = 0; k < w; ++k) x(static_cast<Eigen::Index>(k)) = df.values[i * w + k];
      if (with_edges)
        for (auto q : t.drug_targets[i]) x(static_cast<Eigen::Index>(w + q)) = 1.0;
      x(static_cast<Eigen::Index>(cols - 1)) = 1.0;
      return x;
    };
    auto label = [&](std::size_t i) {
      Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
      for (auto q : t.drug_targets[i]) y(static_cast<Eigen::Index>(q)) = 1.0;
      return y;
    };
    const auto n_train = n - n_test;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(cols));
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(P));
    for (std::size_t r = 0; r < n_train; ++r) {
      X.row(static_cast<Eigen::Index>(r)) = design(order[n_test + r]).transpose();
      Y.row(static_cast<Eigen::Index>(r)) = label(order[n_test + r]).transpose();
    }
    Eigen::MatrixXd lhs = X.transpose() * X + ridge * Eigen::MatrixXd::Identity(X.cols(), X.cols());
    Eigen::MatrixXd B = lhs.ldlt().solve(X.transpose() * Y);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n_test; ++r) {
      const auto i = order[r];
      Eigen::VectorXd yhat = B.transpose() * design(i);
      Eigen::VectorXd y = label(i);
      bool exact = true;
      for (Eigen::Index q = 0; q < yhat.size(); ++q) exact = exact && ((yhat(q) > 0.5) == (y(q) > 0.5));
      hits += exact ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n_test);
  };
  return {run(false), run(true)};
}

}  // namespace kgp::synth
