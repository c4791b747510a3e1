#include <gtest/gtest.h>

#include <map>
#include <set>

#include "kgp/attention.hpp"
#include "small_synth.hpp"

using namespace kgp;

namespace {

AttentionRecord rec(std::uint32_t layer, NodeType src, NodeType dst, double w, std::uint32_t dst_index = 0) {
  AttentionRecord r;
  r.layer = layer;
  r.src = {src, 0};
  r.dst = {dst, dst_index};
  r.weight = w;
  return r;
}

struct Fixture {
  PerturbationData data = toy::small_synth("attention");
  std::unique_ptr<PerturbationModel<float>> model;

  Fixture() {
    ModelConfig c;
    c.architecture = Architecture::gat;
    c.genes = data.genes();
    c.embed_dim = 8;
    c.encoder_hidden = 8;
    c.delta_hidden = 8;
    c.heads = 2;
    c.gat_layers = 2;
    c.seed = 4;
    c.adopt_schema(data.graph);
    model = make_model<float>(c);
  }
  const HeteroGat<float>& gat() const { return dynamic_cast<const HeteroGat<float>&>(*model); }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

bool edge_exists(const HeteroGraph& g, const std::string& src, const std::string& dst, const std::string& relation, bool reversed) {
  auto s = g.find_node(src), d = g.find_node(dst);
  if (!s || !d) return false;
  if (reversed) std::swap(s, d);
  auto k = g.find_edge_type({s->type, relation, d->type});
  if (!k) return false;
  auto n = g.neighbors(*s, g.edge_set(*k), Direction::forward);
  return std::find(n.begin(), n.end(), d->index) != n.end();
}

std::set<std::string> ids_of(const nlohmann::json& arr, const char* key) {
  std::set<std::string> out;
  for (auto& x : arr) out.insert(x[key].get<std::string>());
  return out;
}

std::set<std::string> edge_keys(const nlohmann::json& edges) {
  std::set<std::string> out;
  for (auto& e : edges) out.insert(e["src"].get<std::string>() + ">" + e["dst"].get<std::string>() + ":" + e["relation"].get<std::string>());
  return out;
}

}  // namespace

TEST(Aggregate, Examples) {
  std::vector<AttentionRecord> r{rec(0, NodeType::gene_protein, NodeType::drug, 0.75), rec(0, NodeType::drug, NodeType::drug, 0.25),
                                 rec(1, NodeType::gene_protein, NodeType::drug, 1.0),
                                 rec(1, NodeType::pathway, NodeType::gene_protein, 1.0)};
  auto all = aggregate_by_source_type(r);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_DOUBLE_EQ(all[NodeType::gene_protein], 0.875);
  EXPECT_DOUBLE_EQ(all[NodeType::drug], 0.125);
  auto last = aggregate_by_source_type(r, NodeType::drug, 1);
  ASSERT_EQ(last.size(), 1u);
  EXPECT_DOUBLE_EQ(last[NodeType::gene_protein], 1.0);
  auto prot = aggregate_by_source_type(r, NodeType::gene_protein);
  EXPECT_DOUBLE_EQ(prot[NodeType::pathway], 1.0);
  auto j = distribution_json(all);
  EXPECT_DOUBLE_EQ(j["gene_protein"].get<double>(), 0.875);
}

TEST(Aggregate, EmptyRecords) {
  std::vector<AttentionRecord> none;
  try {
    aggregate_by_source_type(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyRecords);
  }
  std::vector<AttentionRecord> r{rec(0, NodeType::drug, NodeType::gene_protein, 1.0)};
  EXPECT_THROW(aggregate_by_source_type(r), Error);
  EXPECT_THROW(aggregate_by_source_type(r, NodeType::gene_protein, 3), Error);
}

TEST(Aggregate, CsvLayout) {
  std::vector<AttentionRecord> r{rec(0, NodeType::gene_protein, NodeType::drug, 0.5), rec(1, NodeType::drug, NodeType::drug, 0.5)};
  EXPECT_EQ(attention_csv(r, 1),
            "scope,source_type,destination_type,mass\n"
            "all_layers,drug,drug,0.5\nall_layers,gene_protein,drug,0.5\n"
            "final_layer,drug,drug,1\n");
}

TEST(RecordAttention, SumsToOneOnRealModel) {
  const auto& f = fixture();
  std::vector<std::uint32_t> drugs{0, 1, 2, 3, 4, 5, 6};
  // one chunk, so each destination forms a single softmax group
  auto records = record_attention(f.gat(), f.data.graph, drugs, {5, 3}, 0, 1);
  ASSERT_FALSE(records.empty());
  std::map<std::tuple<std::uint32_t, std::uint32_t, NodeRef>, double> sums;
  for (auto& r : records) sums[{r.layer, r.head, r.dst}] += r.weight;
  for (auto& [k, v] : sums) EXPECT_NEAR(v, 1.0, 1e-5);
  auto d = aggregate_by_source_type(records);
  double total = 0;
  for (auto& [t, m] : d) total += m;
  EXPECT_NEAR(total, 1.0, 1e-12);
  auto again = record_attention(f.gat(), f.data.graph, drugs, {5, 3}, 0, 1);
  ASSERT_EQ(again.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(again[i].weight, records[i].weight);
}

TEST(KHop, ErrorsAndDomain) {
  const auto& f = fixture();
  EXPECT_THROW(khop_reasoning_subgraph(f.gat(), f.data.graph, "nope", 1, 3), Error);
  EXPECT_THROW(khop_reasoning_subgraph(f.gat(), f.data.graph, "P00", 1, 3), Error);
  EXPECT_THROW(khop_reasoning_subgraph(f.gat(), f.data.graph, "D00", 0, 3), Error);
  EXPECT_THROW(khop_reasoning_subgraph(f.gat(), f.data.graph, "D00", 3, 3), Error);
  EXPECT_THROW(khop_reasoning_subgraph(f.gat(), f.data.graph, "D00", 1, 0), Error);
}

TEST(KHop, MonotoneInK) {
  const auto& f = fixture();
  for (std::string drug : {"D00", "D07", "D13"}) {
    auto one = khop_reasoning_subgraph(f.gat(), f.data.graph, drug, 1, 4);
    auto two = khop_reasoning_subgraph(f.gat(), f.data.graph, drug, 2, 4);
    auto n1 = ids_of(one["nodes"], "id"), n2 = ids_of(two["nodes"], "id");
    EXPECT_TRUE(std::includes(n2.begin(), n2.end(), n1.begin(), n1.end())) << drug;
    auto e1 = edge_keys(one["edges"]), e2 = edge_keys(two["edges"]);
    EXPECT_TRUE(std::includes(e2.begin(), e2.end(), e1.begin(), e1.end())) << drug;
    EXPECT_GE(n2.size(), n1.size());
    for (auto& n : one["nodes"]) EXPECT_LE(n["hop"].get<int>(), 1);
    EXPECT_EQ(one["nodes"][0]["id"], drug);
    EXPECT_EQ(one["hops"][0]["layer"], 1);
    double total = 0;
    for (auto& [t, m] : one["source_type_distribution"].items()) total += m.get<double>();
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(KHop, TopOneKeepsOneEdgePerExpandedNode) {
  const auto& f = fixture();
  auto j = khop_reasoning_subgraph(f.gat(), f.data.graph, "D05", 2, 1);
  std::map<std::pair<int, std::string>, int> per_dst;
  for (auto& e : j["edges"]) ++per_dst[{e["hop"].get<int>(), e["dst"].get<std::string>()}];
  ASSERT_FALSE(per_dst.empty());
  for (auto& [k, n] : per_dst) EXPECT_EQ(n, 1);
  for (auto& e : j["edges"]) {
    double mean = 0;
    for (auto& a : e["alpha"]) mean += a.get<double>();
    EXPECT_NEAR(e["alpha_mean"].get<double>(), mean / 2, 1e-12);
  }
}

TEST(KHop, DeterministicAndEdgesExist) {
  const auto& f = fixture();
  for (std::string drug : {"D01", "D22", "D39"}) {
    auto a = khop_reasoning_subgraph(f.gat(), f.data.graph, drug, 2, 3, 5);
    EXPECT_EQ(a.dump(), khop_reasoning_subgraph(f.gat(), f.data.graph, drug, 2, 3, 5).dump());
    for (auto& e : a["edges"])
      EXPECT_TRUE(edge_exists(f.data.graph, e["src"], e["dst"], e["relation"], e["reversed"].get<bool>())) << e.dump();
    std::set<std::string> nodes = ids_of(a["nodes"], "id");
    EXPECT_EQ(nodes.size(), a["nodes"].size());
    for (auto& e : a["edges"]) {
      EXPECT_TRUE(nodes.count(e["src"]));
      EXPECT_TRUE(nodes.count(e["dst"]));
    }
  }
}
