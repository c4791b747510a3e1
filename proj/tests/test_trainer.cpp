#include <gtest/gtest.h>

#include <algorithm>

#include "kgp/checkpoint.hpp"
#include "kgp/trainer.hpp"
#include "small_synth.hpp"

using namespace kgp;

namespace {

const PerturbationData& data() {
  static const PerturbationData d = toy::small_synth("trainer");
  return d;
}

bool same_params(const std::vector<NamedMatrix>& a, const std::vector<NamedMatrix>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  return true;
}

std::vector<NamedMatrix> initial_params(const TrainConfig& cfg, const PerturbationData& d) {
  auto mc = cfg.model;
  mc.seed = cfg.seed;
  mc.genes = d.genes();
  mc.adopt_schema(d.graph);
  return capture_params(make_model<float>(mc)->params());
}

const Architecture kAll[] = {Architecture::mlp, Architecture::mlp_targets, Architecture::gat};

}  // namespace

TEST(Partition, SidesFollowTheSplit) {
  const auto& d = data();
  auto split = chem::scaffold_split(drug_entries(d.graph), 0.8, 42);
  auto s = partition_samples(d, split);
  EXPECT_EQ(s.train.size() + s.test.size(), d.samples.size());
  std::set<std::string> test(split.test.begin(), split.test.end());
  for (auto i : s.test) EXPECT_TRUE(test.count(d.graph.node_id({NodeType::drug, d.samples[i].drug})));
  for (auto i : s.train) EXPECT_FALSE(test.count(d.graph.node_id({NodeType::drug, d.samples[i].drug})));
  // drugs on neither side are dropped
  split.test.clear();
  EXPECT_TRUE(partition_samples(d, split).test.empty());
}

TEST(Train, ZeroEpochsKeepsInitialParameters) {
  const auto& d = data();
  for (auto a : kAll) {
    auto cfg = toy::small_train_config(a);
    cfg.epochs = 0;
    auto r = train(cfg, d, d.graph, toy::small_split(d));
    EXPECT_TRUE(r.history.empty());
    EXPECT_FALSE(r.best_epoch);
    EXPECT_TRUE(r.checkpoint.meta["best"].is_null());
    EXPECT_TRUE(same_params(r.checkpoint.params, initial_params(cfg, d))) << to_string(a);
  }
}

TEST(Train, ZeroLearningRateGivesConstantLoss) {
  const auto& d = data();
  auto cfg = toy::small_train_config(Architecture::mlp);
  cfg.optim.lr = 0;
  cfg.model.dropout = 0;
  cfg.batch_size = 1000;
  cfg.epochs = 4;
  auto r = train(cfg, d, d.graph, toy::small_split(d));
  ASSERT_EQ(r.history.size(), 4u);
  for (auto& h : r.history) EXPECT_NEAR(h.train_mse, r.history[0].train_mse, 1e-5 * r.history[0].train_mse);
  auto init = initial_params(cfg, d);
  // trainable weights never move; only running statistics do
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (init[i].name.find("running") != std::string::npos) continue;
    EXPECT_EQ(r.checkpoint.params[i].value, init[i].value) << init[i].name;
  }
}

TEST(Train, Deterministic) {
  const auto& d = data();
  for (auto a : kAll) {
    auto cfg = toy::small_train_config(a);
    auto r1 = train(cfg, d, d.graph, toy::small_split(d));
    auto r2 = train(cfg, d, d.graph, toy::small_split(d));
    ASSERT_EQ(r1.history.size(), r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
      EXPECT_EQ(r1.history[i].train_mse, r2.history[i].train_mse);
      EXPECT_EQ(r1.history[i].test_deg, r2.history[i].test_deg);
      EXPECT_EQ(r1.history[i].seconds, 0.0);
    }
    EXPECT_TRUE(same_params(r1.checkpoint.params, r2.checkpoint.params)) << to_string(a);
    EXPECT_EQ(r1.checkpoint.meta.dump(), r2.checkpoint.meta.dump());
  }
}

TEST(Train, BestEpochIsTheHistoryMaximum) {
  const auto& d = data();
  for (auto a : kAll) {
    auto cfg = toy::small_train_config(a);
    cfg.epochs = 5;
    auto split = toy::small_split(d);
    auto r = train(cfg, d, d.graph, split);
    ASSERT_TRUE(r.best_epoch);
    auto best = std::max_element(r.history.begin(), r.history.end(),
                                 [](const EpochRecord& x, const EpochRecord& y) { return x.test_deg < y.test_deg; });
    EXPECT_EQ(*r.best_epoch, best->epoch);
    EXPECT_EQ(r.best_deg, best->test_deg);
    EXPECT_EQ(r.checkpoint.meta["best"]["epoch"].get<std::size_t>(), best->epoch);
    // the stored parameters reproduce the recorded score
    auto model = model_from_checkpoint<float>(r.checkpoint);
    auto rows = evaluate_epoch(*model, d.graph, d, split.test, cfg);
    EXPECT_EQ(metrics::mean_of(rows, &metrics::SampleMetric::deg), best->test_deg) << to_string(a);
  }
}

TEST(Evaluate, IsPure) {
  const auto& d = data();
  for (auto a : kAll) {
    auto cfg = toy::small_train_config(a);
    auto split = toy::small_split(d);
    auto r = train(cfg, d, d.graph, split);
    auto model = model_from_checkpoint<float>(r.checkpoint);
    auto before = capture_params(model->params());
    auto rows1 = evaluate_epoch(*model, d.graph, d, split.test, cfg);
    auto rows2 = evaluate_epoch(*model, d.graph, d, split.test, cfg);
    EXPECT_TRUE(same_params(before, capture_params(model->params())));
    ASSERT_EQ(rows1.size(), split.test.size());
    for (std::size_t i = 0; i < rows1.size(); ++i) {
      EXPECT_EQ(rows1[i].deg, rows2[i].deg);
      EXPECT_EQ(rows1[i].pearson, rows2[i].pearson);
    }
  }
}

TEST(Train, LossDecreases) {
  const auto& d = data();
  for (auto a : kAll) {
    auto cfg = toy::small_train_config(a);
    cfg.epochs = 15;
    cfg.optim.lr = 3e-3;
    auto r = train(cfg, d, d.graph, toy::small_split(d));
    EXPECT_LT(r.history.back().train_mse, 0.5 * r.history.front().train_mse) << to_string(a);
  }
}

TEST(Train, EmptySideIsRejected) {
  const auto& d = data();
  auto split = toy::small_split(d);
  split.test.clear();
  try {
    train(toy::small_train_config(Architecture::mlp), d, d.graph, split);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateSplit);
  }
}

TEST(History, CsvLayout) {
  auto dir = toy::temp_dir("history");
  write_history(dir / "h.csv", {{1, 0.5, 0.25, 0.125, 0}, {2, 0.25, 0.5, 0.75, 0}});
  EXPECT_EQ(io::read_text(dir / "h.csv"), "epoch,train_mse,test_pearson,test_deg,seconds\n1,0.5,0.25,0.125,0\n2,0.25,0.5,0.75,0\n");
}
