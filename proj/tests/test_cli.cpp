#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "kgp/io.hpp"
#include "kgp/metrics.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(KGP_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "kgp_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const std::string kSmall = "--n-drugs 40 --n-proteins 24 --n-pathways 4 --n-cells 2 --genes 12 --families 8 --feature-dim 6 --latent-dim 4";
const std::string kTiny = "--epochs 2 --batch 16 --embed-dim 8 --hidden 8 --delta-hidden 8 --heads 2 --fanouts 4,2 --deg-k 5 --deterministic";

// synth + scaffold split shared by the end-to-end tests
fs::path dataset() {
  static const fs::path d = [] {
    auto dir = workdir() / "data";
    auto r = run("synth --out " + dir.string() + " --seed 3 " + kSmall);
    EXPECT_EQ(r.code, 0) << r.out;
    r = run("split --data " + dir.string() + " --mode scaffold --seed 42");
    EXPECT_EQ(r.code, 0) << r.out;
    return dir;
  }();
  return d;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(kgp::io::read_text(p)); }

}  // namespace

TEST(Cli, Help) {
  auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"synth", "split", "train", "eval", "bootstrap", "ablate", "attn"}) EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  r = run("train --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--fanouts"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --data x").code, 2);
  EXPECT_EQ(run("split --data x --mode sideways").code, 2);
  EXPECT_EQ(run("train --data x --split y --out z --model transformer").code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  auto r = run("split --data " + (workdir() / "missing").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("error:"), std::string::npos);
  auto dir = dataset();
  r = run("train --data " + dir.string() + " --split " + (dir / "nope.json").string() + " --out " + (workdir() / "t").string());
  EXPECT_EQ(r.code, 1);
  r = run("synth --out " + (workdir() / "bad").string() + " --families 500");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("ParamDomain"), std::string::npos) << r.out;
}

TEST(Cli, SplitWritesAudit) {
  auto dir = dataset();
  auto split = read_json(dir / "split_scaffold.json");
  auto audit = read_json(dir / "split_scaffold_audit.json");
  EXPECT_EQ(split["mode"], "scaffold");
  EXPECT_EQ(audit["overlap"], 0);
  EXPECT_EQ(split["train"].size() + split["test"].size(), 40u);
}

TEST(Cli, ZeroEpochs) {
  auto dir = dataset();
  auto out = workdir() / "zero";
  auto r = run("train --model mlp --data " + dir.string() + " --split " + (dir / "split_scaffold.json").string() + " --out " + out.string() +
               " --epochs 0");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(kgp::io::read_text(out / "history.csv"), "epoch,train_mse,test_pearson,test_deg,seconds\n");
  EXPECT_TRUE(fs::exists(out / "model.dgck"));
}

TEST(Cli, EndToEnd) {
  auto dir = dataset();
  const auto split = (dir / "split_scaffold.json").string();
  for (const char* m : {"mlp", "gat"}) {
    auto out = workdir() / m;
    auto r = run(std::string("train --model ") + m + " --data " + dir.string() + " --split " + split + " --out " + out.string() + " " + kTiny);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("best epoch"), std::string::npos);
    r = run("eval --ckpt " + (out / "model.dgck").string() + " --data " + dir.string() + " --split " + split + " --out " + (out / "eval").string());
    ASSERT_EQ(r.code, 0) << r.out;
    auto summary = read_json(out / "eval" / "summary.json");
    EXPECT_EQ(summary["model"], m);
    auto rows = kgp::metrics::read_metric_table(out / "eval" / "metrics.csv");
    EXPECT_EQ(rows.size(), (read_json(split)["test"].size()) * 2);
  }
  auto r = run("bootstrap --a " + (workdir() / "gat" / "eval" / "metrics.csv").string() + " --b " +
               (workdir() / "mlp" / "eval" / "metrics.csv").string() + " --iters 200 --out " + (workdir() / "cmp.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  auto cmp = read_json(workdir() / "cmp.json");
  EXPECT_LE(cmp["ci95"][0].get<double>(), cmp["ci95"][1].get<double>());
  EXPECT_EQ(cmp["iters"], 200);

  r = run("attn --ckpt " + (workdir() / "gat" / "model.dgck").string() + " --data " + dir.string() + " --split " + split);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.rfind("scope,source_type,destination_type,mass\n", 0), 0u) << r.out;
  r = run("attn --ckpt " + (workdir() / "gat" / "model.dgck").string() + " --data " + dir.string() + " --drug D00 --k 2 --top-m 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(nlohmann::json::parse(r.out)["drug"], "D00");
  r = run("attn --ckpt " + (workdir() / "mlp" / "model.dgck").string() + " --data " + dir.string());
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, DeterministicRunsAreByteIdentical) {
  auto dir = dataset();
  const auto split = (dir / "split_scaffold.json").string();
  std::string first[2];
  for (int i = 0; i < 2; ++i) {
    auto out = workdir() / ("det" + std::to_string(i));
    auto r = run("train --model gat --data " + dir.string() + " --split " + split + " --out " + out.string() + " " + kTiny);
    ASSERT_EQ(r.code, 0) << r.out;
    first[i] = kgp::io::read_text(out / "history.csv") + kgp::io::read_text(out / "model.dgck");
  }
  EXPECT_EQ(first[0], first[1]);
}
