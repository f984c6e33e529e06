#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hippo/config.hpp"
#include "hippo/pipeline.hpp"
#include "test_support.hpp"

#ifndef HIPPO_CLI
#error "HIPPO_CLI must name the hippo executable"
#endif

using namespace hippo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Runs the CLI with `args`, stdout and stderr captured to files under `dir`.
int hippo(const fs::path& dir, const std::string& args) {
  const std::string cmd = std::string(HIPPO_CLI) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return io::read_file(p.string()); }

std::vector<json> json_lines(const fs::path& p) {
  std::vector<json> out;
  for (const auto& line : io::lines(slurp(p)))
    if (!io::trim(line).empty()) out.push_back(json::parse(line));
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = testing_support::scratch_dir("cli");
    RunConfig c;
    c.encoder.d_model = 8;
    c.encoder.n_blocks = 1;
    c.encoder.n_heads = 2;
    c.encoder.ff_width = 16;
    c.encoder.conv_wide = 5;
    c.alignment.proj_dim = 8;
    c.alignment.match_hidden = 8;
    c.gin.n_blocks = 1;
    c.gin.hidden = 8;
    c.training.pretrain_steps = 10;
    c.training.eval_every = 5;
    c.training.ppi_epochs = 10;
    c.training.ppi_lr = 1e-2;
    c.paths.fasta = (dir_ / "corpus/proteins.fasta").string();
    c.paths.annotations = (dir_ / "corpus/annotations.tsv").string();
    c.paths.hierarchy = (dir_ / "corpus/hierarchy.tsv").string();
    c.paths.edges = (dir_ / "corpus/edges.tsv").string();
    config_ = c;
    io::write_file((dir_ / "config.json").string(), config_to_json(c).dump(2));
    ASSERT_EQ(hippo(dir_, "synth --proteins 60 --families 6 --clans 2 --seed 4 --out " + (dir_ / "corpus").string()), 0);
  }

  static std::string cfg() { return "--config " + (dir_ / "config.json").string(); }
  static fs::path path(const std::string& name) { return dir_ / name; }

  static fs::path dir_;
  static RunConfig config_;
};

fs::path Cli::dir_;
RunConfig Cli::config_;

TEST_F(Cli, SynthIsByteIdenticalForOneSeed) {
  ASSERT_EQ(hippo(dir_, "synth --proteins 60 --families 6 --clans 2 --seed 4 --out " + path("again").string()), 0);
  for (const char* f : {"proteins.fasta", "edges.tsv", "annotations.tsv", "hierarchy.tsv", "sites.tsv"})
    EXPECT_EQ(slurp(path("again") / f), slurp(path("corpus") / f)) << f;
  ASSERT_EQ(hippo(dir_, "synth --proteins 60 --families 6 --clans 2 --seed 5 --out " + path("other").string()), 0);
  EXPECT_NE(slurp(path("other/edges.tsv")), slurp(path("corpus/edges.tsv")));
  EXPECT_FALSE(parse_edges(path("corpus/edges.tsv").string()).edges.empty());
}

TEST_F(Cli, UsageErrorsExit64) {
  EXPECT_EQ(hippo(dir_, "synth"), 64);
  EXPECT_EQ(hippo(dir_, "split --edges " + path("corpus/edges.tsv").string() + " --method sideways"), 64);
  EXPECT_EQ(hippo(dir_, "frobnicate"), 64);
}

TEST_F(Cli, SplitHonorsQuotaAndSeed) {
  std::string tsv = "protein_a\tprotein_b\ttype\n";
  for (int k = 0; k < 10; ++k) tsv += "p" + std::to_string(k) + "\tp" + std::to_string(k + 1) + "\tbinding\n";
  io::write_file(path("ten.tsv").string(), tsv);
  const std::string args = "split --edges " + path("ten.tsv").string() + " --method bfs --test-frac 0.2 --seed 3 --sweep 0";
  ASSERT_EQ(hippo(dir_, args + " --out " + path("s1.json").string()), 0);
  ASSERT_EQ(hippo(dir_, args + " --out " + path("s2.json").string()), 0);
  const json s = json::parse(slurp(path("s1.json")));
  EXPECT_EQ(s.at("test").size(), 2u);
  EXPECT_EQ(s.at("train").size() + s.at("val").size() + s.at("test").size(), 10u);
  EXPECT_EQ(slurp(path("s1.json")), slurp(path("s2.json")));
}

TEST_F(Cli, SplitSummaryComparesMethods) {
  ASSERT_EQ(hippo(dir_, "split --edges " + path("corpus/edges.tsv").string() + " --method bfs --sweep 5 --out " +
                            path("sweep.json").string()),
            0);
  const json summary = json::parse(slurp(path("stdout.txt")));
  for (const char* m : {"random", "bfs", "dfs"}) EXPECT_TRUE(summary.dump().find(m) != std::string::npos) << m;
}

TEST_F(Cli, ZeroStepPretrainSavesInitialParameters) {
  ASSERT_EQ(hippo(dir_, "pretrain " + cfg() + " --steps 0 --log " + path("pre0.jsonl").string() + " --out " +
                            path("pre0.ckpt").string()),
            0);
  const Dataset d = load_dataset(config_.paths.fasta, config_.paths.annotations, config_.paths.hierarchy, "");
  const auto restored = pretrain_from_state(config_, load_checkpoint<double>(path("pre0.ckpt").string(), config_hash(config_)),
                                            &d.keyword_vocab);
  EXPECT_EQ(restored.params, new_pretrain_model<double>(config_, d.keyword_vocab.size()).params);
}

TEST_F(Cli, PretrainLogShowsProgress) {
  ASSERT_EQ(hippo(dir_, "pretrain " + cfg() + " --steps 200 --log " + path("pre.jsonl").string() + " --out " +
                            path("pre.ckpt").string()),
            0);
  const auto log = json_lines(path("pre.jsonl"));
  ASSERT_EQ(log.size(), 200u);
  for (const char* key : {"step", "hc", "sac", "sam", "total"}) EXPECT_TRUE(log.front().contains(key)) << key;
  EXPECT_EQ(log.front().at("step"), 1);
  EXPECT_LT(log.back().at("total").get<double>(), log.front().at("total").get<double>());
}

TEST_F(Cli, MissingHierarchyWithHcWeightIsValidationError) {
  RunConfig bare = config_;
  bare.paths.hierarchy.clear();
  io::write_file(path("bare.json").string(), config_to_json(bare).dump());
  EXPECT_EQ(hippo(dir_, "pretrain --config " + path("bare.json").string() + " --steps 1 --out " + path("x.ckpt").string()), 3);
  EXPECT_NE(slurp(path("stderr.txt")).find("hierarchy"), std::string::npos);
}

TEST_F(Cli, TrainEvalAndPredictionTables) {
  ASSERT_EQ(hippo(dir_, "pretrain " + cfg() + " --steps 5 --log " + path("p.jsonl").string() + " --out " +
                            path("p.ckpt").string()),
            0);
  ASSERT_EQ(hippo(dir_, "split --edges " + path("corpus/edges.tsv").string() + " --method dfs --seed 2 --sweep 0 --out " +
                            path("split.json").string()),
            0);
  const std::string data = cfg() + " --split " + path("split.json").string() + " --pretrained " + path("p.ckpt").string();
  ASSERT_EQ(hippo(dir_, "train " + data + " --log " + path("train.jsonl").string() + " --out " + path("m.ckpt").string()), 0);
  const auto log = json_lines(path("train.jsonl"));
  ASSERT_EQ(log.size(), 10u);
  EXPECT_TRUE(log.front().contains("val_micro_f1"));

  ASSERT_EQ(hippo(dir_, "eval " + data + " --model " + path("m.ckpt").string() + " --predictions-out " +
                            path("pred.tsv").string() + " --out " + path("report.json").string()),
            0);
  const json report = json::parse(slurp(path("report.json")));
  for (const char* key : {"micro_f1", "micro_f1_easy", "micro_f1_hard", "aupr", "counts"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(report.at("config_hash"), config_hash(config_));

  ASSERT_EQ(hippo(dir_, "eval " + data + " --predictions " + path("pred.tsv").string() + " --out " +
                            path("rescored.json").string()),
            0);
  EXPECT_EQ(json::parse(slurp(path("rescored.json"))).at("counts"), report.at("counts"));

  // The truth itself scores perfectly.
  const EdgeTable edges = parse_edges(path("corpus/edges.tsv").string());
  const SplitSpec split = split_from_json(json::parse(slurp(path("split.json"))), edges.edges);
  std::string perfect = "protein_a\tprotein_b";
  for (const auto& t : edges.types) perfect += "\tp_" + t;
  perfect += "\n";
  for (std::size_t e : split.test) {
    perfect += edges.edges[e].a + "\t" + edges.edges[e].b;
    for (auto l : edges.edges[e].labels) perfect += l ? "\t1" : "\t0";
    perfect += "\n";
  }
  io::write_file(path("perfect.tsv").string(), perfect);
  ASSERT_EQ(hippo(dir_, "eval " + data + " --predictions " + path("perfect.tsv").string()), 0);
  EXPECT_EQ(json::parse(slurp(path("stdout.txt"))).at("micro_f1"), 1.0);

  // A checkpoint from a different model configuration is refused.
  RunConfig other = config_;
  other.gin.hidden = 4;
  io::write_file(path("other.json").string(), config_to_json(other).dump());
  EXPECT_EQ(hippo(dir_, "eval --config " + path("other.json").string() + " --split " + path("split.json").string() +
                            " --pretrained " + path("p.ckpt").string() + " --model " + path("m.ckpt").string()),
            3);
  EXPECT_EQ(hippo(dir_, "eval " + data + " --model " + path("absent.ckpt").string()), 2);
}

TEST_F(Cli, SitesReportsRatesInUnitInterval) {
  ASSERT_EQ(hippo(dir_, "pretrain " + cfg() + " --steps 2 --log " + path("s.jsonl").string() + " --out " +
                            path("s.ckpt").string()),
            0);
  ASSERT_EQ(hippo(dir_, "sites " + cfg() + " --sites " + path("corpus/sites.tsv").string() + " --pretrained " +
                            path("s.ckpt").string() + " --out " + path("sites_out.tsv").string()),
            0);
  const auto rows = io::lines(slurp(path("sites_out.tsv")));
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows.front(), "protein_id\tlength\tn_sites\tn_hit\toverlap_rate");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].empty()) continue;
    const double rate = std::stod(io::split(rows[r], '\t').back());
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
  }
}

TEST_F(Cli, GradcheckPassesAndReports) {
  ASSERT_EQ(hippo(dir_, "gradcheck --seed 2 --fixtures 2"), 0);
  const json r = json::parse(slurp(path("stdout.txt")));
  EXPECT_TRUE(r.at("passed").get<bool>());
  EXPECT_EQ(r.at("ops").size(), 7u);
}

}  // namespace
