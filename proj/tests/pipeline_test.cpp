#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "hippo/config.hpp"
#include "hippo/pipeline.hpp"
#include "test_support.hpp"

using namespace hippo;
using nlohmann::json;

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = config_from_json(json::object());
  EXPECT_EQ(c.encoder.d_model, 64u);
  EXPECT_EQ(c.gin.n_blocks, 3u);
  EXPECT_EQ(c.training.ppi_epochs, 100u);
  EXPECT_EQ(c.pair_head.combine, PairCombine::kHadamard);
  EXPECT_TRUE(c.training.freeze_annotation_encoder);
}

TEST(Config, UnknownKeyAndSectionRejected) {
  EXPECT_THROW(config_from_json(json{{"encoder", {{"d_modle", 8}}}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"optimizer", json::object()}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"gin", 3}}), ValidationError);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(config_from_json(json{{"alignment", {{"tau", "hot"}}}}), ValidationError);
  EXPECT_THROW(config_from_json(json{{"training", {{"precision", "half"}}}}), ValidationError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json(json{{"encoder", {{"d_model", 10}, {"n_heads", 4}}}}), ParameterError);
  EXPECT_THROW(config_from_json(json{{"alignment", {{"alpha", 1.5}}}}), ParameterError);
  EXPECT_THROW(config_from_json(json{{"pair_head", {{"combine", "sum"}}}}), ParameterError);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.encoder.d_model = 16;
  c.alignment.w_hc = 0.0;
  c.gin.hidden = 12;
  c.pair_head.combine = PairCombine::kConcat;
  c.training.seed = 9;
  c.training.precision = Precision::kFloat;
  c.paths.fasta = "a.fasta";
  const RunConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, HashCoversModelSectionsOnly) {
  RunConfig a;
  const std::string h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, config_hash(a));
  RunConfig b = a;
  b.training.seed = 42;
  b.training.ppi_epochs = 3;
  b.paths.out = "elsewhere";
  EXPECT_EQ(config_hash(b), h);
  b.gin.hidden = 32;
  EXPECT_NE(config_hash(b), h);
  RunConfig c = a;
  c.alignment.w_hc = 0.5;
  EXPECT_NE(config_hash(c), h);
}

TEST(Config, LoadReportsBadJson) {
  const auto dir = testing_support::scratch_dir("config");
  io::write_file((dir / "bad.json").string(), "{ \"gin\": ");
  EXPECT_THROW(load_config((dir / "bad.json").string()), ParseError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), IoError);
  io::write_file((dir / "ok.json").string(), R"({"gin": {"hidden": 8}})");
  EXPECT_EQ(load_config((dir / "ok.json").string()).gin.hidden, 8u);
}

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.encoder.d_model = 8;
  c.encoder.n_blocks = 1;
  c.encoder.n_heads = 2;
  c.encoder.ff_width = 16;
  c.encoder.conv_wide = 5;
  c.alignment.proj_dim = 6;
  c.alignment.match_hidden = 8;
  c.gin.n_blocks = 2;
  c.gin.hidden = 8;
  c.training.pretrain_steps = 4;
  c.training.pretrain_batch = 8;
  c.training.eval_every = 2;
  c.training.eval_batch = 16;
  c.training.ppi_epochs = 4;
  c.training.ppi_lr = 1e-2;
  c.training.seed = 3;
  return c;
}

SynthCorpus tiny_corpus() {
  SynthSpec s;
  s.n_clans = 2;
  s.n_families = 4;
  s.n_proteins = 40;
  s.n_types = 3;
  s.compat_density = 0.3;
  s.seed = 5;
  return synth_generate(s);
}

}  // namespace

TEST(Pipeline, FileDatasetMatchesCorpus) {
  const auto corpus = tiny_corpus();
  const auto dir = testing_support::scratch_dir("pipeline_files");
  const auto f = [&](const char* n) { return (dir / n).string(); };
  io::write_file(f("p.fasta"), emit_fasta(corpus.fasta()));
  io::write_file(f("a.tsv"), emit_annotations(corpus.annotations()));
  io::write_file(f("h.tsv"), emit_hierarchy(corpus.hierarchy_rows));
  io::write_file(f("e.tsv"), emit_edges(corpus.edges));
  const Dataset d = load_dataset(f("p.fasta"), f("a.tsv"), f("h.tsv"), f("e.tsv"), corpus.edges.types);
  const Dataset ref = dataset_from_corpus(corpus);
  ASSERT_EQ(d.proteins.size(), ref.proteins.size());
  for (std::size_t i = 0; i < d.proteins.size(); ++i) {
    EXPECT_EQ(d.proteins[i].id, ref.proteins[i].id);
    EXPECT_EQ(d.proteins[i].sequence, ref.proteins[i].sequence);
    EXPECT_EQ(d.proteins[i].keywords, ref.proteins[i].keywords);
    EXPECT_EQ(d.proteins[i].family_id, ref.proteins[i].family_id);
  }
  EXPECT_EQ(d.keyword_vocab, ref.keyword_vocab);
  EXPECT_EQ(d.edges.edges, ref.edges.edges);
  EXPECT_EQ(d.edges.types, ref.edges.types);
  ASSERT_TRUE(d.tree);
  EXPECT_EQ(d.tree->level_count(), 2u);

  std::set<std::string> used;
  for (const auto& e : corpus.edges.edges)
    for (std::size_t k = 0; k < e.labels.size(); ++k)
      if (e.labels[k]) used.insert(corpus.edges.types[k]);
  const Dataset inferred = load_dataset(f("p.fasta"), "", "", f("e.tsv"));
  EXPECT_EQ(inferred.edges.types, std::vector<std::string>(used.begin(), used.end()));
  EXPECT_FALSE(inferred.tree);
  EXPECT_TRUE(inferred.keyword_vocab.empty());
}

TEST(Pipeline, HierarchicalTermNeedsTree) {
  Dataset d = dataset_from_corpus(tiny_corpus());
  d.tree.reset();
  RunConfig c = tiny_config();
  EXPECT_THROW(run_pretrain<double>(c, d), ValidationError);
  c.alignment.w_hc = 0.0;
  EXPECT_NO_THROW(run_pretrain<double>(c, d));
}

TEST(Pipeline, EndToEndIsDeterministic) {
  const Dataset d = dataset_from_corpus(tiny_corpus());
  const RunConfig c = tiny_config();
  const SplitSpec split = make_split(d.edges.edges, SplitMethod::kBfs, 0.2, 0.1, 7);
  const auto a = run_pipeline<double>(c, d, split);
  const auto b = run_pipeline<double>(c, d, split);
  EXPECT_EQ(report_to_json(a.report).dump(), report_to_json(b.report).dump());
  EXPECT_EQ(report_to_json(a.baseline).dump(), report_to_json(b.baseline).dump());
  EXPECT_EQ(a.trained.model.params, b.trained.model.params);
  EXPECT_EQ(a.report.n_easy + a.report.n_hard, split.test.size());
}

TEST(Pipeline, CheckpointsRestoreModels) {
  const Dataset d = dataset_from_corpus(tiny_corpus());
  RunConfig c = tiny_config();
  c.training.freeze_annotation_encoder = false;
  const SplitSpec split = make_split(d.edges.edges, SplitMethod::kRandom, 0.2, 0.1, 2);
  const auto pre = run_pretrain<double>(c, d);
  const auto dir = testing_support::scratch_dir("pipeline_ckpt");
  save_checkpoint(pretrain_state(c, pre, d), (dir / "pre.ckpt").string());
  const auto pre_back =
      pretrain_from_state(c, load_checkpoint<double>((dir / "pre.ckpt").string(), config_hash(c)), &d.keyword_vocab);
  EXPECT_EQ(pre_back.params, pre.model.params);
  const std::vector<std::string> wrong_vocab = {"x"};
  EXPECT_THROW(pretrain_from_state(c, load_checkpoint<double>((dir / "pre.ckpt").string()), &wrong_vocab),
               ValidationError);

  const auto g = feature_graph(pre_back, d, split);
  const auto trained = train_ppi(new_ppi_model(c, pre_back, d.edges.types.size()), g, split, c.ppi_config());
  EXPECT_TRUE(trained.model.tune_annotation);
  save_checkpoint(ppi_state(c, trained, d.edges.types), (dir / "ppi.ckpt").string());
  const auto model =
      ppi_from_state(c, load_checkpoint<double>((dir / "ppi.ckpt").string(), config_hash(c)), pre_back, d.edges.types);
  EXPECT_EQ(model.params, trained.model.params);
  EXPECT_EQ(report_to_json(evaluate_test(model, g, split, d.edges.types)).dump(),
            report_to_json(evaluate_test(trained.model, g, split, d.edges.types)).dump());

  RunConfig other = c;
  other.gin.hidden = 4;
  EXPECT_THROW(load_checkpoint<double>((dir / "ppi.ckpt").string(), config_hash(other)), CheckpointError);
  EXPECT_THROW(ppi_from_state(c, load_checkpoint<double>((dir / "pre.ckpt").string()), pre_back, d.edges.types),
               ValidationError);
}

TEST(Pipeline, PredictionTableRoundTrip) {
  const Dataset d = dataset_from_corpus(tiny_corpus());
  const RunConfig c = tiny_config();
  const SplitSpec split = make_split(d.edges.edges, SplitMethod::kDfs, 0.2, 0.1, 4);
  const auto out = run_pipeline<double>(c, d, split);
  const auto g = feature_graph(out.pretrained.model, d, split);
  const auto pairs = edge_pairs(g, split.test);
  const auto probs = predict(out.trained.model, g, pairs);
  const std::string tsv = emit_predictions(g, pairs, probs, d.edges.types);
  const Tensor back = parse_prediction_table(tsv, d.edges, split.test);
  const auto report = evaluate_predictions(back, edge_truth(d.edges, split.test), test_difficulty(split), d.edges.types);
  EXPECT_EQ(report_to_json(report).dump(), report_to_json(out.report).dump());

  // Truth as predictions scores perfectly.
  std::string perfect = "protein_a\tprotein_b";
  for (const auto& t : d.edges.types) perfect += "\tp_" + t;
  perfect += "\n";
  for (std::size_t e : split.test) {
    const auto& r = d.edges.edges[e];
    perfect += r.b + "\t" + r.a;
    for (auto l : r.labels) perfect += l ? "\t1" : "\t0";
    perfect += "\n";
  }
  const auto best = evaluate_predictions(parse_prediction_table(perfect, d.edges, split.test),
                                         edge_truth(d.edges, split.test), test_difficulty(split), d.edges.types);
  EXPECT_EQ(best.micro_f1, 1.0);

  EXPECT_THROW(parse_prediction_table("protein_a\tprotein_b\n", d.edges, split.test), ParseError);
  const std::string header = tsv.substr(0, tsv.find('\n') + 1);
  EXPECT_THROW(parse_prediction_table(header, d.edges, split.test), ValidationError);
}
