// hippo: command-line front end.
//
// Exit codes: 0 success, 64 usage, 2 I/O, 3 validation failure (bad input
// contents, config mismatch, failed gradient check).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hippo/config.hpp"
#include "hippo/encoders/sites.hpp"
#include "hippo/gradsuite.hpp"
#include "hippo/hierarchy/cluster_report.hpp"
#include "hippo/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hippo::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 64;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;

// Thrown for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string types;  // comma-separated interaction vocabulary
};

RunConfig resolve_config(const Common& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.training.seed = *o.seed;
  c.validate();
  return c;
}

std::optional<std::vector<std::string>> type_list(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return io::split(s, ',');
}

std::string pick(const std::string& flag, const std::string& from_config) { return flag.empty() ? from_config : flag; }

std::string require(const std::string& value, const char* what) {
  if (value.empty()) throw UsageError(std::string("missing ") + what);
  return value;
}

// Writes to `path`, or to stdout when it is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
  } else {
    io::write_file(path, content);
  }
}

class JsonLines {
 public:
  explicit JsonLines(const std::string& path) : path_(path) {
    if (!path_.empty() && path_ != "-") io::write_file(path_, "");
  }
  void write(const json& j) {
    const std::string line = j.dump() + "\n";
    if (path_.empty() || path_ == "-") {
      std::cout << line;
      std::cout.flush();
      return;
    }
    std::FILE* f = std::fopen(path_.c_str(), "ab");
    if (!f || std::fwrite(line.data(), 1, line.size(), f) != line.size()) {
      if (f) std::fclose(f);
      throw IoError("cannot append to '" + path_ + "'");
    }
    std::fclose(f);
  }

 private:
  std::string path_;
};

// ---- synth -----------------------------------------------------------------

struct SynthOpts {
  SynthSpec spec;
  std::string out;
};

int cmd_synth(const SynthOpts& o) {
  const SynthCorpus c = synth_generate(o.spec);
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create directory '" + o.out + "': " + ec.message());
  const fs::path dir(o.out);
  io::write_file((dir / "proteins.fasta").string(), emit_fasta(c.fasta()));
  io::write_file((dir / "edges.tsv").string(), emit_edges(c.edges));
  io::write_file((dir / "annotations.tsv").string(), emit_annotations(c.annotations()));
  io::write_file((dir / "hierarchy.tsv").string(), emit_hierarchy(c.hierarchy_rows));
  io::write_file((dir / "sites.tsv").string(), emit_sites(c.sites));
  std::cerr << "synth: " << c.proteins.size() << " proteins, " << c.edges.edges.size() << " edges, "
            << c.edges.types.size() << " types -> " << o.out << "\n";
  return kExitOk;
}

// ---- split -----------------------------------------------------------------

struct SplitOpts {
  std::string edges, method = "bfs", out, types;
  double test_frac = 0.2, val_frac = 0.1;
  std::uint64_t seed = 1;
  std::size_t sweep = 20;
};

int cmd_split(const SplitOpts& o) {
  const SplitMethod method = parse_split_method(o.method);
  const EdgeTable edges = parse_edges(o.edges, type_list(o.types));
  const SplitSpec s = make_split(edges.edges, method, o.test_frac, o.val_frac, o.seed);
  emit(o.out, split_to_json(s, edges.edges).dump(2) + "\n");

  json summary = {{"method", to_string(method)},
                  {"seed", o.seed},
                  {"n_edges", edges.edges.size()},
                  {"n_train", s.train.size()},
                  {"n_val", s.val.size()},
                  {"n_test", s.test.size()},
                  {"hard_fraction", hard_fraction(s)}};
  if (o.sweep > 0) {
    json sweep = json::object();
    for (SplitMethod m : {SplitMethod::kRandom, SplitMethod::kBfs, SplitMethod::kDfs}) {
      double total = 0.0;
      for (std::size_t k = 0; k < o.sweep; ++k)
        total += hard_fraction(make_split(edges.edges, m, o.test_frac, o.val_frac, o.seed + k));
      sweep[to_string(m)] = total / double(o.sweep);
    }
    summary["sweep"] = {{"seeds", o.sweep}, {"mean_hard_fraction", sweep}};
  }
  // The split itself may go to stdout; the summary then goes to stderr.
  (o.out.empty() || o.out == "-" ? std::cerr : std::cout) << summary.dump() << "\n";
  return kExitOk;
}

// ---- pretrain --------------------------------------------------------------

struct PretrainOpts {
  Common common;
  std::string fasta, annotations, hierarchy, out, log;
  std::optional<std::size_t> steps;
};

template <typename Real>
int cmd_pretrain(const PretrainOpts& o) {
  RunConfig c = resolve_config(o.common);
  if (o.steps) c.training.pretrain_steps = *o.steps;
  const auto& p = c.paths;
  const Dataset d = load_dataset(require(pick(o.fasta, p.fasta), "--fasta"), pick(o.annotations, p.annotations),
                                 pick(o.hierarchy, p.hierarchy), "");
  const std::string out = require(pick(o.out, p.pretrained), "--out");
  JsonLines log(o.log);
  const auto r = run_pretrain<Real>(c, d, [&](const PretrainLogEntry& e) {
    json j = {{"step", e.step}, {"hc", e.hc}, {"sac", e.sac}, {"sam", e.sam}, {"total", e.total}};
    if (e.eval_total) j["eval_total"] = *e.eval_total;
    log.write(j);
  });
  save_checkpoint(pretrain_state(c, r, d), out);
  std::cerr << "pretrain: best step " << r.best_step << " (eval objective " << r.best_eval << "), config "
            << config_hash(c) << " -> " << out << "\n";
  return kExitOk;
}

// ---- train / eval ----------------------------------------------------------

struct DownstreamOpts {
  Common common;
  std::string fasta, annotations, edges, split, pretrained, model, out, log, predictions, predictions_out;
  std::optional<std::size_t> epochs;
};

Dataset downstream_dataset(const DownstreamOpts& o, const RunConfig& c) {
  const auto& p = c.paths;
  return load_dataset(require(pick(o.fasta, p.fasta), "--fasta"), pick(o.annotations, p.annotations), "",
                      require(pick(o.edges, p.edges), "--edges"), type_list(o.common.types));
}

SplitSpec load_split(const std::string& path, const EdgeTable& edges) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("split '" + path + "': " + e.what());
  }
  return split_from_json(j, edges.edges);
}

template <typename Real>
int cmd_train(const DownstreamOpts& o) {
  RunConfig c = resolve_config(o.common);
  if (o.epochs) c.training.ppi_epochs = *o.epochs;
  const Dataset d = downstream_dataset(o, c);
  const SplitSpec split = load_split(require(pick(o.split, c.paths.split), "--split"), d.edges);
  const auto pre = pretrain_from_state(
      c, load_checkpoint<Real>(require(pick(o.pretrained, c.paths.pretrained), "--pretrained"), config_hash(c)),
      &d.keyword_vocab);
  const std::string out = require(pick(o.out, c.paths.model), "--out");
  const auto g = feature_graph(pre, d, split);
  JsonLines log(o.log);
  const auto r = train_ppi(new_ppi_model(c, pre, d.edges.types.size()), g, split, c.ppi_config(), {},
                           [&](const PpiEpochLog& e) {
                             log.write({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_micro_f1", e.val_score}});
                           });
  save_checkpoint(ppi_state(c, r, d.edges.types), out);
  std::cerr << "train: best epoch " << r.best_epoch << " (validation micro-F1 " << r.best_score << ") -> " << out
            << "\n";
  return kExitOk;
}

template <typename Real>
int cmd_eval(const DownstreamOpts& o) {
  const RunConfig c = resolve_config(o.common);
  const bool from_table = !o.predictions.empty();
  const EdgeTable edges = parse_edges(require(pick(o.edges, c.paths.edges), "--edges"), type_list(o.common.types));
  const SplitSpec split = load_split(require(pick(o.split, c.paths.split), "--split"), edges);
  MetricReport report;
  json out;
  if (from_table) {
    const Tensor probs = parse_prediction_table(io::read_file(o.predictions), edges, split.test);
    report = evaluate_predictions(probs, edge_truth(edges, split.test), test_difficulty(split), edges.types);
    out = report_to_json(report);
  } else {
    const Dataset d = downstream_dataset(o, c);
    const auto pre = pretrain_from_state(
        c, load_checkpoint<Real>(require(pick(o.pretrained, c.paths.pretrained), "--pretrained"), config_hash(c)),
        &d.keyword_vocab);
    const auto model = ppi_from_state(
        c, load_checkpoint<Real>(require(pick(o.model, c.paths.model), "--model"), config_hash(c)), pre, d.edges.types);
    const auto g = feature_graph(pre, d, split);
    const auto pairs = edge_pairs(g, split.test);
    const auto probs = predict(model, g, pairs);
    if (!o.predictions_out.empty()) io::write_file(o.predictions_out, emit_predictions(g, pairs, probs, d.edges.types));
    report = evaluate_predictions(probs, edge_labels(g, split.test), test_difficulty(split), d.edges.types);
    out = report_to_json(report);
    out["config_hash"] = config_hash(c);
  }
  emit(pick(o.out, c.paths.out), out.dump(2) + "\n");
  return kExitOk;
}

// ---- sites -----------------------------------------------------------------

struct SitesOpts {
  Common common;
  std::string fasta, sites, pretrained, out;
};

template <typename Real>
int cmd_sites(const SitesOpts& o) {
  const RunConfig c = resolve_config(o.common);
  const auto fasta = parse_fasta(require(pick(o.fasta, c.paths.fasta), "--fasta"));
  const auto sites = parse_sites(require(o.sites, "--sites"));
  const auto pre = pretrain_from_state(
      c, load_checkpoint<Real>(require(pick(o.pretrained, c.paths.pretrained), "--pretrained"), config_hash(c)));
  std::map<std::string, const std::string*> seq_of;
  for (const auto& [id, seq] : fasta) seq_of[id] = &seq;
  std::ostringstream tsv;
  tsv << "protein_id\tlength\tn_sites\tn_hit\toverlap_rate\n";
  for (const auto& [id, positions] : sites) {
    auto it = seq_of.find(id);
    if (it == seq_of.end()) throw ValidationError("sites: protein '" + id + "' is not in the FASTA file");
    const auto enc = encode_sequence(pre.seq, pre.params, tokenize(*it->second));
    const std::set<std::size_t> annotated(positions.begin(), positions.end());
    for (std::size_t r : annotated)
      if (r >= it->second->size())
        throw ValidationError("sites: position " + std::to_string(r) + " outside protein '" + id + "'");
    const auto top = top_residues(attention_site_scores(enc.attention), annotated.size());
    const std::set<std::size_t> predicted(top.begin(), top.end());
    std::size_t hit = 0;
    for (std::size_t r : predicted) hit += annotated.count(r);
    tsv << id << '\t' << it->second->size() << '\t' << annotated.size() << '\t' << hit << '\t'
        << json(overlap_rate(predicted, annotated)).dump() << '\n';
  }
  emit(o.out, tsv.str());
  return kExitOk;
}

// ---- cluster ---------------------------------------------------------------

struct ClusterOpts {
  Common common;
  std::string fasta, annotations, hierarchy, pretrained, level = "family", out;
};

template <typename Real>
int cmd_cluster(const ClusterOpts& o) {
  const RunConfig c = resolve_config(o.common);
  const auto& p = c.paths;
  const Dataset d = load_dataset(require(pick(o.fasta, p.fasta), "--fasta"), pick(o.annotations, p.annotations),
                                 require(pick(o.hierarchy, p.hierarchy), "--hierarchy"), "");
  const auto pre = pretrain_from_state(
      c, load_checkpoint<Real>(require(pick(o.pretrained, p.pretrained), "--pretrained"), config_hash(c)),
      &d.keyword_vocab);
  const std::size_t level = d.tree->level_of(o.level);
  std::vector<ProteinRecord> members;
  for (const auto& r : d.proteins)
    if (d.tree->contains(r.id)) members.push_back(r);
  const auto features = extract_features(pre, members);
  // Sequence half of the fused features.
  Tensor emb({members.size(), pre.align.proj_dim});
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < members.size(); ++i) {
    ids.push_back(members[i].id);
    for (std::size_t k = 0; k < pre.align.proj_dim; ++k) emb(i, k) = double(features(i, k));
  }
  const auto report = embedding_cluster_report(emb, ids, *d.tree, level);
  emit(o.out, cluster_report_csv(report));
  std::cerr << "cluster: " << o.level << " silhouette "
            << (report.silhouette ? std::to_string(*report.silhouette) : std::string("undefined")) << "\n";
  return kExitOk;
}

// ---- gradcheck -------------------------------------------------------------

struct GradOpts {
  std::uint64_t seed = 1;
  std::size_t fixtures = 5;
  std::string out;
};

int cmd_gradcheck(const GradOpts& o) {
  if (o.fixtures == 0) throw UsageError("--fixtures must be positive");
  const auto r = run_gradient_suite(o.seed, o.fixtures);
  json ops = json::array();
  for (const auto& e : r.entries)
    ops.push_back({{"op", e.op},
                   {"fixtures", e.fixtures},
                   {"failures", e.failures},
                   {"max_rel_err", e.max_rel_err},
                   {"passed", e.passed()},
                   {"diagnostics", e.diagnostics}});
  const json j = {{"seed", o.seed},
                  {"h", 1e-5},
                  {"tolerance", 1e-4},
                  {"ops", ops},
                  {"hc_constraint_violations", r.hc_constraint_violations},
                  {"passed", r.passed()}};
  emit(o.out, j.dump(2) + "\n");
  return r.passed() ? kExitOk : kExitValidation;
}

template <template <typename> class Cmd, typename Opts>
int by_precision(const Opts& o) {
  const RunConfig c = resolve_config(o.common);
  return c.training.precision == Precision::kFloat ? Cmd<float>::run(o) : Cmd<double>::run(o);
}

#define HIPPO_PRECISION_CMD(name, fn, Opts) \
  template <typename Real>                  \
  struct name {                             \
    static int run(const Opts& o) { return fn<Real>(o); } \
  };
HIPPO_PRECISION_CMD(PretrainCmd, cmd_pretrain, PretrainOpts)
HIPPO_PRECISION_CMD(TrainCmd, cmd_train, DownstreamOpts)
HIPPO_PRECISION_CMD(EvalCmd, cmd_eval, DownstreamOpts)
HIPPO_PRECISION_CMD(SitesCmd, cmd_sites, SitesOpts)
HIPPO_PRECISION_CMD(ClusterCmd, cmd_cluster, ClusterOpts)
#undef HIPPO_PRECISION_CMD

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run config");
  app->add_option("--seed", c.seed, "Override training.seed");
}

int run(int argc, char** argv) {
  CLI::App app{"HIPPO: hierarchical contrastive protein pretraining and multi-label PPI prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hippo 0.1.0");

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic hierarchical corpus");
  s->add_option("--seed", synth.spec.seed);
  s->add_option("--proteins", synth.spec.n_proteins);
  s->add_option("--families", synth.spec.n_families);
  s->add_option("--clans", synth.spec.n_clans);
  s->add_option("--types", synth.spec.n_types);
  s->add_option("--min-length", synth.spec.min_length);
  s->add_option("--max-length", synth.spec.max_length);
  s->add_option("--label-noise", synth.spec.label_noise);
  s->add_option("--keyword-noise", synth.spec.keyword_noise);
  s->add_option("--out", synth.out, "Output directory")->required();

  SplitOpts split;
  auto* sp = app.add_subcommand("split", "Partition edges into train/val/test");
  sp->add_option("--edges", split.edges)->required();
  sp->add_option("--method", split.method, "random, bfs or dfs")->check(CLI::IsMember({"random", "bfs", "dfs"}));
  sp->add_option("--test-frac", split.test_frac);
  sp->add_option("--val-frac", split.val_frac);
  sp->add_option("--seed", split.seed);
  sp->add_option("--types", split.types, "Comma-separated interaction type vocabulary");
  sp->add_option("--sweep", split.sweep, "Seeds in the hard-fraction comparison summary (0 disables)");
  sp->add_option("--out", split.out, "Split JSON (stdout when omitted)");

  PretrainOpts pre;
  auto* pt = app.add_subcommand("pretrain", "Pretrain the sequence and annotation encoders");
  add_common(pt, pre.common);
  pt->add_option("--fasta", pre.fasta);
  pt->add_option("--annotations", pre.annotations);
  pt->add_option("--hierarchy", pre.hierarchy);
  pt->add_option("--steps", pre.steps, "Override training.pretrain_steps");
  pt->add_option("--log", pre.log, "JSON-lines step log (stdout when omitted)");
  pt->add_option("--out", pre.out, "Checkpoint path");

  DownstreamOpts train;
  auto* tr = app.add_subcommand("train", "Train the GIN interaction model on frozen features");
  add_common(tr, train.common);
  for (const auto& [name, target] : std::initializer_list<std::pair<const char*, std::string*>>{
           {"--fasta", &train.fasta}, {"--annotations", &train.annotations}, {"--edges", &train.edges},
           {"--split", &train.split}, {"--pretrained", &train.pretrained}, {"--types", &train.common.types}})
    tr->add_option(name, *target);
  tr->add_option("--epochs", train.epochs, "Override training.ppi_epochs");
  tr->add_option("--log", train.log, "JSON-lines epoch log (stdout when omitted)");
  tr->add_option("--out", train.out, "Model checkpoint path");

  DownstreamOpts eval;
  auto* ev = app.add_subcommand("eval", "Evaluate on the test edges of a split");
  add_common(ev, eval.common);
  for (const auto& [name, target] : std::initializer_list<std::pair<const char*, std::string*>>{
           {"--fasta", &eval.fasta}, {"--annotations", &eval.annotations}, {"--edges", &eval.edges},
           {"--split", &eval.split}, {"--pretrained", &eval.pretrained}, {"--model", &eval.model},
           {"--types", &eval.common.types}})
    ev->add_option(name, *target);
  ev->add_option("--predictions", eval.predictions, "Score this predictions TSV instead of a model");
  ev->add_option("--predictions-out", eval.predictions_out, "Also write the model's test predictions");
  ev->add_option("--out", eval.out, "Report JSON (stdout when omitted)");

  SitesOpts sites;
  auto* si = app.add_subcommand("sites", "Overlap of top-attention residues with annotated sites");
  add_common(si, sites.common);
  si->add_option("--fasta", sites.fasta);
  si->add_option("--sites", sites.sites)->required();
  si->add_option("--pretrained", sites.pretrained);
  si->add_option("--out", sites.out, "TSV (stdout when omitted)");

  ClusterOpts cluster;
  auto* cl = app.add_subcommand("cluster", "PCA coordinates and silhouette of pretrained embeddings");
  add_common(cl, cluster.common);
  cl->add_option("--fasta", cluster.fasta);
  cl->add_option("--annotations", cluster.annotations);
  cl->add_option("--hierarchy", cluster.hierarchy);
  cl->add_option("--pretrained", cluster.pretrained);
  cl->add_option("--level", cluster.level, "Hierarchy level to label by")->check(CLI::IsMember({"clan", "family"}));
  cl->add_option("--out", cluster.out, "CSV (stdout when omitted)");

  GradOpts grad;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gc->add_option("--seed", grad.seed);
  gc->add_option("--fixtures", grad.fixtures, "Random fixtures per op");
  gc->add_option("--out", grad.out, "Report JSON (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (sp->parsed()) return cmd_split(split);
    if (pt->parsed()) return by_precision<PretrainCmd>(pre);
    if (tr->parsed()) return by_precision<TrainCmd>(train);
    if (ev->parsed()) return by_precision<EvalCmd>(eval);
    if (si->parsed()) return by_precision<SitesCmd>(sites);
    if (cl->parsed()) return by_precision<ClusterCmd>(cluster);
    if (gc->parsed()) return cmd_gradcheck(grad);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == CheckpointErrc::kIo ? kExitIo : kExitValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace hippo::cli

int main(int argc, char** argv) { return hippo::cli::run(argc, argv); }
