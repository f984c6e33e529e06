#pragma once

#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

#include "hippo/config.hpp"
#include "hippo/dataio/checkpoint.hpp"
#include "hippo/dataio/fasta.hpp"
#include "hippo/dataio/synth.hpp"
#include "hippo/dataio/tables.hpp"
#include "hippo/encoders/pretrain.hpp"
#include "hippo/ppinet/train.hpp"
#include "hippo/splitbench/report.hpp"
#include "hippo/splitbench/split.hpp"

namespace hippo {

struct Dataset {
  std::vector<ProteinRecord> proteins;
  std::vector<std::string> keyword_vocab;
  EdgeTable edges;
  std::optional<HierarchyTree> tree;
};

inline Dataset dataset_from_corpus(const SynthCorpus& c) {
  return Dataset{c.proteins, c.keyword_vocab, c.edges, c.tree};
}

// Proteins come from the FASTA file; keywords, hierarchy and edges are
// attached when their paths are non-empty. Without `types` the interaction
// vocabulary is the sorted set of types seen in the edge file.
inline Dataset load_dataset(const std::string& fasta, const std::string& annotations, const std::string& hierarchy,
                            const std::string& edges,
                            const std::optional<std::vector<std::string>>& types = std::nullopt) {
  if (fasta.empty()) throw ValidationError("a FASTA file is required");
  Dataset d;
  AnnotationTable ann;
  if (!annotations.empty()) ann = parse_annotations(annotations);
  d.keyword_vocab = ann.vocab;
  std::vector<HierarchyRow> rows;
  if (!hierarchy.empty()) d.tree = parse_hierarchy(hierarchy, &rows);
  std::map<std::string, const HierarchyRow*> row_of;
  for (const auto& r : rows) row_of[r.protein] = &r;
  for (auto& [id, seq] : parse_fasta(fasta)) {
    ProteinRecord rec;
    rec.id = id;
    rec.sequence = seq;
    rec.keywords = ann.lookup(id);
    if (auto it = row_of.find(id); it != row_of.end()) {
      rec.family_id = it->second->family;
      if (!it->second->clan.empty()) rec.clan_id = it->second->clan;
    }
    d.proteins.push_back(std::move(rec));
  }
  if (!edges.empty()) d.edges = parse_edges(edges, types);
  return d;
}

inline std::vector<std::string> protein_ids(const Dataset& d) {
  std::vector<std::string> ids;
  for (const auto& p : d.proteins) ids.push_back(p.id);
  return ids;
}

// ---- pretraining -----------------------------------------------------------

template <typename Real>
PretrainModel<Real> new_pretrain_model(const RunConfig& c, std::size_t vocab_size) {
  return init_pretrain_model<Real>(c.encoder, c.alignment, vocab_size, c.training.seed);
}

// Pretrains on the proteins that have a hierarchy leaf when the
// hierarchical term is active, on all proteins otherwise.
template <typename Real>
PretrainResult<Real> run_pretrain(const RunConfig& c, const Dataset& d,
                                  const std::function<void(const PretrainLogEntry&)>& on_step = {}) {
  if (c.alignment.w_hc > 0.0 && !d.tree)
    throw ValidationError("w_hc > 0 needs a hierarchy file: the hierarchical loss draws its positives from it");
  std::vector<ProteinRecord> records;
  for (const auto& p : d.proteins)
    if (c.alignment.w_hc == 0.0 || d.tree->contains(p.id)) records.push_back(p);
  if (records.size() < 2) throw ValidationError("pretraining needs at least two proteins");
  return pretrain(new_pretrain_model<Real>(c, d.keyword_vocab.size()), records,
                  c.alignment.w_hc > 0.0 ? &*d.tree : nullptr, c.pretrain_config(), on_step);
}

template <typename Real>
ModelState<Real> pretrain_state(const RunConfig& c, const PretrainResult<Real>& r, const Dataset& d) {
  ModelState<Real> s;
  s.config_hash = config_hash(c);
  s.seed = c.training.seed;
  s.epoch = std::int64_t(r.best_step);
  s.kind = "pretrain";
  s.extra = {{"keyword_vocab", d.keyword_vocab}, {"best_eval", r.best_eval}};
  s.tensors = r.model.params;
  return s;
}

// Rebuilds the pretrained model from a checkpoint. When `vocab` is given it
// must equal the annotation vocabulary stored at pretraining time.
template <typename Real>
PretrainModel<Real> pretrain_from_state(const RunConfig& c, const ModelState<Real>& s,
                                        const std::vector<std::string>* vocab = nullptr) {
  if (s.kind != "pretrain") throw ValidationError("expected a pretraining checkpoint, found kind '" + s.kind + "'");
  const auto stored = s.extra.value("keyword_vocab", std::vector<std::string>{});
  if (vocab && *vocab != stored) throw ValidationError("annotation vocabulary differs from the one used for pretraining");
  auto m = new_pretrain_model<Real>(c, stored.size());
  if (m.params.names() != s.tensors.names()) throw ValidationError("pretraining checkpoint does not match the encoder config");
  m.params = s.tensors;
  return m;
}

// ---- downstream ------------------------------------------------------------

// Node features [z_seq ; z_ann] from the pretrained model, adjacency from the
// split's training edges, keyword vectors attached.
template <typename Real>
PpiGraph<Real> feature_graph(const PretrainModel<Real>& m, const Dataset& d, const SplitSpec& split) {
  auto g = build_graph(d.edges.edges, protein_ids(d), extract_features(m, d.proteins), split.train);
  std::map<std::string, const ProteinRecord*> by_id;
  for (const auto& p : d.proteins) by_id[p.id] = &p;
  std::vector<std::vector<std::uint8_t>> kw;
  for (const auto& id : g.ids) kw.push_back(by_id.at(id)->keywords);
  g.keywords = keyword_matrix<Real>(kw, d.keyword_vocab.size());
  return g;
}

template <typename Real>
PpiModel<Real> new_ppi_model(const RunConfig& c, const PretrainModel<Real>& m, std::size_t n_types) {
  return init_ppi_model<Real>(c.gin, c.pair_head, m.feature_width(), n_types, c.training.seed,
                              c.training.freeze_annotation_encoder ? nullptr : &m);
}

template <typename Real>
ModelState<Real> ppi_state(const RunConfig& c, const PpiTrainResult<Real>& r, const std::vector<std::string>& types) {
  ModelState<Real> s;
  s.config_hash = config_hash(c);
  s.seed = c.training.seed;
  s.epoch = std::int64_t(r.best_epoch);
  s.kind = "ppi";
  s.extra = {{"types", types},
             {"in_width", r.model.in_width},
             {"tune_annotation", r.model.tune_annotation},
             {"best_score", r.best_score}};
  s.tensors = r.model.params;
  return s;
}

template <typename Real>
PpiModel<Real> ppi_from_state(const RunConfig& c, const ModelState<Real>& s, const PretrainModel<Real>& m,
                              const std::vector<std::string>& types) {
  if (s.kind != "ppi") throw ValidationError("expected a PPI model checkpoint, found kind '" + s.kind + "'");
  if (s.extra.value("types", std::vector<std::string>{}) != types)
    throw ValidationError("interaction types differ from the ones the model was trained on");
  RunConfig cc = c;
  cc.training.freeze_annotation_encoder = !s.extra.value("tune_annotation", false);
  auto model = new_ppi_model<Real>(cc, m, types.size());
  if (model.params.names() != s.tensors.names()) throw ValidationError("PPI checkpoint does not match the gin config");
  model.params = s.tensors;
  return model;
}

inline std::vector<Difficulty> test_difficulty(const SplitSpec& split) {
  std::vector<Difficulty> d;
  for (std::size_t e : split.test) d.push_back(split.difficulty.at(e));
  return d;
}

template <typename Real>
MetricReport evaluate_test(const PpiModel<Real>& model, const PpiGraph<Real>& g, const SplitSpec& split,
                           const std::vector<std::string>& types) {
  const auto probs = predict(model, g, edge_pairs(g, split.test));
  return evaluate_predictions(probs, edge_labels(g, split.test), test_difficulty(split), types);
}

inline Tensor edge_truth(const EdgeTable& edges, const std::vector<std::size_t>& rows) {
  Tensor truth({rows.size(), edges.types.size()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t k = 0; k < edges.types.size(); ++k) truth(r, k) = edges.edges.at(rows[r]).labels.at(k);
  return truth;
}

// Degree-based random guessing on the test edges.
inline MetricReport evaluate_baseline(const EdgeTable& edges, const SplitSpec& split, std::uint64_t seed) {
  const auto guess = degree_guess<double>(edges.edges, split.train, split.test, Rng(seed).split(hash_tag("baseline")));
  return evaluate_predictions(guess, edge_truth(edges, split.test), test_difficulty(split), edges.types);
}

// Probabilities for `rows` of `edges` read from a predictions TSV (header
// `protein_a  protein_b  p_<type>...`, as written by emit_predictions). Pairs
// match in either orientation; extra rows are ignored.
inline Tensor parse_prediction_table(std::string_view text, const EdgeTable& edges, const std::vector<std::size_t>& rows) {
  const auto all = io::lines(text);
  std::size_t ln = 0;
  while (ln < all.size() && io::blank_or_comment(all[ln])) ++ln;
  if (ln == all.size()) throw ParseError("predictions: missing header");
  std::vector<std::string> expected = {"protein_a", "protein_b"};
  for (const auto& t : edges.types) expected.push_back("p_" + t);
  auto header = io::split(all[ln], '\t');
  for (auto& h : header) h = io::trim(h);
  if (header != expected) throw ParseError("predictions: header must list protein_a, protein_b and p_<type> per type", ln + 1);
  std::map<std::pair<std::string, std::string>, std::vector<double>> table;
  for (++ln; ln < all.size(); ++ln) {
    if (io::blank_or_comment(all[ln])) continue;
    auto cols = io::split(all[ln], '\t');
    if (cols.size() != expected.size()) throw ParseError("predictions: wrong column count", ln + 1);
    for (auto& c : cols) c = io::trim(c);
    std::vector<double> p;
    for (std::size_t k = 2; k < cols.size(); ++k) {
      char* end = nullptr;
      const double v = std::strtod(cols[k].c_str(), &end);
      if (cols[k].empty() || *end != '\0' || !(v >= 0.0 && v <= 1.0))
        throw ParseError("predictions: '" + cols[k] + "' is not a probability", ln + 1);
      p.push_back(v);
    }
    auto key = cols[0] < cols[1] ? std::make_pair(cols[0], cols[1]) : std::make_pair(cols[1], cols[0]);
    if (!table.emplace(key, std::move(p)).second)
      throw ParseError("predictions: pair " + cols[0] + "/" + cols[1] + " listed twice", ln + 1);
  }
  Tensor out({rows.size(), edges.types.size()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& e = edges.edges.at(rows[r]);
    auto it = table.find(e.a < e.b ? std::make_pair(e.a, e.b) : std::make_pair(e.b, e.a));
    if (it == table.end()) throw ValidationError("predictions: no row for test pair " + e.a + "/" + e.b);
    for (std::size_t k = 0; k < it->second.size(); ++k) out(r, k) = it->second[k];
  }
  return out;
}

template <typename Real>
struct PipelineOutcome {
  PretrainResult<Real> pretrained;
  PpiTrainResult<Real> trained;
  MetricReport report;
  MetricReport baseline;
};

// pretrain -> features -> graph -> train -> evaluate on the split's test edges.
template <typename Real>
PipelineOutcome<Real> run_pipeline(const RunConfig& c, const Dataset& d, const SplitSpec& split) {
  PipelineOutcome<Real> out{run_pretrain<Real>(c, d), {}, {}, {}};
  const auto g = feature_graph(out.pretrained.model, d, split);
  out.trained = train_ppi(new_ppi_model<Real>(c, out.pretrained.model, d.edges.types.size()), g, split, c.ppi_config());
  out.report = evaluate_test(out.trained.model, g, split, d.edges.types);
  out.baseline = evaluate_baseline(d.edges, split, c.training.seed);
  return out;
}

}  // namespace hippo
