#pragma once

#include <functional>
#include <optional>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "hippo/encoders/pretrain.hpp"
#include "hippo/numcore/adam.hpp"
#include "hippo/ppinet/gin.hpp"
#include "hippo/ppinet/graph.hpp"
#include "hippo/splitbench/metrics.hpp"
#include "hippo/splitbench/report.hpp"
#include "hippo/splitbench/split.hpp"

namespace hippo {

template <typename Real>
struct PpiModel {
  GinConfig gin;
  PairHeadConfig head;
  std::size_t in_width = 0;
  std::size_t n_types = 0;
  // When true the parameter set carries the annotation encoder and its
  // projection ("ann.", "proj.ann."), which then train with the GIN; the
  // annotation half of the node features is recomputed from keywords.
  bool tune_annotation = false;
  ParamSet<Real> params;
};

template <typename Real>
PpiModel<Real> init_ppi_model(const GinConfig& gin, const PairHeadConfig& head, std::size_t in_width,
                              std::size_t n_types, std::uint64_t seed,
                              const PretrainModel<Real>* annotation_source = nullptr) {
  PpiModel<Real> m;
  m.gin = gin;
  m.head = head;
  m.in_width = in_width;
  m.n_types = n_types;
  const Rng base = Rng(seed).split(hash_tag("ppi-init"));
  init_gin(m.params, gin, in_width, base);
  init_pair_head(m.params, head, gin.hidden, n_types, base);
  if (annotation_source) {
    if (in_width != annotation_source->feature_width())
      throw ShapeError("ppi model: node width does not match the pretrained feature width");
    m.tune_annotation = true;
    for (std::size_t i = 0; i < annotation_source->params.size(); ++i) {
      const auto& n = annotation_source->params.name(i);
      if (n.rfind("ann.", 0) == 0 || n.rfind("proj.ann.", 0) == 0) m.params.add(n, annotation_source->params[i]);
    }
  }
  return m;
}

template <typename Real>
ad::Var node_inputs(ad::Tape<Real>& t, const PpiModel<Real>& m, const BoundParams<Real>& bp, const PpiGraph<Real>& g) {
  if (g.features.rank() != 2 || g.features.dim(1) != m.in_width)
    throw ShapeError("ppi model expects node features of width " + std::to_string(m.in_width) + ", graph has " +
                     shape_string(g.features.shape()));
  const ad::Var x = t.constant(g.features);
  if (!m.tune_annotation) return x;
  if (g.keywords.rank() != 2 || g.keywords.dim(0) != g.nodes())
    throw ValidationError("ppi model: annotation tuning needs keyword vectors attached to the graph");
  const std::size_t w = m.in_width / 2;
  const ad::Var za = ad::linear(t, encode_annotations(t, bp, t.constant(g.keywords)), bp["proj.ann.w"], bp["proj.ann.b"]);
  return ad::concat_cols(t, {ad::slice_cols(t, x, 0, w), ad::l2_normalize_rows(t, za)});
}

template <typename Real>
std::vector<std::pair<std::size_t, std::size_t>> edge_pairs(const PpiGraph<Real>& g, const std::vector<std::size_t>& idx) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k : idx) out.emplace_back(g.edges.at(k).i, g.edges.at(k).j);
  return out;
}

// Probabilities [P x T] with eval-mode normalization over the graph's fixed
// adjacency.
template <typename Real>
BasicTensor<Real> predict(const PpiModel<Real>& m, const PpiGraph<Real>& g,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  for (const auto& [i, j] : pairs)
    if (i >= g.nodes() || j >= g.nodes()) throw ValidationError("predict: pair references an unknown node");
  if (pairs.empty()) return BasicTensor<Real>({0, m.n_types});
  ad::Tape<Real> t;
  const auto bp = bind_params(t, m.params, false);
  const ad::Var emb = gin_forward(t, m.gin, bp, m.params, node_inputs(t, m, bp, g), g.adjacency, GinMode::kEval);
  return t.value(ad::sigmoid(t, pair_logits(t, m.head, bp, emb, pairs)));
}

template <typename Real>
BasicTensor<Real> predict(const PpiModel<Real>& m, const PpiGraph<Real>& g,
                          const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  for (const auto& [a, b] : pairs) idx.emplace_back(g.node(a), g.node(b));
  return predict(m, g, idx);
}

struct PpiTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_edges = 0;  // 0: full batch
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct PpiEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean BCE over all training edges after the epoch
  double val_score = 0.0;
};

template <typename Real>
struct PpiTrainResult {
  PpiModel<Real> model;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  double initial_loss = 0.0;
  std::vector<PpiEpochLog> log;
};

// Validation score of the model after `epoch`; higher is better.
template <typename Real>
using ValScorer = std::function<double(std::size_t epoch, const PpiModel<Real>&)>;

template <typename Real>
double validation_micro_f1(const PpiModel<Real>& m, const PpiGraph<Real>& g, const std::vector<std::size_t>& val) {
  const auto probs = predict(m, g, edge_pairs(g, val));
  BasicTensor<Real> hard(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) hard[i] = double(probs[i]) >= kDecisionThreshold ? Real(1) : Real(0);
  return micro_f1(hard, edge_labels(g, val));
}

namespace detail {

template <typename Real>
struct PpiStep {
  ad::Tape<Real> tape;
  BoundParams<Real> bound;
  ad::Var loss;
  std::vector<ad::BatchStats<Real>> stats;
};

template <typename Real>
void ppi_forward(PpiStep<Real>& s, const PpiModel<Real>& m, const PpiGraph<Real>& g, const std::vector<std::size_t>& batch,
                 bool grads) {
  s.bound = bind_params(s.tape, m.params, [grads](const std::string& n) { return grads && !is_running_stat(n); });
  const ad::Var emb = gin_forward(s.tape, m.gin, s.bound, m.params, node_inputs(s.tape, m, s.bound, g), g.adjacency,
                                  GinMode::kTrain, &s.stats);
  s.loss = bce_multilabel(s.tape, pair_logits(s.tape, m.head, s.bound, emb, edge_pairs(g, batch)), edge_labels(g, batch));
}

}  // namespace detail

template <typename Real>
double training_loss(const PpiModel<Real>& m, const PpiGraph<Real>& g, const std::vector<std::size_t>& train) {
  detail::PpiStep<Real> s;
  detail::ppi_forward(s, m, g, train, false);
  return double(s.tape.value(s.loss).item());
}

// Adam over mini-batches of training edges with a full-graph forward per
// step. After each epoch the validation score (micro-F1 on the validation
// edges unless `scorer` is given) is logged; the parameters of the best
// epoch are returned, ties going to the earlier epoch.
template <typename Real>
PpiTrainResult<Real> train_ppi(PpiModel<Real> model, const PpiGraph<Real>& g, const SplitSpec& split,
                               const PpiTrainConfig& cfg, std::type_identity_t<ValScorer<Real>> scorer = {},
                               const std::function<void(const PpiEpochLog&)>& on_epoch = {}) {
  if (split.train.empty()) throw ValidationError("train_ppi: empty training split");
  if (!adjacency_matches(g, split.train))
    throw ValidationError("train_ppi: graph adjacency must contain exactly the training edges");
  if (!scorer)
    scorer = [&](std::size_t, const PpiModel<Real>& m) {
      return split.val.empty() ? 0.0 : validation_micro_f1(m, g, split.val);
    };
  PpiTrainResult<Real> r;
  r.initial_loss = training_loss(model, g, split.train);
  r.model = model;
  bool have_best = false;
  std::vector<bool> trainable(model.params.size());
  for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i] = !is_running_stat(model.params.name(i));
  Adam<Real> adam(AdamConfig{cfg.lr});
  Rng order_rng = Rng(cfg.seed).split(hash_tag("ppi-batches"));
  std::vector<std::size_t> order = split.train;
  const std::size_t bs = cfg.batch_edges == 0 ? order.size() : cfg.batch_edges;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::vector<std::size_t> batch(order.begin() + std::ptrdiff_t(start),
                                           order.begin() + std::ptrdiff_t(std::min(order.size(), start + bs)));
      detail::PpiStep<Real> s;
      detail::ppi_forward(s, model, g, batch, true);
      s.tape.backward(s.loss);
      std::vector<BasicTensor<Real>> grads;
      for (std::size_t i = 0; i < model.params.size(); ++i)
        grads.push_back(trainable[i] ? s.tape.grad(s.bound.vars()[i]) : BasicTensor<Real>::zeros(model.params[i].shape()));
      adam.step(model.params, grads, trainable);
      update_running_stats(model.params, model.gin, s.stats, g.nodes());
    }
    PpiEpochLog entry{epoch, training_loss(model, g, split.train), scorer(epoch, model)};
    r.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (!have_best || entry.val_score > r.best_score) {
      have_best = true;
      r.best_score = entry.val_score;
      r.best_epoch = epoch;
      r.model = model;
    }
  }
  return r;
}

// TSV `protein_a  protein_b  p_<type>...` with a header row.
template <typename Real>
std::string emit_predictions(const PpiGraph<Real>& g, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                             const BasicTensor<Real>& probs, const std::vector<std::string>& types) {
  if (probs.rank() != 2 || probs.dim(0) != pairs.size() || probs.dim(1) != types.size())
    throw ShapeError("emit_predictions: probability matrix does not match pairs and types");
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << "protein_a\tprotein_b";
  for (const auto& t : types) out << "\tp_" << t;
  out << '\n';
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    out << g.ids.at(pairs[r].first) << '\t' << g.ids.at(pairs[r].second);
    for (std::size_t k = 0; k < types.size(); ++k) out << '\t' << double(probs(r, k));
    out << '\n';
  }
  return out.str();
}

}  // namespace hippo
