#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "hippo/dataio/records.hpp"
#include "hippo/encoders/alignment.hpp"
#include "hippo/encoders/annotation_encoder.hpp"
#include "hippo/encoders/sequence_encoder.hpp"
#include "hippo/hierarchy/hc_loss.hpp"
#include "hippo/numcore/adam.hpp"

namespace hippo {

// Sequence encoder, annotation encoder and alignment heads with their
// parameters.
template <typename Real>
struct PretrainModel {
  SequenceEncoderConfig seq;
  AnnotationEncoderConfig ann;
  AlignmentConfig align;
  ParamSet<Real> params;

  // Width of the fused node feature [z_seq ; z_ann].
  std::size_t feature_width() const { return 2 * align.proj_dim; }
};

template <typename Real>
PretrainModel<Real> init_pretrain_model(const SequenceEncoderConfig& seq, const AlignmentConfig& align,
                                        std::size_t vocab_size, std::uint64_t seed) {
  PretrainModel<Real> m;
  m.seq = seq;
  m.ann = AnnotationEncoderConfig{vocab_size, seq.d_model, seq.d_model};
  m.align = align;
  const Rng base = Rng(seed).split(hash_tag("init"));
  init_sequence_encoder(m.params, m.seq, base);
  init_annotation_encoder(m.params, m.ann, base);
  init_alignment_heads(m.params, m.align, seq.d_model, seq.d_model, base);
  return m;
}

struct PretrainBatch {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> tokens;  // one row per member, padded to a common length
  std::vector<std::vector<std::uint8_t>> masks;  // 1 at real residues
  std::vector<std::vector<std::uint8_t>> keywords;
  std::vector<std::vector<LevelPairs>> positives;  // [level][anchor]; empty without a hierarchy
};

// Batch over `members` (indices into `records`), padded to the longest
// member. `tree` may be null when no hierarchy is available.
inline PretrainBatch make_pretrain_batch(const std::vector<ProteinRecord>& records,
                                         const std::vector<std::size_t>& members, const HierarchyTree* tree) {
  if (members.empty()) throw ValidationError("pretrain batch: no members");
  PretrainBatch b;
  std::size_t len = 0;
  for (std::size_t m : members) len = std::max(len, records.at(m).sequence.size());
  for (std::size_t m : members) {
    const auto& r = records[m];
    b.ids.push_back(r.id);
    auto tok = tokenize(r.sequence);
    std::vector<std::uint8_t> mask(tok.size(), 1);
    tok.resize(len, kPadToken);
    mask.resize(len, 0);
    b.tokens.push_back(std::move(tok));
    b.masks.push_back(std::move(mask));
    b.keywords.push_back(r.keywords);
  }
  if (tree) b.positives = all_level_pairs(*tree, b.ids);
  return b;
}

struct PretrainComponents {
  double hc = 0.0;
  double sac = 0.0;
  double sam = 0.0;
  double total = 0.0;
  HcLossBreakdown hc_breakdown;
};

template <typename Real>
struct PretrainForward {
  ad::Var total;
  ad::Var z_seq;  // [N x proj], unit rows
  ad::Var z_ann;  // [N x proj], unit rows
  PretrainComponents components;
};

// Projected, normalized sequence and annotation embeddings of a batch.
template <typename Real>
std::pair<ad::Var, ad::Var> project_batch(ad::Tape<Real>& t, const PretrainModel<Real>& m, const BoundParams<Real>& p,
                                          const PretrainBatch& batch) {
  std::vector<ad::Var> pooled;
  for (std::size_t i = 0; i < batch.ids.size(); ++i)
    pooled.push_back(encode_sequence(t, m.seq, p, batch.tokens[i], batch.masks[i]).pooled);
  const ad::Var seq = ad::linear(t, ad::stack_rows(t, pooled), p["proj.seq.w"], p["proj.seq.b"]);
  const ad::Var kw = t.constant(keyword_matrix<Real>(batch.keywords, m.ann.vocab_size));
  const ad::Var ann = ad::linear(t, encode_annotations(t, p, kw), p["proj.ann.w"], p["proj.ann.b"]);
  return {ad::l2_normalize_rows(t, seq), ad::l2_normalize_rows(t, ann)};
}

// total = w_hc L_HC + w_sac L_SAC + w_sam L_SAM. Every component is evaluated
// and reported; zero-weight terms are left out of the total. L_HC is 0 when
// the batch carries no hierarchy positives.
template <typename Real>
PretrainForward<Real> pretrain_objective(ad::Tape<Real>& t, const PretrainModel<Real>& m, const BoundParams<Real>& p,
                                         const PretrainBatch& batch, Rng& sam_rng) {
  const auto& a = m.align;
  a.validate();
  if (batch.ids.size() < 2) throw ValidationError("pretrain objective: contrastive terms need N >= 2");
  const Real tau = Real(a.tau);
  PretrainForward<Real> out;
  std::tie(out.z_seq, out.z_ann) = project_batch(t, m, p, batch);

  std::vector<ad::Var> terms;
  auto add_term = [&](ad::Var v, double w, double& slot) {
    slot = double(t.value(v).item());
    if (w > 0.0) terms.push_back(w == 1.0 ? v : ad::scale(t, v, Real(w)));
  };
  ad::Var hc = t.constant(BasicTensor<Real>::scalar(Real(0)));
  if (!batch.positives.empty()) {
    if (a.level_weights.size() != batch.positives.size())
      throw ValidationError("pretrain objective: one level weight per hierarchy level is required");
    hc = hc_loss(t, out.z_seq, batch.positives, a.level_weights, tau, &out.components.hc_breakdown);
  } else {
    out.components.hc_breakdown.no_positives = true;
  }
  add_term(hc, a.w_hc, out.components.hc);
  add_term(sac_loss(t, out.z_seq, out.z_ann, tau), a.w_sac, out.components.sac);
  const auto pairs = sam_pairs(batch.ids.size(), sam_rng);
  const ad::Var probs = match_probabilities(t, p, out.z_seq, out.z_ann, pairs);
  add_term(sam_loss(t, pairs, probs, Real(a.alpha), Real(a.gamma)), a.w_sam, out.components.sam);

  out.total = terms.empty() ? t.constant(BasicTensor<Real>::scalar(Real(0))) : ad::add_n(t, terms);
  out.components.total = double(t.value(out.total).item());
  return out;
}

struct PretrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t eval_every = 10;
  std::size_t eval_batch = 64;
};

struct PretrainLogEntry {
  std::size_t step = 0;
  double hc = 0.0, sac = 0.0, sam = 0.0, total = 0.0;
  std::optional<double> eval_total;
};

template <typename Real>
struct PretrainResult {
  PretrainModel<Real> model;  // parameters of the best evaluation
  std::size_t best_step = 0;
  double best_eval = 0.0;
  std::vector<PretrainLogEntry> log;
};

namespace detail {

enum PretrainStream : std::uint64_t { kBatchStream = 11, kSamStream, kEvalStream };

}  // namespace detail

// Adam over seeded random batches. The objective on a fixed evaluation batch
// (with fixed SAM negatives) is measured at step 0, every `eval_every` steps
// and at the last step; the parameters with the lowest value are returned.
template <typename Real>
PretrainResult<Real> pretrain(PretrainModel<Real> model, const std::vector<ProteinRecord>& records,
                              const HierarchyTree* tree, const PretrainConfig& cfg,
                              const std::function<void(const PretrainLogEntry&)>& on_step = {}) {
  if (records.size() < 2) throw ValidationError("pretrain: need at least two proteins");
  if (model.align.w_hc > 0.0 && !tree)
    throw ValidationError("pretrain: w_hc > 0 needs a hierarchy; supply one or set w_hc to 0");
  if (cfg.batch_size < 2) throw ParameterError("pretrain: batch_size must be at least 2");
  const Rng base(cfg.seed);
  const std::size_t n = records.size();

  auto eval_members = base.split(detail::kEvalStream).permutation(n);
  eval_members.resize(std::min(cfg.eval_batch, n));
  std::sort(eval_members.begin(), eval_members.end());
  const PretrainBatch eval_batch = make_pretrain_batch(records, eval_members, tree);
  auto evaluate = [&](const ParamSet<Real>& params) {
    ad::Tape<Real> t;
    Rng sam_rng = base.split(detail::kEvalStream).split(1);
    const auto bound = bind_params(t, params, false);
    return pretrain_objective(t, model, bound, eval_batch, sam_rng).components.total;
  };

  PretrainResult<Real> result;
  result.best_eval = evaluate(model.params);
  result.best_step = 0;
  result.model = model;
  Adam<Real> opt(AdamConfig{cfg.lr});
  const std::size_t bs = std::min(cfg.batch_size, n);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    Rng batch_rng = base.split(detail::kBatchStream).split(step);
    auto members = batch_rng.permutation(n);
    members.resize(bs);
    const PretrainBatch batch = make_pretrain_batch(records, members, tree);
    Rng sam_rng = base.split(detail::kSamStream).split(step);
    ad::Tape<Real> t;
    const auto bound = bind_params(t, model.params);
    const auto fwd = pretrain_objective(t, model, bound, batch, sam_rng);
    t.backward(fwd.total);
    std::vector<BasicTensor<Real>> grads;
    for (const auto& v : bound.vars()) grads.push_back(t.grad(v));
    opt.step(model.params, grads);

    PretrainLogEntry entry{step, fwd.components.hc, fwd.components.sac, fwd.components.sam, fwd.components.total, {}};
    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps) {
      entry.eval_total = evaluate(model.params);
      if (*entry.eval_total < result.best_eval) {
        result.best_eval = *entry.eval_total;
        result.best_step = step;
        result.model.params = model.params;
      }
    }
    result.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return result;
}

// Worker count for embedding extraction: HIPPO_THREADS when set to a
// positive integer, otherwise the hardware concurrency.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("HIPPO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return std::size_t(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Fused node features [z_seq ; z_ann] (each unit-normalized), one row per
// record in input order. Rows are independent, so the result does not depend
// on the thread count.
template <typename Real>
BasicTensor<Real> extract_features(const PretrainModel<Real>& m, const std::vector<ProteinRecord>& records,
                                   std::size_t threads = worker_threads()) {
  if (records.empty()) throw ValidationError("extract_features: no proteins");
  const std::size_t n = records.size(), w = m.align.proj_dim;
  BasicTensor<Real> out({n, 2 * w});
  std::vector<std::string> errors(n);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      try {
        PretrainBatch one = make_pretrain_batch(records, {i}, nullptr);
        ad::Tape<Real> t;
        const auto bound = bind_params(t, m.params, false);
        const auto [zs, za] = project_batch(t, m, bound, one);
        for (std::size_t k = 0; k < w; ++k) {
          out(i, k) = t.value(zs)[k];
          out(i, w + k) = t.value(za)[k];
        }
      } catch (const std::exception& e) {
        errors[i] = records[i].id + ": " + e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(work, k, workers);
  work(0, workers);
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (!e.empty()) throw ValidationError("extract_features: " + e);
  return out;
}

}  // namespace hippo
