#pragma once

#include <cstdio>
#include <set>
#include <string>

#include "json.hpp"

#include "hippo/dataio/records.hpp"
#include "hippo/encoders/pretrain.hpp"
#include "hippo/ppinet/train.hpp"

namespace hippo {

enum class Precision { kDouble, kFloat };

struct TrainingConfig {
  std::size_t pretrain_steps = 200;
  std::size_t pretrain_batch = 32;
  double pretrain_lr = 1e-3;
  std::size_t eval_every = 10;
  std::size_t eval_batch = 64;
  std::size_t ppi_epochs = 100;
  std::size_t ppi_batch_edges = 0;
  double ppi_lr = 1e-3;
  std::uint64_t seed = 1;
  Precision precision = Precision::kDouble;
  bool freeze_annotation_encoder = true;
};

struct PathsConfig {
  std::string fasta, annotations, hierarchy, edges, split, pretrained, model, out;
};

struct RunConfig {
  SequenceEncoderConfig encoder;
  AlignmentConfig alignment;
  GinConfig gin;
  PairHeadConfig pair_head;
  TrainingConfig training;
  PathsConfig paths;

  void validate() const {
    encoder.validate();
    alignment.validate();
    gin.validate();
    if (training.pretrain_batch < 2) throw ParameterError("training.pretrain_batch must be at least 2");
    if (!(training.pretrain_lr > 0.0) || !(training.ppi_lr > 0.0)) throw ParameterError("learning rates must be positive");
    if (training.eval_every == 0) throw ParameterError("training.eval_every must be positive");
  }

  PretrainConfig pretrain_config() const {
    PretrainConfig p;
    p.steps = training.pretrain_steps;
    p.batch_size = training.pretrain_batch;
    p.lr = training.pretrain_lr;
    p.seed = training.seed;
    p.eval_every = training.eval_every;
    p.eval_batch = training.eval_batch;
    return p;
  }

  PpiTrainConfig ppi_config() const {
    PpiTrainConfig p;
    p.epochs = training.ppi_epochs;
    p.batch_edges = training.ppi_batch_edges;
    p.lr = training.ppi_lr;
    p.seed = training.seed;
    return p;
  }
};

namespace detail {

// Reads the keys of one section, rejecting any key not consumed.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) throw ValidationError("config: section '" + name + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    known_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      target = obj_->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("config: '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items())
      if (!known_.count(key)) throw ValidationError("config: unknown key '" + name_ + "." + key + "'");
  }

 private:
  std::string name_;
  const nlohmann::json* obj_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
  static const std::set<std::string> kSections = {"encoder", "alignment", "gin", "pair_head", "training", "paths"};
  for (const auto& [key, value] : j.items())
    if (!kSections.count(key)) throw ValidationError("config: unknown section '" + key + "'");
  RunConfig c;
  {
    detail::SectionReader r(j, "encoder");
    auto& e = c.encoder;
    r.read("d_model", e.d_model);
    r.read("n_blocks", e.n_blocks);
    r.read("conv_narrow", e.conv_narrow);
    r.read("conv_wide", e.conv_wide);
    r.read("n_heads", e.n_heads);
    r.read("ff_width", e.ff_width);
    r.read("max_len", e.max_len);
    r.finish();
  }
  {
    detail::SectionReader r(j, "alignment");
    auto& a = c.alignment;
    r.read("proj_dim", a.proj_dim);
    r.read("match_hidden", a.match_hidden);
    r.read("tau", a.tau);
    r.read("alpha", a.alpha);
    r.read("gamma", a.gamma);
    r.read("w_hc", a.w_hc);
    r.read("w_sac", a.w_sac);
    r.read("w_sam", a.w_sam);
    r.read("level_weights", a.level_weights);
    r.finish();
  }
  {
    detail::SectionReader r(j, "gin");
    auto& g = c.gin;
    r.read("n_blocks", g.n_blocks);
    r.read("hidden", g.hidden);
    r.read("eps", g.eps);
    r.read("batch_norm", g.batch_norm);
    r.read("bn_momentum", g.bn_momentum);
    r.read("bn_eps", g.bn_eps);
    r.finish();
  }
  {
    detail::SectionReader r(j, "pair_head");
    std::string combine = to_string(c.pair_head.combine);
    r.read("combine", combine);
    c.pair_head.combine = parse_pair_combine(combine);
    r.finish();
  }
  {
    detail::SectionReader r(j, "training");
    auto& t = c.training;
    r.read("pretrain_steps", t.pretrain_steps);
    r.read("pretrain_batch", t.pretrain_batch);
    r.read("pretrain_lr", t.pretrain_lr);
    r.read("eval_every", t.eval_every);
    r.read("eval_batch", t.eval_batch);
    r.read("ppi_epochs", t.ppi_epochs);
    r.read("ppi_batch_edges", t.ppi_batch_edges);
    r.read("ppi_lr", t.ppi_lr);
    r.read("seed", t.seed);
    r.read("freeze_annotation_encoder", t.freeze_annotation_encoder);
    std::string precision = t.precision == Precision::kDouble ? "double" : "float";
    r.read("precision", precision);
    if (precision != "double" && precision != "float")
      throw ValidationError("config: training.precision must be 'double' or 'float'");
    t.precision = precision == "double" ? Precision::kDouble : Precision::kFloat;
    r.finish();
  }
  {
    detail::SectionReader r(j, "paths");
    auto& p = c.paths;
    r.read("fasta", p.fasta);
    r.read("annotations", p.annotations);
    r.read("hierarchy", p.hierarchy);
    r.read("edges", p.edges);
    r.read("split", p.split);
    r.read("pretrained", p.pretrained);
    r.read("model", p.model);
    r.read("out", p.out);
    r.finish();
  }
  c.validate();
  return c;
}

// Every field, defaults included.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  const auto& e = c.encoder;
  j["encoder"] = {{"d_model", e.d_model}, {"n_blocks", e.n_blocks}, {"conv_narrow", e.conv_narrow},
                  {"conv_wide", e.conv_wide}, {"n_heads", e.n_heads}, {"ff_width", e.ff_width},
                  {"max_len", e.max_len}};
  const auto& a = c.alignment;
  j["alignment"] = {{"proj_dim", a.proj_dim}, {"match_hidden", a.match_hidden}, {"tau", a.tau},
                    {"alpha", a.alpha}, {"gamma", a.gamma}, {"w_hc", a.w_hc},
                    {"w_sac", a.w_sac}, {"w_sam", a.w_sam}, {"level_weights", a.level_weights}};
  const auto& g = c.gin;
  j["gin"] = {{"n_blocks", g.n_blocks}, {"hidden", g.hidden}, {"eps", g.eps},
              {"batch_norm", g.batch_norm}, {"bn_momentum", g.bn_momentum}, {"bn_eps", g.bn_eps}};
  j["pair_head"] = {{"combine", to_string(c.pair_head.combine)}};
  const auto& t = c.training;
  j["training"] = {{"pretrain_steps", t.pretrain_steps},
                   {"pretrain_batch", t.pretrain_batch},
                   {"pretrain_lr", t.pretrain_lr},
                   {"eval_every", t.eval_every},
                   {"eval_batch", t.eval_batch},
                   {"ppi_epochs", t.ppi_epochs},
                   {"ppi_batch_edges", t.ppi_batch_edges},
                   {"ppi_lr", t.ppi_lr},
                   {"seed", t.seed},
                   {"precision", t.precision == Precision::kDouble ? "double" : "float"},
                   {"freeze_annotation_encoder", t.freeze_annotation_encoder}};
  const auto& p = c.paths;
  j["paths"] = {{"fasta", p.fasta},   {"annotations", p.annotations}, {"hierarchy", p.hierarchy},
                {"edges", p.edges},   {"split", p.split},             {"pretrained", p.pretrained},
                {"model", p.model},   {"out", p.out}};
  return j;
}

inline RunConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

// Digest of the model-defining sections (encoder, alignment, gin, pair_head)
// in canonical JSON form: sorted keys, no whitespace. Training schedule and
// paths do not change what a checkpoint holds and are left out.
inline std::string config_hash(const RunConfig& c) {
  const nlohmann::json full = config_to_json(c);
  nlohmann::json model;
  for (const char* key : {"encoder", "alignment", "gin", "pair_head"}) model[key] = full.at(key);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_tag(model.dump())));
  return buf;
}

}  // namespace hippo
