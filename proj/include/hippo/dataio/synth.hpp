#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hippo/dataio/fasta.hpp"
#include "hippo/dataio/tables.hpp"
#include "hippo/numcore/rng.hpp"

namespace hippo {

// One row of the family-pair interaction rule (unordered pair).
struct CompatibilityEntry {
  std::size_t family_a = 0;
  std::size_t family_b = 0;
  double density = 0.0;               // probability that a protein pair interacts
  std::vector<std::uint8_t> labels;  // interaction types carried by such pairs
};

struct SynthSpec {
  std::size_t n_clans = 5;
  std::size_t n_families = 20;
  std::size_t n_proteins = 300;
  std::size_t motif_length = 8;
  std::size_t min_length = 30;
  std::size_t max_length = 40;
  std::size_t n_types = 5;
  std::size_t n_noise_keywords = 8;
  // Residues of the clan motif rewritten per family.
  std::size_t family_mutations = 4;
  double keyword_noise = 0.1;
  double label_noise = 0.0;
  // Used only when interaction_rule is empty and a rule is drawn from seed.
  double compat_prob = 0.3;
  double compat_density = 0.06;
  double label_prob = 0.4;
  std::vector<CompatibilityEntry> interaction_rule;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::vector<ProteinRecord> proteins;
  EdgeTable edges;
  std::vector<std::string> keyword_vocab;
  HierarchyTree tree;
  std::vector<HierarchyRow> hierarchy_rows;
  std::map<std::string, std::vector<std::size_t>> sites;  // planted motif positions
  std::vector<CompatibilityEntry> rule;                   // resolved interaction rule
  std::vector<std::size_t> family_of;                     // per protein index

  std::vector<FastaEntry> fasta() const {
    std::vector<FastaEntry> out;
    for (const auto& p : proteins) out.emplace_back(p.id, p.sequence);
    return out;
  }
  AnnotationTable annotations() const {
    AnnotationTable t;
    t.vocab = keyword_vocab;
    for (const auto& p : proteins) t.vectors.emplace(p.id, p.keywords);
    return t;
  }
};

inline std::vector<std::string> default_type_names(std::size_t n) {
  static const std::vector<std::string> kStringTypes = {"binding",    "reaction", "catalysis", "activation",
                                                        "inhibition", "ptmod",    "expression"};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) {
    if (k < kStringTypes.size()) {
      out.push_back(kStringTypes[k]);
    } else {
      out.push_back("type" + std::to_string(k));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

inline std::string padded(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

inline std::size_t pair_slot(std::size_t a, std::size_t b, std::size_t n) {
  if (a > b) std::swap(a, b);
  return a * n + b;
}

// Streams of the corpus generator; each consumer draws from its own.
enum SynthStream : std::uint64_t {
  kRuleStream = 1,
  kMotifStream,
  kSequenceStream,
  kKeywordStream,
  kEdgeStream,
  kLabelNoiseStream,
};

}  // namespace detail

inline void validate(const SynthSpec& s) {
  if (s.n_clans == 0 || s.n_families == 0 || s.n_proteins == 0) throw ParameterError("synth: counts must be positive");
  if (s.n_families < s.n_clans) throw ParameterError("synth: need at least as many families as clans");
  if (s.motif_length == 0 || s.motif_length > s.min_length) throw ParameterError("synth: motif must fit the shortest sequence");
  if (s.min_length > s.max_length) throw ParameterError("synth: min_length exceeds max_length");
  if (s.n_types == 0) throw ParameterError("synth: need at least one interaction type");
  if (!(s.label_noise >= 0.0 && s.label_noise < 1.0)) throw ParameterError("synth: label_noise must lie in [0, 1)");
  if (!(s.keyword_noise >= 0.0 && s.keyword_noise < 1.0)) throw ParameterError("synth: keyword_noise must lie in [0, 1)");
  for (const auto& e : s.interaction_rule) {
    if (e.family_a >= s.n_families || e.family_b >= s.n_families)
      throw ValidationError("interaction rule references unknown family " +
                            std::to_string(std::max(e.family_a, e.family_b)));
    if (e.labels.size() != s.n_types) throw ValidationError("interaction rule label width must equal n_types");
    if (!(e.density >= 0.0 && e.density <= 1.0)) throw ValidationError("interaction rule density must lie in [0, 1]");
  }
}

// Seeded family-pair rule: each unordered family pair is compatible with
// probability compat_prob and then carries a random non-empty label set.
inline std::vector<CompatibilityEntry> default_interaction_rule(const SynthSpec& s) {
  Rng rng = Rng(s.seed).split(detail::kRuleStream);
  std::vector<CompatibilityEntry> rule;
  for (std::size_t a = 0; a < s.n_families; ++a)
    for (std::size_t b = a; b < s.n_families; ++b) {
      if (!rng.bernoulli(s.compat_prob)) continue;
      CompatibilityEntry e{a, b, s.compat_density, std::vector<std::uint8_t>(s.n_types, 0)};
      bool any = false;
      for (auto& bit : e.labels) any |= (bit = rng.bernoulli(s.label_prob));
      if (!any) e.labels[rng.uniform_int(s.n_types)] = 1;
      rule.push_back(std::move(e));
    }
  return rule;
}

// Expected fraction of protein pairs that interact under the corpus' rule,
// by enumeration of every pair.
inline double expected_edge_density(const SynthCorpus& c) {
  const std::size_t nf = c.family_of.empty() ? 0 : *std::max_element(c.family_of.begin(), c.family_of.end()) + 1;
  std::vector<double> density(nf * nf, 0.0);
  for (const auto& e : c.rule) density[detail::pair_slot(e.family_a, e.family_b, nf)] = e.density;
  const std::size_t n = c.family_of.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) acc += density[detail::pair_slot(c.family_of[i], c.family_of[j], nf)];
  return n < 2 ? 0.0 : acc / (double(n) * double(n - 1) / 2.0);
}

// Hierarchical synthetic corpus. Protein p belongs to family p mod F and
// family f to clan f mod C. Each clan draws a motif; each family rewrites
// `family_mutations` of its residues and plants the result once in every
// member's otherwise uniform sequence. Keywords flag the clan (dropped with
// probability keyword_noise) plus noise keywords. Pair (i, j) interacts with
// the rule's density for its families and carries the rule's labels, each
// flipped with probability label_noise.
inline SynthCorpus synth_generate(const SynthSpec& spec) {
  validate(spec);
  SynthCorpus c;
  c.rule = spec.interaction_rule.empty() ? default_interaction_rule(spec) : spec.interaction_rule;
  const Rng base(spec.seed);

  Rng motif_rng = base.split(detail::kMotifStream);
  auto random_residue = [](Rng& r) { return kAminoAcids[std::size_t(r.uniform_int(kAminoAcids.size()))]; };
  std::vector<std::string> clan_motif(spec.n_clans), family_motif(spec.n_families);
  for (auto& m : clan_motif)
    for (std::size_t k = 0; k < spec.motif_length; ++k) m.push_back(random_residue(motif_rng));
  std::set<std::string> used;
  for (std::size_t f = 0; f < spec.n_families; ++f) {
    // Redraw on collision so every family motif is distinct.
    std::size_t attempts = 0;
    do {
      if (++attempts > 1000) throw ParameterError("synth: cannot draw distinct family motifs; raise family_mutations");
      family_motif[f] = clan_motif[f % spec.n_clans];
      auto slots = motif_rng.permutation(spec.motif_length);
      for (std::size_t k = 0; k < std::min(spec.family_mutations, spec.motif_length); ++k)
        family_motif[f][slots[k]] = random_residue(motif_rng);
    } while (!used.insert(family_motif[f]).second);
  }

  std::vector<std::string> clan_names, family_names;
  for (std::size_t i = 0; i < spec.n_clans; ++i) clan_names.push_back(detail::padded('C', i, 3));
  for (std::size_t i = 0; i < spec.n_families; ++i) family_names.push_back(detail::padded('F', i, 3));

  for (std::size_t i = 0; i < spec.n_clans; ++i) c.keyword_vocab.push_back("clan_" + clan_names[i]);
  for (std::size_t i = 0; i < spec.n_noise_keywords; ++i) c.keyword_vocab.push_back(detail::padded('k', i, 2));
  std::sort(c.keyword_vocab.begin(), c.keyword_vocab.end());
  std::map<std::string, std::size_t> kw_index;
  for (std::size_t i = 0; i < c.keyword_vocab.size(); ++i) kw_index.emplace(c.keyword_vocab[i], i);

  Rng seq_rng = base.split(detail::kSequenceStream);
  Rng kw_rng = base.split(detail::kKeywordStream);
  for (std::size_t p = 0; p < spec.n_proteins; ++p) {
    const std::size_t f = p % spec.n_families, cl = f % spec.n_clans;
    ProteinRecord rec;
    rec.id = detail::padded('P', p, 4);
    const std::size_t len = spec.min_length + std::size_t(seq_rng.uniform_int(spec.max_length - spec.min_length + 1));
    for (std::size_t k = 0; k < len; ++k) rec.sequence.push_back(random_residue(seq_rng));
    const std::size_t at = std::size_t(seq_rng.uniform_int(len - spec.motif_length + 1));
    rec.sequence.replace(at, spec.motif_length, family_motif[f]);
    auto& site = c.sites[rec.id];
    for (std::size_t k = 0; k < spec.motif_length; ++k) site.push_back(at + k);

    rec.keywords.assign(c.keyword_vocab.size(), 0);
    if (!kw_rng.bernoulli(spec.keyword_noise)) rec.keywords[kw_index.at("clan_" + clan_names[cl])] = 1;
    for (std::size_t k = 0; k < spec.n_noise_keywords; ++k)
      if (kw_rng.bernoulli(spec.keyword_noise)) rec.keywords[kw_index.at(detail::padded('k', k, 2))] = 1;
    rec.family_id = family_names[f];
    rec.clan_id = clan_names[cl];
    c.tree.add_leaf(rec.id, {clan_names[cl], family_names[f]});
    c.hierarchy_rows.push_back(HierarchyRow{rec.id, family_names[f], clan_names[cl]});
    c.family_of.push_back(f);
    c.proteins.push_back(std::move(rec));
  }

  const std::size_t nf = spec.n_families;
  std::vector<const CompatibilityEntry*> rule_at(nf * nf, nullptr);
  for (const auto& e : c.rule) rule_at[detail::pair_slot(e.family_a, e.family_b, nf)] = &e;
  c.edges.types = default_type_names(spec.n_types);
  const Rng edge_rng = base.split(detail::kEdgeStream);
  const Rng noise_rng = base.split(detail::kLabelNoiseStream);
  const std::size_t n = spec.n_proteins;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const CompatibilityEntry* e = rule_at[detail::pair_slot(c.family_of[i], c.family_of[j], nf)];
      if (!e) continue;
      const std::uint64_t slot = std::uint64_t(i) * n + j;
      if (double(edge_rng.at(slot) >> 11) * 0x1.0p-53 >= e->density) continue;
      std::vector<std::uint8_t> labels = e->labels;
      if (spec.label_noise > 0.0) {
        Rng flips = noise_rng.split(slot);
        for (auto& bit : labels)
          if (flips.bernoulli(spec.label_noise)) bit = !bit;
        if (std::none_of(labels.begin(), labels.end(), [](auto b) { return b != 0; })) labels = e->labels;
      }
      c.edges.edges.push_back(EdgeRecord{c.proteins[i].id, c.proteins[j].id, std::move(labels)});
    }
  return c;
}

}  // namespace hippo
