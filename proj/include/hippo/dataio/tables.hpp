#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hippo/dataio/records.hpp"
#include "hippo/hierarchy/tree.hpp"

namespace hippo {

// ---- interaction edges -----------------------------------------------------

struct EdgeTable {
  std::vector<EdgeRecord> edges;  // sorted by (a, b), a < b
  std::vector<std::string> types;
};

namespace detail {

inline bool is_header(const std::vector<std::string>& cols, std::string_view first) {
  return !cols.empty() && cols[0] == first;
}

}  // namespace detail

// TSV rows `protein_a  protein_b  type`, one row per (pair, type). Rows of the
// same unordered pair merge into one record carrying the union of labels.
// Without `type_vocab` the vocabulary is the sorted set of observed types.
inline EdgeTable parse_edges_text(std::string_view text,
                                  const std::optional<std::vector<std::string>>& type_vocab = std::nullopt) {
  struct Row {
    std::string a, b, type;
    std::size_t line;
  };
  std::vector<Row> rows;
  const auto all = io::lines(text);
  for (std::size_t ln = 0; ln < all.size(); ++ln) {
    if (io::blank_or_comment(all[ln])) continue;
    auto cols = io::split(all[ln], '\t');
    for (auto& c : cols) c = io::trim(c);
    if (rows.empty() && detail::is_header(cols, "protein_a")) continue;
    if (cols.size() != 3) throw ParseError("edge rows need 3 tab-separated columns", ln + 1);
    if (cols[0].empty() || cols[1].empty() || cols[2].empty()) throw ParseError("empty edge column", ln + 1);
    if (cols[0] == cols[1]) throw ParseError("self-loop on '" + cols[0] + "'", ln + 1);
    rows.push_back(Row{cols[0], cols[1], cols[2], ln + 1});
  }

  EdgeTable table;
  if (type_vocab) {
    table.types = *type_vocab;
  } else {
    std::set<std::string> seen;
    for (const auto& r : rows) seen.insert(r.type);
    table.types.assign(seen.begin(), seen.end());
  }
  std::map<std::string, std::size_t> type_index;
  for (std::size_t i = 0; i < table.types.size(); ++i) type_index.emplace(table.types[i], i);

  std::map<std::pair<std::string, std::string>, std::vector<std::uint8_t>> merged;
  for (const auto& r : rows) {
    auto it = type_index.find(r.type);
    if (it == type_index.end()) throw ParseError("unknown interaction type '" + r.type + "'", r.line);
    auto key = r.a < r.b ? std::make_pair(r.a, r.b) : std::make_pair(r.b, r.a);
    auto& labels = merged[key];
    labels.resize(table.types.size(), 0);
    labels[it->second] = 1;
  }
  for (auto& [key, labels] : merged) table.edges.push_back(EdgeRecord{key.first, key.second, std::move(labels)});
  return table;
}

inline EdgeTable parse_edges(const std::string& path,
                             const std::optional<std::vector<std::string>>& type_vocab = std::nullopt) {
  return parse_edges_text(io::read_file(path), type_vocab);
}

inline std::string emit_edges(const EdgeTable& table) {
  std::string out = "protein_a\tprotein_b\ttype\n";
  for (const auto& e : table.edges)
    for (std::size_t k = 0; k < table.types.size(); ++k)
      if (e.labels.at(k)) out += e.a + '\t' + e.b + '\t' + table.types[k] + '\n';
  return out;
}

// ---- keyword annotations ---------------------------------------------------

struct AnnotationTable {
  std::vector<std::string> vocab;
  std::map<std::string, std::vector<std::uint8_t>> vectors;
  std::vector<std::string> warnings;

  // All-zero vector for proteins without annotations.
  std::vector<std::uint8_t> lookup(const std::string& id) const {
    auto it = vectors.find(id);
    return it == vectors.end() ? std::vector<std::uint8_t>(vocab.size(), 0) : it->second;
  }
};

// TSV rows `id  kw1;kw2;...`. The vocabulary is the sorted set of tokens
// unless one is supplied.
inline AnnotationTable parse_annotations_text(std::string_view text,
                                              const std::optional<std::vector<std::string>>& vocab = std::nullopt) {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  const auto all = io::lines(text);
  std::set<std::string> ids;
  for (std::size_t ln = 0; ln < all.size(); ++ln) {
    if (io::blank_or_comment(all[ln])) continue;
    auto cols = io::split(all[ln], '\t');
    const std::string id = io::trim(cols[0]);
    if (rows.empty() && id == "id" && cols.size() == 2 && io::trim(cols[1]) == "keywords") continue;
    if (cols.size() > 2) throw ParseError("annotation rows need at most 2 tab-separated columns", ln + 1);
    if (id.empty()) throw ParseError("annotation row without an id", ln + 1);
    if (!ids.insert(id).second) throw ParseError("duplicate annotation id '" + id + "'", ln + 1);
    std::vector<std::string> tokens;
    if (cols.size() == 2)
      for (auto& tok : io::split(cols[1], ';'))
        if (auto t = io::trim(tok); !t.empty()) tokens.push_back(std::move(t));
    rows.emplace_back(id, std::move(tokens));
  }

  AnnotationTable table;
  if (vocab) {
    table.vocab = *vocab;
  } else {
    std::set<std::string> seen;
    for (const auto& r : rows) seen.insert(r.second.begin(), r.second.end());
    table.vocab.assign(seen.begin(), seen.end());
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.vocab.size(); ++i) index.emplace(table.vocab[i], i);
  for (auto& [id, tokens] : rows) {
    std::vector<std::uint8_t> v(table.vocab.size(), 0);
    if (tokens.empty()) table.warnings.push_back("protein '" + id + "' has no keywords");
    for (const auto& tok : tokens) {
      auto it = index.find(tok);
      if (it == index.end()) throw ParseError("keyword '" + tok + "' of '" + id + "' is not in the vocabulary");
      v[it->second] = 1;
    }
    table.vectors.emplace(id, std::move(v));
  }
  return table;
}

inline AnnotationTable parse_annotations(const std::string& path,
                                         const std::optional<std::vector<std::string>>& vocab = std::nullopt) {
  return parse_annotations_text(io::read_file(path), vocab);
}

inline std::string emit_annotations(const AnnotationTable& table) {
  std::string out = "id\tkeywords\n";
  for (const auto& [id, v] : table.vectors) {
    out += id + '\t';
    bool first = true;
    for (std::size_t k = 0; k < v.size(); ++k)
      if (v[k]) {
        out += (first ? "" : ";") + table.vocab[k];
        first = false;
      }
    out += '\n';
  }
  return out;
}

// ---- clan/family hierarchy -------------------------------------------------

struct HierarchyRow {
  std::string protein;
  std::string family;
  std::string clan;  // empty when the family has no clan
};

// TSV rows `protein_id  family_id  clan_id`. A family without a clan (empty,
// "-" or missing column) hangs under a singleton clan named after it.
inline HierarchyTree parse_hierarchy_text(std::string_view text, std::vector<HierarchyRow>* rows_out = nullptr) {
  HierarchyTree tree({"clan", "family"});
  const auto all = io::lines(text);
  bool first = true;
  for (std::size_t ln = 0; ln < all.size(); ++ln) {
    if (io::blank_or_comment(all[ln])) continue;
    auto cols = io::split(all[ln], '\t');
    for (auto& c : cols) c = io::trim(c);
    if (first && detail::is_header(cols, "protein_id")) {
      first = false;
      continue;
    }
    first = false;
    if (cols.size() < 2 || cols.size() > 3) throw ParseError("hierarchy rows need 2 or 3 tab-separated columns", ln + 1);
    if (cols[0].empty() || cols[1].empty()) throw ParseError("empty protein or family id", ln + 1);
    std::string clan = cols.size() == 3 && cols[2] != "-" ? cols[2] : std::string();
    try {
      tree.add_leaf(cols[0], {clan.empty() ? cols[1] : clan, cols[1]});
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), ln + 1);
    }
    if (rows_out) rows_out->push_back(HierarchyRow{cols[0], cols[1], clan});
  }
  return tree;
}

inline HierarchyTree parse_hierarchy(const std::string& path, std::vector<HierarchyRow>* rows_out = nullptr) {
  return parse_hierarchy_text(io::read_file(path), rows_out);
}

inline std::string emit_hierarchy(const std::vector<HierarchyRow>& rows) {
  std::string out = "protein_id\tfamily_id\tclan_id\n";
  for (const auto& r : rows) out += r.protein + '\t' + r.family + '\t' + (r.clan.empty() ? "-" : r.clan) + '\n';
  return out;
}

// ---- binding-site annotations ----------------------------------------------

// `protein_id  p1,p2,...` with 0-based residue positions.
inline std::map<std::string, std::vector<std::size_t>> parse_sites_text(std::string_view text) {
  std::map<std::string, std::vector<std::size_t>> out;
  const auto all = io::lines(text);
  for (std::size_t ln = 0; ln < all.size(); ++ln) {
    if (io::blank_or_comment(all[ln])) continue;
    auto cols = io::split(all[ln], '\t');
    if (out.empty() && io::trim(cols[0]) == "protein_id") continue;
    if (cols.size() != 2) throw ParseError("site rows need 2 tab-separated columns", ln + 1);
    std::vector<std::size_t> pos;
    for (const auto& tok : io::split(cols[1], ',')) {
      const std::string t = io::trim(tok);
      if (t.empty()) continue;
      try {
        std::size_t used = 0;
        pos.push_back(std::stoul(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw ParseError("invalid residue position '" + t + "'", ln + 1);
      }
    }
    out[io::trim(cols[0])] = std::move(pos);
  }
  return out;
}

inline std::map<std::string, std::vector<std::size_t>> parse_sites(const std::string& path) {
  return parse_sites_text(io::read_file(path));
}

inline std::string emit_sites(const std::map<std::string, std::vector<std::size_t>>& sites) {
  std::string out = "protein_id\tpositions\n";
  for (const auto& [id, pos] : sites) {
    out += id + '\t';
    for (std::size_t i = 0; i < pos.size(); ++i) out += (i ? "," : "") + std::to_string(pos[i]);
    out += '\n';
  }
  return out;
}

}  // namespace hippo
