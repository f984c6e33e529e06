#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hippo/dataio/records.hpp"

namespace hippo {

using FastaEntry = std::pair<std::string, std::string>;

// Parses FASTA text. Ids are the first whitespace-delimited header token;
// sequence lines are concatenated; order is preserved.
inline std::vector<FastaEntry> parse_fasta_text(std::string_view text) {
  std::vector<FastaEntry> out;
  std::set<std::string> seen;
  std::size_t header_line = 0;
  const auto all = io::lines(text);
  auto close_entry = [&]() {
    if (!out.empty() && out.back().second.empty())
      throw ParseError("empty sequence for '" + out.back().first + "'", header_line);
  };
  for (std::size_t ln = 0; ln < all.size(); ++ln) {
    const std::string line = io::trim(all[ln]);
    if (line.empty()) continue;
    if (line[0] == '>') {
      close_entry();
      std::string id = io::trim(line.substr(1));
      id = id.substr(0, id.find_first_of(" \t"));
      if (id.empty()) throw ParseError("FASTA header without an id", ln + 1);
      if (!seen.insert(id).second) throw ParseError("duplicate FASTA id '" + id + "'", ln + 1);
      header_line = ln + 1;
      out.emplace_back(std::move(id), std::string());
      continue;
    }
    if (out.empty()) throw ParseError("sequence data before the first '>' header", ln + 1);
    for (char c : line) {
      if (!is_residue(c)) throw ParseError(std::string("invalid residue '") + c + "' in '" + out.back().first + "'", ln + 1);
      out.back().second.push_back(c);
    }
  }
  close_entry();
  return out;
}

inline std::vector<FastaEntry> parse_fasta(const std::string& path) { return parse_fasta_text(io::read_file(path)); }

// Canonical form: one header line and one sequence line per entry.
inline std::string emit_fasta(const std::vector<FastaEntry>& entries) {
  std::string out;
  for (const auto& [id, seq] : entries) out += '>' + id + '\n' + seq + '\n';
  return out;
}

}  // namespace hippo
