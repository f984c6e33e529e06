#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/numcore/error.hpp"

namespace hippo {

// 20 standard amino acids plus X for unknown residues.
inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr char kUnknownResidue = 'X';

inline bool is_residue(char c) { return c == kUnknownResidue || kAminoAcids.find(c) != std::string_view::npos; }

struct ProteinRecord {
  std::string id;
  std::string sequence;
  std::vector<std::uint8_t> keywords;  // one bit per keyword vocabulary entry
  std::optional<std::string> family_id;
  std::optional<std::string> clan_id;
};

// Undirected interaction record, stored once per unordered pair (a < b).
struct EdgeRecord {
  std::string a;
  std::string b;
  std::vector<std::uint8_t> labels;  // one bit per interaction type

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
  friend auto operator<=>(const EdgeRecord&, const EdgeRecord&) = default;
};

namespace io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

// Splits text into lines, dropping a trailing '\r' on each.
inline std::vector<std::string> lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = s.find(sep, start);
    out.emplace_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline bool blank_or_comment(std::string_view line) {
  const std::string t = trim(line);
  return t.empty() || t[0] == '#';
}

}  // namespace io
}  // namespace hippo
