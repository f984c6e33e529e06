#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "hippo/dataio/records.hpp"
#include "hippo/numcore/rng.hpp"

namespace hippo {

enum class SplitMethod { kRandom, kBfs, kDfs };
enum class Difficulty { kEasy, kHard };

inline const char* to_string(SplitMethod m) {
  switch (m) {
    case SplitMethod::kRandom:
      return "random";
    case SplitMethod::kBfs:
      return "bfs";
    case SplitMethod::kDfs:
      return "dfs";
  }
  return "?";
}

inline SplitMethod parse_split_method(const std::string& s) {
  if (s == "random") return SplitMethod::kRandom;
  if (s == "bfs") return SplitMethod::kBfs;
  if (s == "dfs") return SplitMethod::kDfs;
  throw ParameterError("unknown split method '" + s + "' (expected random, bfs or dfs)");
}

inline const char* to_string(Difficulty d) { return d == Difficulty::kEasy ? "easy" : "hard"; }

// Edge indices are positions in the edge list the split was made from.
struct SplitSpec {
  SplitMethod method = SplitMethod::kRandom;
  double test_fraction = 0.0;
  double val_fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train, val, test;
  std::map<std::size_t, Difficulty> difficulty;  // keyed by test edge

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

namespace detail {

inline std::size_t quota(double fraction, std::size_t total, const char* what) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ParameterError(std::string("split: ") + what + " must lie in [0, 1)");
  const auto n = std::size_t(std::llround(fraction * double(total)));
  if (fraction > 0.0 && n == 0)
    throw ValidationError(std::string("split: too few edges (") + std::to_string(total) + ") for " + what + " " +
                          std::to_string(fraction));
  return n;
}

// Carves validation edges out of `rest` by a seeded shuffle; the remainder
// is training. All three lists end up ascending.
inline void carve_validation(SplitSpec& s, std::vector<std::size_t> rest, Rng rng) {
  const std::size_t nv = quota(s.val_fraction, rest.size(), "val_fraction");
  rng.shuffle(rest);
  s.val.assign(rest.begin(), rest.begin() + std::ptrdiff_t(nv));
  s.train.assign(rest.begin() + std::ptrdiff_t(nv), rest.end());
  if (s.train.empty()) throw ValidationError("split: no training edges left");
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
}

}  // namespace detail

// Endpoint seen in any train or validation edge => easy, else hard.
inline std::map<std::size_t, Difficulty> stratify_difficulty(const SplitSpec& split,
                                                             const std::vector<EdgeRecord>& edges) {
  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val})
    for (std::size_t e : *part) {
      seen.insert(edges.at(e).a);
      seen.insert(edges.at(e).b);
    }
  std::map<std::size_t, Difficulty> out;
  for (std::size_t e : split.test) {
    const auto& r = edges.at(e);
    out[e] = seen.count(r.a) || seen.count(r.b) ? Difficulty::kEasy : Difficulty::kHard;
  }
  return out;
}

inline SplitSpec split_random(const std::vector<EdgeRecord>& edges, double test_fraction, double val_fraction,
                              const Rng& rng) {
  if (edges.empty()) throw ValidationError("split: empty edge list");
  SplitSpec s;
  s.method = SplitMethod::kRandom;
  s.test_fraction = test_fraction;
  s.val_fraction = val_fraction;
  s.seed = rng.seed();
  const std::size_t nt = detail::quota(test_fraction, edges.size(), "test_fraction");
  Rng order_rng = rng.split(hash_tag("order"));
  const auto perm = order_rng.permutation(edges.size());
  s.test.assign(perm.begin(), perm.begin() + std::ptrdiff_t(nt));
  detail::carve_validation(s, std::vector<std::size_t>(perm.begin() + std::ptrdiff_t(nt), perm.end()),
                           rng.split(hash_tag("val")));
  s.difficulty = stratify_difficulty(s, edges);
  return s;
}

// Graph traversal split: from a seeded random root, nodes are visited in BFS
// (or DFS preorder) order with neighbors expanded in ascending index. Each
// newly visited node closes the edges to already visited nodes; those become
// test edges until the quota is met exactly. An exhausted component restarts
// from a random unvisited node.
inline SplitSpec split_traversal(const std::vector<EdgeRecord>& edges, SplitMethod method, double test_fraction,
                                 double val_fraction, const Rng& rng) {
  if (method == SplitMethod::kRandom) return split_random(edges, test_fraction, val_fraction, rng);
  if (edges.empty()) throw ValidationError("split: empty edge list");
  SplitSpec s;
  s.method = method;
  s.test_fraction = test_fraction;
  s.val_fraction = val_fraction;
  s.seed = rng.seed();
  const std::size_t nt = detail::quota(test_fraction, edges.size(), "test_fraction");

  std::map<std::string, std::size_t> index;
  for (const auto& e : edges) index.emplace(e.a, 0), index.emplace(e.b, 0);
  std::size_t next = 0;
  for (auto& [id, i] : index) i = next++;
  const std::size_t n = index.size();
  // neighbor -> incident edge indices, per node, both ascending
  std::vector<std::map<std::size_t, std::vector<std::size_t>>> adj(n);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const std::size_t a = index[edges[k].a], b = index[edges[k].b];
    if (a == b) throw ValidationError("split: self-loop on '" + edges[k].a + "'");
    adj[a][b].push_back(k);
    adj[b][a].push_back(k);
  }

  std::vector<std::uint8_t> visited(n, 0);
  Rng root_rng = rng.split(hash_tag("roots"));
  auto visit = [&](std::size_t v) {
    visited[v] = 1;
    for (const auto& [u, ks] : adj[v]) {
      if (!visited[u] || u == v) continue;
      for (std::size_t k : ks)
        if (s.test.size() < nt) s.test.push_back(k);
    }
  };
  while (s.test.size() < nt) {
    std::vector<std::size_t> open;
    for (std::size_t v = 0; v < n; ++v)
      if (!visited[v]) open.push_back(v);
    if (open.empty()) throw ValidationError("split: traversal cannot reach the test quota");
    const std::size_t root = open[root_rng.uniform_int(open.size())];
    if (method == SplitMethod::kBfs) {
      std::vector<std::size_t> queue{root};
      std::vector<std::uint8_t> queued(n, 0);
      queued[root] = 1;
      for (std::size_t head = 0; head < queue.size() && s.test.size() < nt; ++head) {
        const std::size_t v = queue[head];
        visit(v);
        for (const auto& [u, ks] : adj[v])
          if (!visited[u] && !queued[u]) queued[u] = 1, queue.push_back(u);
      }
    } else {
      std::vector<std::pair<std::size_t, std::map<std::size_t, std::vector<std::size_t>>::const_iterator>> stack;
      visit(root);
      stack.emplace_back(root, adj[root].cbegin());
      while (!stack.empty() && s.test.size() < nt) {
        auto& [v, it] = stack.back();
        while (it != adj[v].cend() && visited[it->first]) ++it;
        if (it == adj[v].cend()) {
          stack.pop_back();
          continue;
        }
        const std::size_t u = it->first;
        visit(u);
        stack.emplace_back(u, adj[u].cbegin());
      }
    }
  }

  std::vector<std::uint8_t> is_test(edges.size(), 0);
  for (std::size_t k : s.test) is_test[k] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t k = 0; k < edges.size(); ++k)
    if (!is_test[k]) rest.push_back(k);
  detail::carve_validation(s, std::move(rest), rng.split(hash_tag("val")));
  s.difficulty = stratify_difficulty(s, edges);
  return s;
}

inline SplitSpec split_bfs(const std::vector<EdgeRecord>& edges, double test_fraction, double val_fraction,
                           const Rng& rng) {
  return split_traversal(edges, SplitMethod::kBfs, test_fraction, val_fraction, rng);
}

inline SplitSpec split_dfs(const std::vector<EdgeRecord>& edges, double test_fraction, double val_fraction,
                           const Rng& rng) {
  return split_traversal(edges, SplitMethod::kDfs, test_fraction, val_fraction, rng);
}

inline SplitSpec make_split(const std::vector<EdgeRecord>& edges, SplitMethod method, double test_fraction,
                            double val_fraction, std::uint64_t seed) {
  return split_traversal(edges, method, test_fraction, val_fraction, Rng(seed).split(hash_tag("split")));
}

inline double hard_fraction(const SplitSpec& s) {
  if (s.difficulty.empty()) return 0.0;
  std::size_t hard = 0;
  for (const auto& [e, d] : s.difficulty) hard += d == Difficulty::kHard;
  return double(hard) / double(s.difficulty.size());
}

// JSON form. Test edges carry their endpoints and difficulty so the file
// reads on its own.
inline nlohmann::json split_to_json(const SplitSpec& s, const std::vector<EdgeRecord>& edges) {
  nlohmann::json j;
  j["method"] = to_string(s.method);
  j["test_fraction"] = s.test_fraction;
  j["val_fraction"] = s.val_fraction;
  j["seed"] = s.seed;
  j["n_edges"] = edges.size();
  j["train"] = s.train;
  j["val"] = s.val;
  auto test = nlohmann::json::array();
  for (std::size_t e : s.test)
    test.push_back({{"edge", e},
                    {"protein_a", edges.at(e).a},
                    {"protein_b", edges.at(e).b},
                    {"difficulty", to_string(s.difficulty.at(e))}});
  j["test"] = std::move(test);
  j["hard_fraction"] = hard_fraction(s);
  return j;
}

inline SplitSpec split_from_json(const nlohmann::json& j, const std::vector<EdgeRecord>& edges) {
  SplitSpec s;
  try {
    s.method = parse_split_method(j.at("method").get<std::string>());
    s.test_fraction = j.at("test_fraction").get<double>();
    s.val_fraction = j.at("val_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.at("n_edges").get<std::size_t>() != edges.size())
      throw ValidationError("split file was made for " + std::to_string(j.at("n_edges").get<std::size_t>()) +
                            " edges, edge table has " + std::to_string(edges.size()));
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    for (const auto& t : j.at("test")) s.test.push_back(t.at("edge").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("split file: ") + e.what());
  }
  std::vector<std::uint8_t> used(edges.size(), 0);
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (std::size_t e : *part) {
      if (e >= edges.size() || used[e]) throw ValidationError("split file: edge lists overlap or are out of range");
      used[e] = 1;
    }
  if (std::count(used.begin(), used.end(), 0)) throw ValidationError("split file: edge lists do not cover every edge");
  s.difficulty = stratify_difficulty(s, edges);
  return s;
}

}  // namespace hippo
