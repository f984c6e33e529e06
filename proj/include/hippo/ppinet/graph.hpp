#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hippo/dataio/records.hpp"
#include "hippo/numcore/ops.hpp"

namespace hippo {

struct LabeledPair {
  std::size_t i = 0;
  std::size_t j = 0;
  std::vector<std::uint8_t> labels;
};

template <typename Real>
struct PpiGraph {
  std::vector<std::string> ids;  // ascending; row order of `features`
  std::map<std::string, std::size_t> index;
  BasicTensor<Real> features;  // [N x d]
  BasicTensor<Real> keywords;  // [N x V], empty unless attached
  ad::Csr adjacency;           // message-passing edges only
  std::vector<LabeledPair> edges;  // every edge, in input order
  std::size_t n_types = 0;

  std::size_t node(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("protein '" + id + "' is not a node of the graph");
    return it->second;
  }
  std::size_t nodes() const noexcept { return ids.size(); }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(nodes());
    for (std::size_t v = 0; v < nodes(); ++v) d[v] = adjacency.offset[v + 1] - adjacency.offset[v];
    return d;
  }
};

// Symmetric, strictly ascending neighbor lists without self-loops over the
// listed node pairs. Repeated pairs collapse to one entry.
inline ad::Csr build_adjacency(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::set<std::size_t>> nb(n);
  for (const auto& [a, b] : pairs) {
    if (a >= n || b >= n) throw ValidationError("adjacency: node index out of range");
    if (a == b) throw ValidationError("adjacency: self-loop on node " + std::to_string(a));
    nb[a].insert(b);
    nb[b].insert(a);
  }
  ad::Csr csr;
  for (const auto& s : nb) {
    csr.index.insert(csr.index.end(), s.begin(), s.end());
    csr.offset.push_back(csr.index.size());
  }
  return csr;
}

inline bool adjacency_valid(const ad::Csr& adj) {
  const std::size_t n = adj.nodes();
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = adj.offset[v]; e < adj.offset[v + 1]; ++e) {
      const std::size_t u = adj.index[e];
      if (u >= n || u == v) return false;
      if (e > adj.offset[v] && adj.index[e - 1] >= u) return false;
      if (!std::binary_search(adj.index.begin() + std::ptrdiff_t(adj.offset[u]),
                              adj.index.begin() + std::ptrdiff_t(adj.offset[u + 1]), v))
        return false;
    }
  return true;
}

// Nodes are the embedded proteins in ascending id order. Every edge is kept
// as a labeled pair; only `message_edges` (indices into `edges`) enter the
// adjacency used for message passing.
template <typename Real>
PpiGraph<Real> build_graph(const std::vector<EdgeRecord>& edges, const std::vector<std::string>& ids,
                           const BasicTensor<Real>& embeddings, const std::vector<std::size_t>& message_edges) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != ids.size())
    throw ShapeError("build_graph: embeddings must be [proteins x d], got " + shape_string(embeddings.shape()));
  PpiGraph<Real> g;
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  const std::size_t d = embeddings.dim(1);
  g.features = BasicTensor<Real>({ids.size(), d});
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& id = ids[order[r]];
    if (!g.index.emplace(id, r).second) throw ValidationError("build_graph: duplicate protein '" + id + "'");
    g.ids.push_back(id);
    for (std::size_t k = 0; k < d; ++k) g.features(r, k) = embeddings(order[r], k);
  }
  auto lookup = [&](const std::string& id) {
    auto it = g.index.find(id);
    if (it == g.index.end()) throw ValidationError("build_graph: no embedding for protein '" + id + "'");
    return it->second;
  };
  g.n_types = edges.empty() ? 0 : edges.front().labels.size();
  for (const auto& e : edges) {
    if (e.labels.size() != g.n_types) throw ValidationError("build_graph: edges disagree on the number of types");
    g.edges.push_back(LabeledPair{lookup(e.a), lookup(e.b), e.labels});
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k : message_edges) {
    if (k >= g.edges.size()) throw ValidationError("build_graph: message edge index out of range");
    pairs.emplace_back(g.edges[k].i, g.edges[k].j);
  }
  g.adjacency = build_adjacency(ids.size(), pairs);
  return g;
}

template <typename Real>
PpiGraph<Real> build_graph(const std::vector<EdgeRecord>& edges, const std::map<std::string, std::vector<Real>>& embeddings,
                           const std::vector<std::size_t>& message_edges) {
  std::vector<std::string> ids;
  std::size_t d = embeddings.empty() ? 0 : embeddings.begin()->second.size();
  BasicTensor<Real> x({embeddings.size(), d});
  std::size_t r = 0;
  for (const auto& [id, v] : embeddings) {
    if (v.size() != d) throw ShapeError("build_graph: embedding width differs for '" + id + "'");
    ids.push_back(id);
    for (std::size_t k = 0; k < d; ++k) x(r, k) = v[k];
    ++r;
  }
  return build_graph(edges, ids, x, message_edges);
}

// True when the adjacency holds exactly the pairs of `edge_indices`.
template <typename Real>
bool adjacency_matches(const PpiGraph<Real>& g, const std::vector<std::size_t>& edge_indices) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k : edge_indices) pairs.emplace_back(g.edges.at(k).i, g.edges.at(k).j);
  const ad::Csr want = build_adjacency(g.nodes(), pairs);
  return want.offset == g.adjacency.offset && want.index == g.adjacency.index;
}

template <typename Real>
BasicTensor<Real> edge_labels(const PpiGraph<Real>& g, const std::vector<std::size_t>& edge_indices) {
  BasicTensor<Real> y({edge_indices.size(), g.n_types});
  for (std::size_t r = 0; r < edge_indices.size(); ++r)
    for (std::size_t k = 0; k < g.n_types; ++k) y(r, k) = Real(g.edges.at(edge_indices[r]).labels[k]);
  return y;
}

}  // namespace hippo
