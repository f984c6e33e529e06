#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "hippo/numcore/error.hpp"

namespace hippo {

// Multi-level label tree: root -> level 0 (e.g. clan) -> level 1 (e.g.
// family) -> ... -> protein leaves. Level indices are 0-based, root side
// first. Node names are unique within a level and every node has exactly one
// parent.
class HierarchyTree {
 public:
  explicit HierarchyTree(std::vector<std::string> level_names = {"clan", "family"})
      : level_names_(std::move(level_names)),
        nodes_(level_names_.size()),
        node_index_(level_names_.size()),
        level_weights_(level_names_.size(), 1.0) {
    if (level_names_.empty()) throw ValidationError("hierarchy needs at least one level");
  }

  // Registers `protein` under `path`, one node name per level in root-to-leaf
  // order. A node that already exists must keep the same parent.
  void add_leaf(const std::string& protein, const std::vector<std::string>& path) {
    if (path.size() != level_names_.size()) {
      throw ValidationError("leaf '" + protein + "' has " + std::to_string(path.size()) + " ancestors, expected " +
                            std::to_string(level_names_.size()));
    }
    if (leaf_index_.count(protein)) throw ValidationError("protein '" + protein + "' appears twice in the hierarchy");
    std::vector<std::size_t> ancestors(path.size());
    std::size_t parent = kRoot;
    for (std::size_t l = 0; l < path.size(); ++l) {
      auto& index = node_index_[l];
      auto it = index.find(path[l]);
      if (it == index.end()) {
        it = index.emplace(path[l], nodes_[l].size()).first;
        nodes_[l].push_back(Node{path[l], parent});
      } else if (nodes_[l][it->second].parent != parent) {
        const std::string& old_parent = nodes_[l - 1][nodes_[l][it->second].parent].name;
        throw ValidationError(level_names_[l] + " '" + path[l] + "' is mapped to two " + level_names_[l - 1] +
                              "s: '" + old_parent + "' and '" + path[l - 1] + "'");
      }
      ancestors[l] = it->second;
      parent = it->second;
    }
    leaf_index_.emplace(protein, leaves_.size());
    leaves_.push_back(Leaf{protein, std::move(ancestors)});
  }

  std::size_t level_count() const noexcept { return level_names_.size(); }
  const std::vector<std::string>& level_names() const noexcept { return level_names_; }
  std::size_t level_of(const std::string& name) const {
    auto it = std::find(level_names_.begin(), level_names_.end(), name);
    if (it == level_names_.end()) throw ValidationError("unknown hierarchy level '" + name + "'");
    return std::size_t(it - level_names_.begin());
  }

  std::size_t node_count(std::size_t level) const { return nodes_.at(level).size(); }
  const std::string& node_name(std::size_t level, std::size_t node) const { return nodes_.at(level).at(node).name; }
  // Parent node index at level - 1; the root for level-0 nodes.
  std::size_t parent(std::size_t level, std::size_t node) const { return nodes_.at(level).at(node).parent; }

  std::size_t leaf_count() const noexcept { return leaves_.size(); }
  const std::string& leaf_name(std::size_t leaf) const { return leaves_.at(leaf).protein; }
  bool contains(const std::string& protein) const { return leaf_index_.count(protein) != 0; }

  // Node index of the level-`level` ancestor of `protein`.
  std::size_t ancestor(const std::string& protein, std::size_t level) const {
    auto it = leaf_index_.find(protein);
    if (it == leaf_index_.end()) throw ValidationError("protein '" + protein + "' is not in the hierarchy");
    return leaves_[it->second].ancestors.at(level);
  }
  const std::vector<std::size_t>& ancestors(const std::string& protein) const {
    auto it = leaf_index_.find(protein);
    if (it == leaf_index_.end()) throw ValidationError("protein '" + protein + "' is not in the hierarchy");
    return leaves_[it->second].ancestors;
  }

  const std::vector<double>& level_weights() const noexcept { return level_weights_; }
  void set_level_weights(std::vector<double> w) {
    if (w.size() != level_names_.size()) throw ValidationError("one level weight per hierarchy level is required");
    for (double v : w)
      if (!(v > 0.0)) throw ParameterError("level weights must be positive");
    level_weights_ = std::move(w);
  }

  static constexpr std::size_t kRoot = static_cast<std::size_t>(-1);

 private:
  struct Node {
    std::string name;
    std::size_t parent;
  };
  struct Leaf {
    std::string protein;
    std::vector<std::size_t> ancestors;
  };

  std::vector<std::string> level_names_;
  std::vector<std::vector<Node>> nodes_;
  std::vector<std::map<std::string, std::size_t>> node_index_;
  std::vector<Leaf> leaves_;
  std::map<std::string, std::size_t> leaf_index_;
  std::vector<double> level_weights_;
};

// Positives of one anchor at one level.
struct LevelPairs {
  std::size_t anchor = 0;
  std::size_t level = 0;
  std::vector<std::size_t> positives;
};

// Batch members whose lowest common ancestor with batch[i] sits at `level`:
// same level-`level` ancestor and, when a deeper level exists, a different
// ancestor there. At the deepest level two distinct proteins that share the
// node are positives. Ascending index order.
inline std::vector<std::size_t> positives_at_level(const HierarchyTree& tree, const std::vector<std::string>& batch,
                                                   std::size_t i, std::size_t level) {
  if (i >= batch.size()) throw ValidationError("anchor index out of range");
  if (level >= tree.level_count()) throw ValidationError("level out of range");
  const auto& anchor = tree.ancestors(batch[i]);
  const bool deeper = level + 1 < tree.level_count();
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& other = tree.ancestors(batch[j]);
    if (j == i) continue;
    if (other[level] != anchor[level]) continue;
    if (deeper && other[level + 1] == anchor[level + 1]) continue;
    out.push_back(j);
  }
  return out;
}

// Positives for every anchor at every level: result[level][anchor].
inline std::vector<std::vector<LevelPairs>> all_level_pairs(const HierarchyTree& tree,
                                                            const std::vector<std::string>& batch) {
  for (const auto& id : batch)
    if (!tree.contains(id)) throw ValidationError("protein '" + id + "' is not in the hierarchy");
  std::vector<std::vector<LevelPairs>> out(tree.level_count());
  for (std::size_t l = 0; l < tree.level_count(); ++l)
    for (std::size_t i = 0; i < batch.size(); ++i) out[l].push_back(LevelPairs{i, l, positives_at_level(tree, batch, i, l)});
  return out;
}

}  // namespace hippo
