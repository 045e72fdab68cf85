#include "h2mmp/block_tree.hpp"

#include <algorithm>

#include "h2mmp/errors.hpp"

namespace h2mmp {

BlockTree::BlockTree(std::shared_ptr<const ClusterTree> rows,
                     std::shared_ptr<const ClusterTree> cols, double eta)
    : rows_(std::move(rows)), cols_(std::move(cols)), eta_(eta) {
  if (eta_ <= 0) throw ConfigError("eta must be positive");
  if (rows_->size() != cols_->size())
    throw ConfigError("block tree requires trees over the same unknown count");
  if (rows_->depth != cols_->depth)
    throw ConfigError("block tree requires trees of equal depth");

  level_blocks_.assign(rows_->depth + 1, {});
  subdivide(0, 0);
  for (auto& level : level_blocks_)
    std::sort(level.begin(), level.end(),
              [](const BlockEntry& a, const BlockEntry& b) { return a.key < b.key; });

  // sparsity constant: max blocks per cluster per level, row and column side
  for (int l = 0; l <= depth(); ++l) {
    std::map<int, int> per_row, per_col;
    for (const BlockEntry& b : level_blocks_[l]) {
      c_sp_ = std::max(c_sp_, ++per_row[b.key.row]);
      c_sp_ = std::max(c_sp_, ++per_col[b.key.col]);
    }
  }
}

void BlockTree::subdivide(int t, int s) {
  const Cluster& ct = rows_->clusters[t];
  const Cluster& cs = cols_->clusters[s];
  BlockKind kind;
  if (is_admissible(ct, cs, eta_)) {
    kind = BlockKind::admissible;
  } else if (ct.is_leaf() && cs.is_leaf()) {
    kind = BlockKind::inadmissible_leaf;
  } else {
    kind = BlockKind::subdivided;
  }
  kind_.emplace(BlockKey{t, s}, kind);
  level_blocks_[ct.level].push_back({BlockKey{t, s}, kind});
  if (kind == BlockKind::subdivided) {
    if (ct.is_leaf() || cs.is_leaf())
      throw InvariantError("uneven block subdivision; trees are not level-uniform");
    for (int a : ct.child)
      for (int b : cs.child) subdivide(a, b);
  }
}

std::optional<BlockKind> BlockTree::kind(int t, int s) const {
  auto it = kind_.find(BlockKey{t, s});
  if (it == kind_.end()) return std::nullopt;
  return it->second;
}

TargetStatus BlockTree::target_status(int t, int s) const {
  int a = t;
  int b = s;
  while (a >= 0 && b >= 0) {
    auto it = kind_.find(BlockKey{a, b});
    if (it != kind_.end()) {
      if (a != t) {
        if (it->second != BlockKind::admissible)
          throw InvariantError("cluster pair below a non-admissible block");
        return TargetStatus::inside_admissible;
      }
      switch (it->second) {
        case BlockKind::admissible:
          return TargetStatus::admissible;
        case BlockKind::inadmissible_leaf:
          return TargetStatus::full_block;
        case BlockKind::subdivided:
          return TargetStatus::subdivided;
      }
    }
    a = rows_->clusters[a].parent;
    b = cols_->clusters[b].parent;
  }
  throw InvariantError("cluster pair not covered by the block tree");
}

std::int64_t BlockTree::admissible_count() const {
  std::int64_t n = 0;
  for (const auto& [key, kind] : kind_)
    if (kind == BlockKind::admissible) ++n;
  return n;
}

std::int64_t BlockTree::inadmissible_count() const {
  std::int64_t n = 0;
  for (const auto& [key, kind] : kind_)
    if (kind == BlockKind::inadmissible_leaf) ++n;
  return n;
}

std::shared_ptr<const BlockTree> build_block_tree(std::shared_ptr<const ClusterTree> rows,
                                                  std::shared_ptr<const ClusterTree> cols,
                                                  double eta) {
  return std::make_shared<const BlockTree>(std::move(rows), std::move(cols), eta);
}

}  // namespace h2mmp
