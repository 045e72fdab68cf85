#pragma once

#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "h2mmp/cluster_tree.hpp"

namespace h2mmp {

enum class BlockKind : unsigned char { admissible, inadmissible_leaf, subdivided };

/// Classification of a cluster pair (t,s) relative to the block partition:
/// either it is a block of the tree itself, or it lies strictly inside an
/// admissible ancestor block.
enum class TargetStatus : unsigned char {
  full_block,         // (t,s) is an inadmissible leaf
  admissible,         // (t,s) is an admissible block
  subdivided,         // (t,s) is a non-leaf (NL) block
  inside_admissible,  // some ancestor pair is admissible
};

struct BlockKey {
  int row = -1;
  int col = -1;
  friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

struct BlockEntry {
  BlockKey key;
  BlockKind kind;
};

/// Two-tree block partition under the strong admissibility condition.
/// Admissible pairs become admissible leaves, pairs of leaf clusters become
/// inadmissible leaves, everything else is subdivided into the four child
/// pairs. Rows and columns must have equal depth (square operators).
class BlockTree {
 public:
  BlockTree(std::shared_ptr<const ClusterTree> rows, std::shared_ptr<const ClusterTree> cols,
            double eta);

  const ClusterTree& rows() const { return *rows_; }
  const ClusterTree& cols() const { return *cols_; }
  const std::shared_ptr<const ClusterTree>& rows_ptr() const { return rows_; }
  const std::shared_ptr<const ClusterTree>& cols_ptr() const { return cols_; }

  double eta() const { return eta_; }
  int depth() const { return rows_->depth; }

  /// Max number of blocks any single cluster forms at one level.
  int c_sp() const { return c_sp_; }

  const std::vector<BlockEntry>& level_blocks(int level) const { return level_blocks_[level]; }

  std::optional<BlockKind> kind(int t, int s) const;
  TargetStatus target_status(int t, int s) const;

  std::int64_t admissible_count() const;
  std::int64_t inadmissible_count() const;

 private:
  void subdivide(int t, int s);

  std::shared_ptr<const ClusterTree> rows_;
  std::shared_ptr<const ClusterTree> cols_;
  double eta_;
  int c_sp_ = 0;
  std::vector<std::vector<BlockEntry>> level_blocks_;
  std::map<BlockKey, BlockKind> kind_;
};

std::shared_ptr<const BlockTree> build_block_tree(std::shared_ptr<const ClusterTree> rows,
                                                  std::shared_ptr<const ClusterTree> cols,
                                                  double eta);

}  // namespace h2mmp
