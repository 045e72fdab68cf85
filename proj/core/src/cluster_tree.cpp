#include "h2mmp/cluster_tree.hpp"

#include <algorithm>
#include <cmath>

#include "h2mmp/errors.hpp"

namespace h2mmp {

namespace {

struct Builder {
  const PointSet& pts;
  ClusterTree& tree;
  int target_depth;

  void compute_bbox(Cluster& c) const {
    Eigen::Vector3d lo = pts.points[tree.perm[c.begin]];
    Eigen::Vector3d hi = lo;
    for (int p = c.begin; p < c.end; ++p) {
      const Eigen::Vector3d& x = pts.points[tree.perm[p]];
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    c.bbox_min = lo;
    c.bbox_max = hi;
  }

  int build(int begin, int end, int level, int parent) {
    const int id = static_cast<int>(tree.clusters.size());
    tree.clusters.emplace_back();
    {
      Cluster& c = tree.clusters.back();
      c.id = id;
      c.parent = parent;
      c.level = level;
      c.begin = begin;
      c.end = end;
      compute_bbox(c);
    }
    if (level < target_depth) {
      // longest-axis median bisection; ties broken by original index so the
      // permutation is fully deterministic
      const Cluster& c = tree.clusters[id];
      const Eigen::Vector3d extent = c.bbox_max - c.bbox_min;
      int axis = 0;
      if (extent.y() > extent.x()) axis = 1;
      if (extent.z() > extent[axis]) axis = 2;
      std::stable_sort(tree.perm.begin() + begin, tree.perm.begin() + end,
                       [&](int a, int b) {
                         const double pa = pts.points[a][axis];
                         const double pb = pts.points[b][axis];
                         return pa < pb || (pa == pb && a < b);
                       });
      const int mid = begin + (end - begin + 1) / 2;
      const int left = build(begin, mid, level + 1, id);
      const int right = build(mid, end, level + 1, id);
      tree.clusters[id].child = {left, right};
    }
    return id;
  }
};

}  // namespace

ClusterTree build_cluster_tree(const PointSet& pts, int leafsize) {
  if (leafsize < 1) throw ConfigError("leafsize must be >= 1");
  if (pts.size() == 0) throw ConfigError("cannot build a cluster tree over no points");

  const int n = pts.size();
  ClusterTree tree;
  tree.leafsize = leafsize;
  tree.perm.resize(n);
  for (int i = 0; i < n; ++i) tree.perm[i] = i;

  int depth = 0;
  while ((n + (1 << depth) - 1) / (1 << depth) > leafsize) ++depth;
  tree.depth = depth;

  Builder builder{pts, tree, depth};
  builder.build(0, n, 0, -1);

  tree.inv_perm.resize(n);
  for (int i = 0; i < n; ++i) tree.inv_perm[tree.perm[i]] = i;

  tree.levels.assign(depth + 1, {});
  for (const Cluster& c : tree.clusters) tree.levels[c.level].push_back(c.id);
  for (auto& level : tree.levels)
    std::sort(level.begin(), level.end(), [&](int a, int b) {
      return tree.clusters[a].begin < tree.clusters[b].begin;
    });
  return tree;
}

double bbox_distance(const Cluster& t, const Cluster& s) {
  Eigen::Vector3d gap = Eigen::Vector3d::Zero();
  for (int a = 0; a < 3; ++a) {
    const double g = std::max(t.bbox_min[a] - s.bbox_max[a], s.bbox_min[a] - t.bbox_max[a]);
    gap[a] = std::max(g, 0.0);
  }
  return gap.norm();
}

bool is_admissible(const Cluster& t, const Cluster& s, double eta) {
  const double diam = std::max(t.diameter(), s.diameter());
  const double dist = bbox_distance(t, s);
  // touching or overlapping boxes are never admissible, even when degenerate
  return dist > 0.0 && diam <= eta * dist;
}

}  // namespace h2mmp
