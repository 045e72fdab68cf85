#pragma once

#include <array>
#include <memory>
#include <vector>

#include "h2mmp/dense.hpp"
#include "h2mmp/geometry.hpp"

namespace h2mmp {

struct Cluster {
  int id = -1;
  int parent = -1;
  int level = 0;
  int begin = 0;  // [begin,end) positions in the permuted unknown ordering
  int end = 0;
  std::array<int, 2> child{-1, -1};
  Eigen::Vector3d bbox_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d bbox_max = Eigen::Vector3d::Zero();

  bool is_leaf() const { return child[0] < 0; }
  int size() const { return end - begin; }
  double diameter() const { return (bbox_max - bbox_min).norm(); }
};

/// Binary spatial hierarchy over the unknown indices. Built by recursive
/// bisection along the longest bounding-box axis at the coordinate median,
/// continued to a uniform depth so that every leaf sits at the same level
/// and holds at most leafsize points.
struct ClusterTree {
  std::vector<Cluster> clusters;           // id-indexed, root has id 0
  std::vector<std::vector<int>> levels;    // level -> cluster ids, ordered by index range
  std::vector<int> perm;                   // tree position -> original index
  std::vector<int> inv_perm;               // original index -> tree position
  int depth = 0;                           // leaf level (root is level 0)
  int leafsize = 0;

  int size() const { return static_cast<int>(perm.size()); }
  const Cluster& root() const { return clusters.front(); }
};

ClusterTree build_cluster_tree(const PointSet& pts, int leafsize);

double bbox_distance(const Cluster& t, const Cluster& s);

/// Strong admissibility: max(diam(t), diam(s)) <= eta * dist(t, s), with
/// Euclidean bounding-box diameters and the bounding-box gap distance.
bool is_admissible(const Cluster& t, const Cluster& s, double eta);

}  // namespace h2mmp
