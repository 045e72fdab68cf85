#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "h2mmp/dense.hpp"

namespace h2mmp {

/// Ordered set of 3-D interaction points. The ordering defines the global
/// unknown ordering: point i corresponds to row/column i of any assembled
/// matrix.
struct PointSet {
  std::vector<Eigen::Vector3d> points;
  std::vector<int> labels;  // optional per-point tag (conductor/cube id); empty if unused

  int size() const { return static_cast<int>(points.size()); }
};

enum class KernelKind { laplace, helmholtz };

/// Interaction kernel. Laplace entries are 1/r (real); Helmholtz entries are
/// exp(i*k*r)/r (complex). The self-interaction entry is a finite
/// regularization value instead of 1/0: either an explicit diagonal_value or,
/// if unset, twice the largest off-diagonal magnitude of the first row.
struct Kernel {
  KernelKind kind = KernelKind::laplace;
  double wavenumber = 0.0;  // rad/m, used only for helmholtz
  std::optional<double> diagonal_value;
};

enum class Family { random_cloud, bus, slab, cube_array };

/// Deterministic geometry generator parameters. The same spec always yields a
/// bit-identical point set.
struct GeometrySpec {
  Family family = Family::random_cloud;
  std::uint64_t seed = 0;

  // random_cloud: n points uniform in the unit cube
  int n = 0;

  // bus: two crossing layers of bus_count conductors, each conductor
  // 1 x 1 x (2*bus_count+1) meters, lateral surfaces sampled with
  // samples_per_meter stations per meter along the axis and per unit of
  // cross-section perimeter.
  int bus_count = 0;
  int samples_per_meter = 1;

  // slab: slab_width x slab_width x slab_thickness lattice, 0.1 m spacing
  int slab_width = 0;
  int slab_thickness = 2;

  // cube_array: array_edge^3 cubes of 0.3 m edge with 0.3 m gaps, each cube
  // carrying a cube_points^3 lattice
  int array_edge = 0;
  int cube_points = 3;
};

/// Closed-form point count for a geometry spec:
///   random_cloud: n
///   bus:          2 * m * max(1, round((2m+1)*d)) * 4 * max(1, d)
///   slab:         slab_width^2 * slab_thickness
///   cube_array:   array_edge^3 * cube_points^3
int point_count(const GeometrySpec& spec);

/// Generate the point set for a spec. Pure function of its arguments.
PointSet generate_geometry(const GeometrySpec& spec);

/// Assemble the dense kernel matrix in the point ordering. Throws
/// AssemblyError when two distinct points coincide.
template <class Scalar>
DenseMatrix<Scalar> assemble_dense(const PointSet& pts, const Kernel& kernel);

std::string family_name(Family family);
Family family_from_name(const std::string& name);

}  // namespace h2mmp
