#include "h2mmp/geometry.hpp"

#include <cmath>
#include <random>

#include "h2mmp/errors.hpp"

namespace h2mmp {

namespace {

int bus_axial_stations(int m, int d) {
  const double length = 2.0 * m + 1.0;
  return std::max(1, static_cast<int>(std::lround(length * d)));
}

int bus_ring_points(int d) { return 4 * std::max(1, d); }

void validate(const GeometrySpec& spec) {
  switch (spec.family) {
    case Family::random_cloud:
      if (spec.n < 1) throw ConfigError("random_cloud: n must be positive");
      break;
    case Family::bus:
      if (spec.bus_count < 1) throw ConfigError("bus: bus_count must be >= 1");
      if (spec.samples_per_meter < 1) throw ConfigError("bus: samples_per_meter must be >= 1");
      break;
    case Family::slab:
      if (spec.slab_width < 1) throw ConfigError("slab: slab_width must be >= 1");
      if (spec.slab_thickness < 1) throw ConfigError("slab: slab_thickness must be >= 1");
      break;
    case Family::cube_array:
      if (spec.array_edge < 1) throw ConfigError("cube_array: array_edge must be >= 1");
      if (spec.cube_points < 1) throw ConfigError("cube_array: cube_points must be >= 1");
      break;
  }
}

PointSet make_random_cloud(const GeometrySpec& spec) {
  PointSet out;
  out.points.reserve(spec.n);
  std::mt19937_64 eng(spec.seed);
  // explicit bit conversion keeps the stream identical across standard libraries
  auto uniform01 = [&eng] { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };
  for (int i = 0; i < spec.n; ++i) {
    const double x = uniform01();
    const double y = uniform01();
    const double z = uniform01();
    out.points.emplace_back(x, y, z);
  }
  return out;
}

// Map arclength u in [0,4) around the unit-square perimeter to (a,b) in [0,1]^2.
Eigen::Vector2d square_ring(double u) {
  if (u < 1.0) return {u, 0.0};
  if (u < 2.0) return {1.0, u - 1.0};
  if (u < 3.0) return {3.0 - u, 1.0};
  return {0.0, 4.0 - u};
}

PointSet make_bus(const GeometrySpec& spec) {
  const int m = spec.bus_count;
  const int d = spec.samples_per_meter;
  const int nl = bus_axial_stations(m, d);
  const int nr = bus_ring_points(d);
  const double length = 2.0 * m + 1.0;

  PointSet out;
  out.points.reserve(static_cast<std::size_t>(2 * m) * nl * nr);
  out.labels.reserve(out.points.capacity());

  // layer 0 conductors run along x at z in [0,1]; layer 1 runs along y at z in [2,3]
  for (int layer = 0; layer < 2; ++layer) {
    for (int c = 0; c < m; ++c) {
      const double offset = 2.0 * c;  // lateral position of this conductor
      for (int i = 0; i < nl; ++i) {
        const double axial = (i + 0.5) / nl * length;
        for (int j = 0; j < nr; ++j) {
          const double u = (j + 0.5) / nr * 4.0;
          const Eigen::Vector2d ring = square_ring(u);
          Eigen::Vector3d p;
          if (layer == 0) {
            p = {axial, offset + ring.x(), ring.y()};
          } else {
            p = {offset + ring.x(), axial, 2.0 + ring.y()};
          }
          out.points.push_back(p);
          out.labels.push_back(layer * m + c);
        }
      }
    }
  }
  return out;
}

PointSet make_slab(const GeometrySpec& spec) {
  const double h = 0.1;
  PointSet out;
  out.points.reserve(static_cast<std::size_t>(spec.slab_width) * spec.slab_width *
                     spec.slab_thickness);
  for (int ix = 0; ix < spec.slab_width; ++ix)
    for (int iy = 0; iy < spec.slab_width; ++iy)
      for (int iz = 0; iz < spec.slab_thickness; ++iz)
        out.points.emplace_back(ix * h, iy * h, iz * h);
  return out;
}

PointSet make_cube_array(const GeometrySpec& spec) {
  const double edge = 0.3;
  const double pitch = 0.6;  // edge + gap
  const int a = spec.array_edge;
  const int q = spec.cube_points;
  const double step = q > 1 ? edge / (q - 1) : 0.0;
  const double center = q > 1 ? 0.0 : edge / 2.0;

  PointSet out;
  out.points.reserve(static_cast<std::size_t>(a) * a * a * q * q * q);
  out.labels.reserve(out.points.capacity());
  int cube_id = 0;
  for (int cx = 0; cx < a; ++cx)
    for (int cy = 0; cy < a; ++cy)
      for (int cz = 0; cz < a; ++cz) {
        const Eigen::Vector3d origin(cx * pitch, cy * pitch, cz * pitch);
        for (int ix = 0; ix < q; ++ix)
          for (int iy = 0; iy < q; ++iy)
            for (int iz = 0; iz < q; ++iz) {
              Eigen::Vector3d p =
                  origin + Eigen::Vector3d(center + ix * step, center + iy * step,
                                           center + iz * step);
              out.points.push_back(p);
              out.labels.push_back(cube_id);
            }
        ++cube_id;
      }
  return out;
}

}  // namespace

int point_count(const GeometrySpec& spec) {
  validate(spec);
  switch (spec.family) {
    case Family::random_cloud:
      return spec.n;
    case Family::bus:
      return 2 * spec.bus_count * bus_axial_stations(spec.bus_count, spec.samples_per_meter) *
             bus_ring_points(spec.samples_per_meter);
    case Family::slab:
      return spec.slab_width * spec.slab_width * spec.slab_thickness;
    case Family::cube_array: {
      const int q3 = spec.cube_points * spec.cube_points * spec.cube_points;
      return spec.array_edge * spec.array_edge * spec.array_edge * q3;
    }
  }
  throw ConfigError("unknown geometry family");
}

PointSet generate_geometry(const GeometrySpec& spec) {
  validate(spec);
  PointSet out;
  switch (spec.family) {
    case Family::random_cloud:
      out = make_random_cloud(spec);
      break;
    case Family::bus:
      out = make_bus(spec);
      break;
    case Family::slab:
      out = make_slab(spec);
      break;
    case Family::cube_array:
      out = make_cube_array(spec);
      break;
  }
  if (out.size() != point_count(spec))
    throw InvariantError("generated point count disagrees with closed form");
  for (const auto& p : out.points)
    if (!p.allFinite()) throw InvariantError("non-finite point generated");
  return out;
}

namespace {

template <class Scalar>
Scalar kernel_entry(const Kernel& kernel, double r);

template <>
Real kernel_entry<Real>(const Kernel&, double r) {
  return 1.0 / r;
}

template <>
Complex kernel_entry<Complex>(const Kernel& kernel, double r) {
  return std::polar(1.0 / r, kernel.wavenumber * r);
}

}  // namespace

template <class Scalar>
DenseMatrix<Scalar> assemble_dense(const PointSet& pts, const Kernel& kernel) {
  if (pts.size() == 0) throw ConfigError("assemble_dense: empty point set");
  if (kernel.kind == KernelKind::laplace && !std::is_same_v<Scalar, Real>)
    throw ConfigError("laplace kernel assembles a real matrix");
  if (kernel.kind == KernelKind::helmholtz && !std::is_same_v<Scalar, Complex>)
    throw ConfigError("helmholtz kernel assembles a complex matrix");
  if (kernel.wavenumber < 0) throw ConfigError("wavenumber must be nonnegative");

  const int n = pts.size();
  DenseMatrix<Scalar> out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = (pts.points[i] - pts.points[j]).norm();
      if (r == 0.0)
        throw AssemblyError("duplicate points at indices " + std::to_string(i) + " and " +
                            std::to_string(j));
      out(i, j) = kernel_entry<Scalar>(kernel, r);
    }
  }

  double diag;
  if (kernel.diagonal_value) {
    diag = *kernel.diagonal_value;
  } else {
    double max_mag = 0.0;
    for (int j = 1; j < n; ++j) max_mag = std::max(max_mag, std::abs(out(0, j)));
    diag = 2.0 * max_mag;
  }
  if (!std::isfinite(diag)) throw ConfigError("diagonal value must be finite");
  for (int i = 0; i < n; ++i) out(i, i) = Scalar(diag);
  return out;
}

template DenseMatrix<Real> assemble_dense<Real>(const PointSet&, const Kernel&);
template DenseMatrix<Complex> assemble_dense<Complex>(const PointSet&, const Kernel&);

std::string family_name(Family family) {
  switch (family) {
    case Family::random_cloud:
      return "random_cloud";
    case Family::bus:
      return "bus";
    case Family::slab:
      return "slab";
    case Family::cube_array:
      return "cube_array";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "random_cloud" || name == "random") return Family::random_cloud;
  if (name == "bus") return Family::bus;
  if (name == "slab") return Family::slab;
  if (name == "cube_array" || name == "cube") return Family::cube_array;
  throw ConfigError("unknown geometry family: " + name);
}

}  // namespace h2mmp
