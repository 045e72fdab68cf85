#include "h2mmp/metrics.hpp"

#include <random>

#include "h2mmp/errors.hpp"

namespace h2mmp {

namespace {

double uniform_pm1(std::mt19937_64& eng) {
  return 2.0 * (static_cast<double>(eng() >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace

template <>
DenseVector<Real> random_vector<Real>(int n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  DenseVector<Real> x(n);
  for (int i = 0; i < n; ++i) x(i) = uniform_pm1(eng);
  return x;
}

template <>
DenseVector<Complex> random_vector<Complex>(int n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  DenseVector<Complex> x(n);
  for (int i = 0; i < n; ++i) {
    const double re = uniform_pm1(eng);
    const double im = uniform_pm1(eng);
    x(i) = Complex(re, im);
  }
  return x;
}

template <class Scalar>
RelativeError relative_error(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b,
                             const H2Matrix<Scalar>& c, std::uint64_t seed) {
  if (a.size() != b.size() || a.size() != c.size())
    throw ConfigError("relative_error: operand sizes disagree");
  const DenseVector<Scalar> x = random_vector<Scalar>(a.size(), seed);
  const DenseVector<Scalar> y = mvp(b, x);
  const DenseVector<Scalar> ref = mvp(a, y);
  const DenseVector<Scalar> cx = mvp(c, x);
  const double ref_norm = ref.norm();
  RelativeError out;
  if (ref_norm == 0.0) {
    out.value = cx.norm();
    out.reference_was_zero = true;
  } else {
    out.value = (cx - ref).norm() / ref_norm;
  }
  return out;
}

template RelativeError relative_error<Real>(const H2Matrix<Real>&, const H2Matrix<Real>&,
                                            const H2Matrix<Real>&, std::uint64_t);
template RelativeError relative_error<Complex>(const H2Matrix<Complex>&, const H2Matrix<Complex>&,
                                               const H2Matrix<Complex>&, std::uint64_t);

namespace {

GeometrySpec sized_spec(const GeometrySpec& base, int size) {
  GeometrySpec spec = base;
  switch (base.family) {
    case Family::random_cloud:
      spec.n = size;
      break;
    case Family::bus:
      spec.bus_count = size;
      break;
    case Family::slab:
      spec.slab_width = size;
      break;
    case Family::cube_array:
      spec.array_edge = size;
      break;
  }
  return spec;
}

template <class Scalar>
ScalingRecord probe_one(const GeometrySpec& spec, const ScalingParams& params) {
  const PointSet pts = generate_geometry(spec);
  auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(pts, params.leafsize));
  auto structure = build_block_tree(tree, tree, params.eta);
  const DenseMatrix<Scalar> dense = assemble_dense<Scalar>(pts, params.kernel);
  const H2Matrix<Scalar> a = build_h2<Scalar>(dense, structure, params.eps_h2);
  MmpResult<Scalar> result = mmp(a, a, params.eps_trunc);

  ScalingRecord rec;
  rec.n = pts.size();
  rec.wall_seconds_mmp = result.report.wall_seconds;
  rec.flops = result.report.flops;
  rec.memory_scalars = memory_footprint(result.product);
  rec.c_sp = structure->c_sp();
  for (const LevelStats& s : result.report.levels)
    rec.level_ranks.push_back(std::max(s.max_row_rank, s.max_col_rank));
  return rec;
}

}  // namespace

ScalingSummary scaling_probe(const GeometrySpec& base, const std::vector<int>& sizes,
                             const ScalingParams& params) {
  ScalingSummary out;
  for (int size : sizes) {
    const GeometrySpec spec = sized_spec(base, size);
    if (params.kernel.kind == KernelKind::laplace)
      out.records.push_back(probe_one<Real>(spec, params));
    else
      out.records.push_back(probe_one<Complex>(spec, params));
  }
  for (std::size_t i = 1; i < out.records.size(); ++i) {
    const ScalingRecord& prev = out.records[i - 1];
    const ScalingRecord& cur = out.records[i];
    const double flop_prev = static_cast<double>(prev.flops) / (static_cast<double>(prev.c_sp) * prev.c_sp);
    const double flop_cur = static_cast<double>(cur.flops) / (static_cast<double>(cur.c_sp) * cur.c_sp);
    const double mem_prev = static_cast<double>(prev.memory_scalars) / prev.c_sp;
    const double mem_cur = static_cast<double>(cur.memory_scalars) / cur.c_sp;
    out.flop_ratios.push_back(flop_cur / flop_prev);
    out.memory_ratios.push_back(mem_cur / mem_prev);
  }
  return out;
}

}  // namespace h2mmp
