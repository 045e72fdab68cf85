#pragma once

#include <cstdint>
#include <vector>

#include "h2mmp/geometry.hpp"
#include "h2mmp/h2_matrix.hpp"
#include "h2mmp/mmp.hpp"

namespace h2mmp {

struct RelativeError {
  double value = 0.0;
  bool reference_was_zero = false;  // value is then the absolute norm of C x
};

/// MVP-based relative product error: with x drawn componentwise uniform in
/// [-1,1] from the seed (real and imaginary parts independently for complex
/// scalars), returns ||C x - A (B x)|| / ||A (B x)|| with exact H^2
/// matrix-vector products.
template <class Scalar>
RelativeError relative_error(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b,
                             const H2Matrix<Scalar>& c, std::uint64_t seed);

/// Deterministic test vector used by relative_error.
template <class Scalar>
DenseVector<Scalar> random_vector(int n, std::uint64_t seed);

struct ScalingRecord {
  int n = 0;
  double wall_seconds_mmp = 0.0;
  std::int64_t flops = 0;
  std::int64_t memory_scalars = 0;  // footprint of the product matrix
  int c_sp = 0;
  std::vector<Index> level_ranks;  // max product rank per tree level
};

struct ScalingSummary {
  std::vector<ScalingRecord> records;
  std::vector<double> flop_ratios;    // successive ratios of flops / C_sp^2
  std::vector<double> memory_ratios;  // successive ratios of memory / C_sp
};

struct ScalingParams {
  int leafsize = 30;
  double eta = 1.0;
  double eps_h2 = 1e-4;
  double eps_trunc = 1e-4;
  Kernel kernel;
  std::uint64_t seed = 1;
};

/// Build + multiply across a size sweep of one geometry family and collect
/// operation/memory counters. Sizes are applied to the family's main size
/// parameter (n for random_cloud, bus_count, slab_width, array_edge).
ScalingSummary scaling_probe(const GeometrySpec& base, const std::vector<int>& sizes,
                             const ScalingParams& params);

}  // namespace h2mmp
