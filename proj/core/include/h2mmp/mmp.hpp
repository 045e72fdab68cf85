#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "h2mmp/h2_matrix.hpp"

namespace h2mmp {

/// Per-level accounting of one product run. Case indices follow the operand
/// kinds: 1 = full x full (non-leaf: NL x NL), 2 = full x lowrank,
/// 3 = lowrank x full, 4 = lowrank x lowrank. The *_terms fields count Gram
/// summands per cluster for the basis regeneration (case-1 bounded by
/// C_sp^2, cases 2 and 3 by C_sp).
struct LevelStats {
  int level = 0;
  Index max_row_rank = 0;
  Index max_col_rank = 0;
  std::array<std::int64_t, 4> case_products{0, 0, 0, 0};
  int max_case1_terms = 0;
  int max_case2_terms = 0;
  int max_case3_terms = 0;
};

struct MmpReport {
  double eps_trunc = 0.0;
  bool adaptive = true;
  std::vector<LevelStats> levels;  // indexed by tree level
  std::int64_t flops = 0;          // multiply-accumulate count, all stages
  /// Exact multiply-accumulate count of the four coupling-product cases,
  /// chains evaluated left to right.
  std::array<std::int64_t, 4> case_flops{0, 0, 0, 0};
  double wall_seconds = 0.0;
  int pending_after_split = 0;  // always 0 on success

  Index max_rank() const {
    Index r = 0;
    for (const auto& s : levels) r = std::max({r, s.max_row_rank, s.max_col_rank});
    return r;
  }
};

template <class Scalar>
struct MmpResult {
  H2Matrix<Scalar> product;
  MmpReport report;
};

/// Accuracy-controlled product C = A * B of two H^2 matrices sharing cluster
/// trees and block structure. The cluster bases of C are regenerated level by
/// level from normalized Gram sums truncated at eps_trunc, so every
/// multiplication is either exact or controlled by the prescribed accuracy,
/// and C keeps the operands' block structure. Requires operands with
/// orthonormal bases (as produced by build_h2); behavior for non-orthonormal
/// inputs is unspecified. The pass is single-threaded; within one level the
/// per-cluster basis and per-block coupling computations depend only on the
/// previous level, and contributions to a block accumulate in ascending
/// middle-cluster order for reproducibility.
template <class Scalar>
MmpResult<Scalar> mmp(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b, double eps_trunc);

/// Baseline formatted product: same traversal, but C reuses A's row bases and
/// B's column bases unchanged, so the accuracy is not controlled. Used for
/// comparison only.
template <class Scalar>
MmpResult<Scalar> formatted_mmp(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b);

/// Cluster basis products B_j = (V^A_{j,col})^T V^B_{j,row} for every cluster
/// (indexed by cluster id; root excluded), leaves directly and non-leaf
/// clusters through the two-term transfer recursion.
template <class Scalar>
std::vector<DenseMatrix<Scalar>> basis_products(const H2Matrix<Scalar>& a,
                                                const H2Matrix<Scalar>& b);

}  // namespace h2mmp
