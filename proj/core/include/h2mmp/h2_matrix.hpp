#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "h2mmp/block_tree.hpp"
#include "h2mmp/dense.hpp"
#include "h2mmp/truncation.hpp"

namespace h2mmp {

/// Nested cluster bases: explicit bases at leaf clusters, stacked transfer
/// matrices [T_child1; T_child2] at non-leaf clusters. All bases produced by
/// this library have orthonormal columns. The root cluster carries no basis
/// (no admissible block can involve it).
template <class Scalar>
struct ClusterBasis {
  std::vector<DenseMatrix<Scalar>> leaf;
  std::vector<DenseMatrix<Scalar>> transfer;
  std::vector<Index> rank;
  std::vector<char> degenerate;

  void resize(std::size_t n_clusters) {
    leaf.assign(n_clusters, {});
    transfer.assign(n_clusters, {});
    rank.assign(n_clusters, 0);
    degenerate.assign(n_clusters, 0);
  }
};

/// H^2 representation over a shared square cluster tree: admissible blocks
/// stored as V_t S_{t,s} V_s^T couplings, inadmissible leaf blocks stored
/// dense. Complex matrices use the transpose (not conjugate-transpose)
/// convention on the right factor throughout. Immutable after construction
/// and safe to share across threads.
template <class Scalar>
struct H2Matrix {
  std::shared_ptr<const ClusterTree> tree;
  std::shared_ptr<const BlockTree> structure;
  ClusterBasis<Scalar> row_basis;
  ClusterBasis<Scalar> col_basis;
  std::map<BlockKey, DenseMatrix<Scalar>> coupling;  // admissible (t,s) -> k_t x k_s
  std::map<BlockKey, DenseMatrix<Scalar>> full;      // inadmissible (t,s) -> #t x #s

  int size() const { return tree ? tree->size() : 0; }
};

/// Compress a dense matrix (given in the original unknown ordering) into the
/// H^2 format over the given block structure. Bottom-up nested construction:
/// each cluster's far field is Gram-compressed at accuracy eps_h2 into an
/// orthonormal basis, transfer matrices re-compress the far field in children
/// coordinates, couplings are two-sided projections of the dense blocks.
template <class Scalar>
H2Matrix<Scalar> build_h2(const DenseMatrix<Scalar>& dense,
                          std::shared_ptr<const BlockTree> structure, double eps_h2);

/// Materialize to a dense matrix in the original unknown ordering.
template <class Scalar>
DenseMatrix<Scalar> h2_to_dense(const H2Matrix<Scalar>& h);

/// Exact matrix-vector product (forward transform, coupling products,
/// backward transform, plus dense near-field blocks).
template <class Scalar>
DenseVector<Scalar> mvp(const H2Matrix<Scalar>& h, const DenseVector<Scalar>& x);

/// Number of stored scalar entries across bases, transfers, couplings and
/// full blocks.
template <class Scalar>
std::int64_t memory_footprint(const H2Matrix<Scalar>& h);

/// Expanded basis of one cluster (leaf basis, or the nested product
/// diag(V_c1, V_c2) [T_c1; T_c2] for non-leaf clusters). Zero-width for the
/// root.
template <class Scalar>
DenseMatrix<Scalar> materialized_row_basis(const H2Matrix<Scalar>& h, int cluster);
template <class Scalar>
DenseMatrix<Scalar> materialized_col_basis(const H2Matrix<Scalar>& h, int cluster);

}  // namespace h2mmp
