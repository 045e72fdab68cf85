#include "h2mmp/h2_matrix.hpp"

#include <algorithm>

#include "h2mmp/errors.hpp"

namespace h2mmp {

namespace {

// dense matrix permuted into tree ordering
template <class Scalar>
DenseMatrix<Scalar> to_tree_order(const DenseMatrix<Scalar>& dense, const ClusterTree& tree) {
  const int n = tree.size();
  DenseMatrix<Scalar> out(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out(a, b) = dense(tree.perm[a], tree.perm[b]);
  return out;
}

// per cluster: the admissible partners collected over the cluster itself and
// all its ancestors (the cluster's far field)
std::vector<std::vector<int>> far_partners(const BlockTree& structure, bool row_side) {
  const ClusterTree& tree = row_side ? structure.rows() : structure.cols();
  std::vector<std::vector<int>> partners(tree.clusters.size());
  for (int l = 0; l <= structure.depth(); ++l) {
    for (const BlockEntry& b : structure.level_blocks(l)) {
      if (b.kind != BlockKind::admissible) continue;
      if (row_side)
        partners[b.key.row].push_back(b.key.col);
      else
        partners[b.key.col].push_back(b.key.row);
    }
  }
  // push down: a cluster inherits the far field of its ancestors
  for (int l = 0; l < structure.depth(); ++l) {
    for (int id : tree.levels[l]) {
      const Cluster& c = tree.clusters[id];
      if (c.is_leaf()) continue;
      for (int ch : c.child) {
        auto& dst = partners[ch];
        dst.insert(dst.end(), partners[id].begin(), partners[id].end());
      }
    }
  }
  return partners;
}

template <class Scalar>
struct SideBuilder {
  const ClusterTree& tree;
  const ClusterTree& other_tree;
  const DenseMatrix<Scalar>& dense_tree_order;  // rows in this side's ordering
  const std::vector<std::vector<int>>& partners;
  bool transposed;  // column side compresses transposed blocks
  double eps;

  ClusterBasis<Scalar> basis;
  std::vector<DenseMatrix<Scalar>> materialized;

  explicit SideBuilder(const ClusterTree& t, const ClusterTree& o,
                       const DenseMatrix<Scalar>& d, const std::vector<std::vector<int>>& p,
                       bool tr, double e)
      : tree(t), other_tree(o), dense_tree_order(d), partners(p), transposed(tr), eps(e) {
    basis.resize(tree.clusters.size());
    materialized.resize(tree.clusters.size());
  }

  DenseMatrix<Scalar> far_block(const Cluster& c, int partner) const {
    const Cluster& s = other_tree.clusters[partner];
    if (transposed)
      return dense_tree_order.block(s.begin, c.begin, s.size(), c.size()).transpose();
    return dense_tree_order.block(c.begin, s.begin, c.size(), s.size());
  }

  void build() {
    // leaves first, then transfers bottom-up
    for (int id : tree.levels[tree.depth]) build_leaf(tree.clusters[id]);
    for (int l = tree.depth - 1; l >= 1; --l)
      for (int id : tree.levels[l]) build_transfer(tree.clusters[id]);
  }

  void build_leaf(const Cluster& c) {
    const Index n = c.size();
    DenseMatrix<Scalar> gram = DenseMatrix<Scalar>::Zero(n, n);
    for (int partner : partners[c.id]) {
      const DenseMatrix<Scalar> block = far_block(c, partner);
      gram.noalias() += block * block.adjoint();
    }
    auto trunc = svd_truncate_gram<Scalar>(gram, eps);
    basis.leaf[c.id] = trunc.basis;
    basis.rank[c.id] = trunc.basis.cols();
    basis.degenerate[c.id] = trunc.degenerate || partners[c.id].empty();
    materialized[c.id] = basis.leaf[c.id];
  }

  void build_transfer(const Cluster& c) {
    const DenseMatrix<Scalar>& m1 = materialized[c.child[0]];
    const DenseMatrix<Scalar>& m2 = materialized[c.child[1]];
    const Index k1 = m1.cols();
    const Index k2 = m2.cols();
    const Cluster& c1 = tree.clusters[c.child[0]];

    DenseMatrix<Scalar> gram = DenseMatrix<Scalar>::Zero(k1 + k2, k1 + k2);
    for (int partner : partners[c.id]) {
      const DenseMatrix<Scalar> block = far_block(c, partner);
      DenseMatrix<Scalar> z(k1 + k2, block.cols());
      z.topRows(k1).noalias() = m1.adjoint() * block.topRows(c1.size());
      z.bottomRows(k2).noalias() = m2.adjoint() * block.bottomRows(c.size() - c1.size());
      gram.noalias() += z * z.adjoint();
    }
    auto trunc = svd_truncate_gram<Scalar>(gram, eps);
    basis.transfer[c.id] = trunc.basis;
    basis.rank[c.id] = trunc.basis.cols();
    basis.degenerate[c.id] = trunc.degenerate || partners[c.id].empty();

    DenseMatrix<Scalar> mat(c.size(), trunc.basis.cols());
    mat.topRows(c1.size()).noalias() = m1 * trunc.basis.topRows(k1);
    mat.bottomRows(c.size() - c1.size()).noalias() = m2 * trunc.basis.bottomRows(k2);
    materialized[c.id] = std::move(mat);
  }
};

template <class Scalar>
DenseMatrix<Scalar> materialize(const ClusterBasis<Scalar>& basis, const ClusterTree& tree,
                                int cluster) {
  const Cluster& c = tree.clusters[cluster];
  if (c.is_leaf()) return basis.leaf[cluster];
  const DenseMatrix<Scalar>& t = basis.transfer[cluster];
  if (t.size() == 0) return DenseMatrix<Scalar>(c.size(), 0);
  DenseMatrix<Scalar> m1 = materialize(basis, tree, c.child[0]);
  DenseMatrix<Scalar> m2 = materialize(basis, tree, c.child[1]);
  DenseMatrix<Scalar> out(c.size(), t.cols());
  out.topRows(m1.rows()).noalias() = m1 * t.topRows(m1.cols());
  out.bottomRows(m2.rows()).noalias() = m2 * t.bottomRows(m2.cols());
  return out;
}

}  // namespace

template <class Scalar>
H2Matrix<Scalar> build_h2(const DenseMatrix<Scalar>& dense,
                          std::shared_ptr<const BlockTree> structure, double eps_h2) {
  if (!structure) throw ConfigError("build_h2: null structure");
  if (structure->rows_ptr() != structure->cols_ptr())
    throw ConfigError("build_h2: the row and column cluster trees must be shared");
  const ClusterTree& tree = structure->rows();
  if (dense.rows() != tree.size() || dense.cols() != tree.size())
    throw ConfigError("build_h2: dense size does not match the block structure");
  if (!(eps_h2 > 0.0 && eps_h2 < 1.0)) throw ConfigError("build_h2: eps_h2 must be in (0,1)");

  const DenseMatrix<Scalar> dt = to_tree_order(dense, tree);
  const auto row_far = far_partners(*structure, true);
  const auto col_far = far_partners(*structure, false);

  SideBuilder<Scalar> rows(structure->rows(), structure->cols(), dt, row_far, false, eps_h2);
  rows.build();
  SideBuilder<Scalar> cols(structure->cols(), structure->rows(), dt, col_far, true, eps_h2);
  cols.build();

  H2Matrix<Scalar> h;
  h.tree = structure->rows_ptr();
  h.structure = structure;
  h.row_basis = std::move(rows.basis);
  h.col_basis = std::move(cols.basis);

  for (int l = 0; l <= structure->depth(); ++l) {
    for (const BlockEntry& b : structure->level_blocks(l)) {
      const Cluster& t = tree.clusters[b.key.row];
      const Cluster& s = tree.clusters[b.key.col];
      if (b.kind == BlockKind::admissible) {
        const DenseMatrix<Scalar> block = dt.block(t.begin, s.begin, t.size(), s.size());
        h.coupling[b.key] = rows.materialized[t.id].adjoint() * block *
                            cols.materialized[s.id].conjugate();
      } else if (b.kind == BlockKind::inadmissible_leaf) {
        h.full[b.key] = dt.block(t.begin, s.begin, t.size(), s.size());
      }
    }
  }
  return h;
}

template <class Scalar>
DenseMatrix<Scalar> h2_to_dense(const H2Matrix<Scalar>& h) {
  const ClusterTree& tree = *h.tree;
  const int n = tree.size();
  DenseMatrix<Scalar> dt = DenseMatrix<Scalar>::Zero(n, n);

  std::vector<DenseMatrix<Scalar>> row_mat(tree.clusters.size());
  std::vector<DenseMatrix<Scalar>> col_mat(tree.clusters.size());
  for (const auto& [key, s] : h.coupling) {
    if (row_mat[key.row].size() == 0)
      row_mat[key.row] = materialized_row_basis(h, key.row);
    if (col_mat[key.col].size() == 0)
      col_mat[key.col] = materialized_col_basis(h, key.col);
    const Cluster& t = tree.clusters[key.row];
    const Cluster& c = tree.clusters[key.col];
    dt.block(t.begin, c.begin, t.size(), c.size()).noalias() +=
        row_mat[key.row] * s * col_mat[key.col].transpose();
  }
  for (const auto& [key, f] : h.full) {
    const Cluster& t = tree.clusters[key.row];
    const Cluster& c = tree.clusters[key.col];
    dt.block(t.begin, c.begin, t.size(), c.size()) += f;
  }

  DenseMatrix<Scalar> out(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out(tree.perm[a], tree.perm[b]) = dt(a, b);
  return out;
}

template <class Scalar>
DenseVector<Scalar> mvp(const H2Matrix<Scalar>& h, const DenseVector<Scalar>& x) {
  const ClusterTree& tree = *h.tree;
  const int n = tree.size();
  if (x.size() != n) throw ConfigError("mvp: vector length does not match the matrix");

  DenseVector<Scalar> xt(n);
  for (int a = 0; a < n; ++a) xt(a) = x(tree.perm[a]);
  DenseVector<Scalar> yt = DenseVector<Scalar>::Zero(n);

  // forward transform up the column tree: xhat_s = V_s^T x|_s
  std::vector<DenseVector<Scalar>> xhat(tree.clusters.size());
  for (int l = tree.depth; l >= 1; --l) {
    for (int id : tree.levels[l]) {
      const Cluster& c = tree.clusters[id];
      if (c.is_leaf()) {
        xhat[id].noalias() = h.col_basis.leaf[id].transpose() * xt.segment(c.begin, c.size());
      } else {
        const DenseMatrix<Scalar>& t = h.col_basis.transfer[id];
        const Index k1 = xhat[c.child[0]].size();
        xhat[id].noalias() = t.topRows(k1).transpose() * xhat[c.child[0]];
        xhat[id].noalias() += t.bottomRows(t.rows() - k1).transpose() * xhat[c.child[1]];
      }
    }
  }

  // coupling products
  std::vector<DenseVector<Scalar>> yhat(tree.clusters.size());
  for (const auto& [key, s] : h.coupling) {
    if (yhat[key.row].size() == 0)
      yhat[key.row] = DenseVector<Scalar>::Zero(h.row_basis.rank[key.row]);
    yhat[key.row].noalias() += s * xhat[key.col];
  }

  // backward transform down the row tree
  for (int l = 1; l < tree.depth; ++l) {
    for (int id : tree.levels[l]) {
      const Cluster& c = tree.clusters[id];
      if (c.is_leaf() || yhat[id].size() == 0) continue;
      const DenseMatrix<Scalar>& t = h.row_basis.transfer[id];
      const Index k1 = h.row_basis.rank[c.child[0]];
      if (yhat[c.child[0]].size() == 0)
        yhat[c.child[0]] = DenseVector<Scalar>::Zero(k1);
      if (yhat[c.child[1]].size() == 0)
        yhat[c.child[1]] = DenseVector<Scalar>::Zero(t.rows() - k1);
      yhat[c.child[0]].noalias() += t.topRows(k1) * yhat[id];
      yhat[c.child[1]].noalias() += t.bottomRows(t.rows() - k1) * yhat[id];
    }
  }
  for (int id : tree.levels[tree.depth]) {
    if (yhat[id].size() == 0) continue;
    const Cluster& c = tree.clusters[id];
    yt.segment(c.begin, c.size()).noalias() += h.row_basis.leaf[id] * yhat[id];
  }

  // near field
  for (const auto& [key, f] : h.full) {
    const Cluster& t = tree.clusters[key.row];
    const Cluster& s = tree.clusters[key.col];
    yt.segment(t.begin, t.size()).noalias() += f * xt.segment(s.begin, s.size());
  }

  DenseVector<Scalar> y(n);
  for (int a = 0; a < n; ++a) y(tree.perm[a]) = yt(a);
  return y;
}

template <class Scalar>
std::int64_t memory_footprint(const H2Matrix<Scalar>& h) {
  std::int64_t count = 0;
  auto basis_count = [&count](const ClusterBasis<Scalar>& b) {
    for (const auto& m : b.leaf) count += m.size();
    for (const auto& m : b.transfer) count += m.size();
  };
  basis_count(h.row_basis);
  basis_count(h.col_basis);
  for (const auto& [key, m] : h.coupling) count += m.size();
  for (const auto& [key, m] : h.full) count += m.size();
  return count;
}

template <class Scalar>
DenseMatrix<Scalar> materialized_row_basis(const H2Matrix<Scalar>& h, int cluster) {
  return materialize(h.row_basis, *h.tree, cluster);
}

template <class Scalar>
DenseMatrix<Scalar> materialized_col_basis(const H2Matrix<Scalar>& h, int cluster) {
  return materialize(h.col_basis, *h.tree, cluster);
}

template H2Matrix<Real> build_h2<Real>(const DenseMatrix<Real>&,
                                       std::shared_ptr<const BlockTree>, double);
template H2Matrix<Complex> build_h2<Complex>(const DenseMatrix<Complex>&,
                                             std::shared_ptr<const BlockTree>, double);
template DenseMatrix<Real> h2_to_dense<Real>(const H2Matrix<Real>&);
template DenseMatrix<Complex> h2_to_dense<Complex>(const H2Matrix<Complex>&);
template DenseVector<Real> mvp<Real>(const H2Matrix<Real>&, const DenseVector<Real>&);
template DenseVector<Complex> mvp<Complex>(const H2Matrix<Complex>&, const DenseVector<Complex>&);
template std::int64_t memory_footprint<Real>(const H2Matrix<Real>&);
template std::int64_t memory_footprint<Complex>(const H2Matrix<Complex>&);
template DenseMatrix<Real> materialized_row_basis<Real>(const H2Matrix<Real>&, int);
template DenseMatrix<Complex> materialized_row_basis<Complex>(const H2Matrix<Complex>&, int);
template DenseMatrix<Real> materialized_col_basis<Real>(const H2Matrix<Real>&, int);
template DenseMatrix<Complex> materialized_col_basis<Complex>(const H2Matrix<Complex>&, int);

}  // namespace h2mmp
