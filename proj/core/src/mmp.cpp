#include "h2mmp/mmp.hpp"

#include <algorithm>
#include <chrono>
#include <tuple>

#include "h2mmp/errors.hpp"

namespace h2mmp {

namespace {

template <class Scalar>
class ProductEngine {
  using Mat = DenseMatrix<Scalar>;

 public:
  ProductEngine(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b, double eps, bool adaptive)
      : a_(a), b_(b), tree_(*a.tree), blocks_(*a.structure), eps_(eps), adaptive_(adaptive) {}

  MmpResult<Scalar> run() {
    const auto start = std::chrono::steady_clock::now();
    validate();

    c_.tree = a_.tree;
    c_.structure = a_.structure;
    c_.row_basis.resize(tree_.clusters.size());
    c_.col_basis.resize(tree_.clusters.size());
    proj_a_.resize(tree_.clusters.size());
    proj_b_.resize(tree_.clusters.size());

    report_.eps_trunc = adaptive_ ? eps_ : 0.0;
    report_.adaptive = adaptive_;
    report_.levels.resize(tree_.depth + 1);
    for (int l = 0; l <= tree_.depth; ++l) report_.levels[l].level = l;

    build_adjacency();
    precompute_basis_products();
    leaf_phase();
    ff_cache_.clear();
    for (int l = tree_.depth - 1; l >= 1; --l) nonleaf_phase(l);
    if (!pending_.empty())
      throw InvariantError("mmp: pending couplings left after the bottom-up pass");
    backward_split();
    if (!nl_coupling_.empty())
      throw InvariantError("mmp: couplings left on non-leaf blocks after the split");
    report_.pending_after_split =
        static_cast<int>(pending_.size() + nl_coupling_.size());

    report_.flops = flops_;
    report_.case_flops = case_flops_;
    report_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(c_), std::move(report_)};
  }

 private:
  void validate() const {
    if (a_.tree != b_.tree || a_.structure != b_.structure)
      throw ConfigError("mmp: operands must share cluster trees and block structure");
    if (adaptive_ && !(eps_ > 0.0 && eps_ < 1.0))
      throw ConfigError("mmp: eps_trunc must be in (0,1)");
  }

  // ---- counted linear algebra -------------------------------------------

  template <class L, class R>
  Mat product(const L& lhs, const R& rhs) {
    const std::int64_t work =
        static_cast<std::int64_t>(lhs.rows()) * lhs.cols() * rhs.cols();
    flops_ += work;
    if (active_case_ >= 0) case_flops_[active_case_] += work;
    return lhs * rhs;
  }

  TruncatedBasis<Scalar> truncate(const Mat& gram) {
    const std::int64_t n = gram.rows();
    flops_ += 9 * n * n * n;  // nominal Hermitian eigendecomposition cost
    return svd_truncate_gram<Scalar>(gram, eps_);
  }

  static void add_normalized(Mat& acc, const Mat& term) {
    const double norm = term.norm();
    if (norm > 0.0) acc += term / norm;
  }

  // ---- shared per-run state ---------------------------------------------

  Index rank_c_row(int id) const { return c_.row_basis.rank[id]; }
  Index rank_c_col(int id) const { return c_.col_basis.rank[id]; }

  void build_adjacency() {
    by_row_.resize(tree_.clusters.size());
    by_col_.resize(tree_.clusters.size());
    for (int l = 0; l <= blocks_.depth(); ++l) {
      for (const BlockEntry& e : blocks_.level_blocks(l)) {
        by_row_[e.key.row].push_back({e.key.col, e.kind});
        by_col_[e.key.col].push_back({e.key.row, e.kind});
      }
    }
    for (auto& v : by_row_) std::sort(v.begin(), v.end());
    for (auto& v : by_col_) std::sort(v.begin(), v.end());
  }

  // B_j = (V^A_{j,col})^T V^B_{j,row} for every cluster, children first
  void precompute_basis_products() {
    bprod_.resize(tree_.clusters.size());
    for (int id : tree_.levels[tree_.depth])
      bprod_[id] = product(a_.col_basis.leaf[id].transpose(), b_.row_basis.leaf[id]);
    for (int l = tree_.depth - 1; l >= 1; --l) {
      for (int id : tree_.levels[l]) {
        const Cluster& c = tree_.clusters[id];
        const Mat& ta = a_.col_basis.transfer[id];
        const Mat& tb = b_.row_basis.transfer[id];
        const Index ka1 = a_.col_basis.rank[c.child[0]];
        const Index kb1 = b_.row_basis.rank[c.child[0]];
        bprod_[id] = product(product(ta.topRows(ka1).transpose(), bprod_[c.child[0]]),
                             tb.topRows(kb1));
        bprod_[id] += product(product(ta.bottomRows(ta.rows() - ka1).transpose(),
                                      bprod_[c.child[1]]),
                              tb.bottomRows(tb.rows() - kb1));
      }
    }
  }

  // dense product of two leaf full blocks, cached across the leaf phase
  const Mat& ff(int i, int j, int k) {
    const auto key = std::make_tuple(i, j, k);
    auto it = ff_cache_.find(key);
    if (it != ff_cache_.end()) return it->second;
    Mat p = product(a_.full.at({i, j}), b_.full.at({j, k}));
    return ff_cache_.emplace(key, std::move(p)).first->second;
  }

  bool qualifying_target(int i, int k) const {
    const TargetStatus st = blocks_.target_status(i, k);
    return st == TargetStatus::admissible || st == TargetStatus::inside_admissible;
  }

  void target_add(int i, int k, TargetStatus st, const Mat& contrib) {
    switch (st) {
      case TargetStatus::admissible:
        c_.coupling.at({i, k}) += contrib;
        return;
      case TargetStatus::inside_admissible: {
        Mat& slot = pending_[{i, k}];
        if (slot.size() == 0) slot = Mat::Zero(rank_c_row(i), rank_c_col(k));
        slot += contrib;
        return;
      }
      case TargetStatus::subdivided: {
        Mat& slot = nl_coupling_[{i, k}];
        if (slot.size() == 0) slot = Mat::Zero(rank_c_row(i), rank_c_col(k));
        slot += contrib;
        return;
      }
      case TargetStatus::full_block:
        throw InvariantError("mmp: coupling contribution aimed at a full block");
    }
  }

  // ---- leaf level ---------------------------------------------------------

  Mat leaf_row_basis(int i, LevelStats& stats, bool& degenerate) {
    const Index n = tree_.clusters[i].size();
    Mat g1 = Mat::Zero(n, n);
    Mat g2 = Mat::Zero(n, n);
    int terms1 = 0;
    int terms2 = 0;
    for (const auto& [j, kind_a] : by_row_[i]) {
      if (kind_a != BlockKind::inadmissible_leaf) continue;
      for (const auto& [k, kind_b] : by_row_[j]) {
        if (kind_b != BlockKind::inadmissible_leaf || !qualifying_target(i, k)) continue;
        const Mat& x = ff(i, j, k);
        g1.noalias() += x * x.adjoint();
        flops_ += x.rows() * x.rows() * x.cols();
        ++terms1;
      }
      // every full block of the row feeds the case-2 term: non-leaf levels
      // reuse the leaf bases through the nested property, so the content is
      // needed even when no leaf-level product consumes it
      const Mat x = product(a_.full.at({i, j}), b_.row_basis.leaf[j]);
      add_outer(g2, x);
      ++terms2;
    }
    const Mat& va = a_.row_basis.leaf[i];
    Mat g3 = product(va, Mat(va.adjoint()));

    stats.max_case1_terms = std::max(stats.max_case1_terms, terms1);
    stats.max_case2_terms = std::max(stats.max_case2_terms, terms2);

    Mat gram = Mat::Zero(n, n);
    add_normalized(gram, g1);
    add_normalized(gram, g2);
    add_normalized(gram, g3);
    auto trunc = truncate(gram);
    degenerate = trunc.degenerate ||
                 (g1.norm() == 0.0 && g2.norm() == 0.0 && a_.row_basis.degenerate[i]);
    return trunc.basis;
  }

  Mat leaf_col_basis(int k, LevelStats& stats, bool& degenerate) {
    const Index n = tree_.clusters[k].size();
    Mat g1 = Mat::Zero(n, n);
    Mat g2 = Mat::Zero(n, n);
    int terms1 = 0;
    int terms3 = 0;
    for (const auto& [j, kind_b] : by_col_[k]) {
      if (kind_b != BlockKind::inadmissible_leaf) continue;
      for (const auto& [i, kind_a] : by_col_[j]) {
        if (kind_a != BlockKind::inadmissible_leaf || !qualifying_target(i, k)) continue;
        const Mat& x = ff(i, j, k);
        g1.noalias() += x.transpose() * x.conjugate();
        flops_ += x.cols() * x.cols() * x.rows();
        ++terms1;
      }
      // unconditional case-3 term, mirroring the row side
      const Mat x = product(a_.col_basis.leaf[j].transpose(), b_.full.at({j, k}));
      Mat xt = x.transpose();
      g2.noalias() += xt * xt.adjoint();
      flops_ += xt.rows() * xt.rows() * xt.cols();
      ++terms3;
    }
    const Mat& vb = b_.col_basis.leaf[k];
    Mat g3 = product(vb, Mat(vb.adjoint()));

    stats.max_case1_terms = std::max(stats.max_case1_terms, terms1);
    stats.max_case3_terms = std::max(stats.max_case3_terms, terms3);

    Mat gram = Mat::Zero(n, n);
    add_normalized(gram, g1);
    add_normalized(gram, g2);
    add_normalized(gram, g3);
    auto trunc = truncate(gram);
    degenerate = trunc.degenerate ||
                 (g1.norm() == 0.0 && g2.norm() == 0.0 && b_.col_basis.degenerate[k]);
    return trunc.basis;
  }

  void add_outer(Mat& acc, const Mat& x) {
    acc.noalias() += x * x.adjoint();
    flops_ += x.rows() * x.rows() * x.cols();
  }

  void leaf_phase() {
    const int leaf_level = tree_.depth;
    LevelStats& stats = report_.levels[leaf_level];

    for (int id : tree_.levels[leaf_level]) {
      bool degen = false;
      if (adaptive_) {
        c_.row_basis.leaf[id] = leaf_row_basis(id, stats, degen);
      } else {
        c_.row_basis.leaf[id] = a_.row_basis.leaf[id];
        degen = a_.row_basis.degenerate[id];
      }
      c_.row_basis.rank[id] = c_.row_basis.leaf[id].cols();
      c_.row_basis.degenerate[id] = degen;
      stats.max_row_rank = std::max(stats.max_row_rank, c_.row_basis.rank[id]);
    }
    for (int id : tree_.levels[leaf_level]) {
      bool degen = false;
      if (adaptive_) {
        c_.col_basis.leaf[id] = leaf_col_basis(id, stats, degen);
      } else {
        c_.col_basis.leaf[id] = b_.col_basis.leaf[id];
        degen = b_.col_basis.degenerate[id];
      }
      c_.col_basis.rank[id] = c_.col_basis.leaf[id].cols();
      c_.col_basis.degenerate[id] = degen;
      stats.max_col_rank = std::max(stats.max_col_rank, c_.col_basis.rank[id]);
    }

    // projections of the original bases onto the new ones
    for (int id : tree_.levels[leaf_level]) {
      if (adaptive_) {
        proj_a_[id] = product(c_.row_basis.leaf[id].adjoint(), a_.row_basis.leaf[id]);
        proj_b_[id] =
            product(b_.col_basis.leaf[id].transpose(), Mat(c_.col_basis.leaf[id].conjugate()));
      } else {
        proj_a_[id] = Mat::Identity(a_.row_basis.rank[id], a_.row_basis.rank[id]);
        proj_b_[id] = Mat::Identity(b_.col_basis.rank[id], b_.col_basis.rank[id]);
      }
    }

    // collected full blocks and zero-initialized stores of C
    for (const BlockEntry& e : blocks_.level_blocks(leaf_level)) {
      const auto [i, j] = e.key;
      if (e.kind == BlockKind::inadmissible_leaf) {
        coll_a_[e.key] = product(product(Mat(c_.row_basis.leaf[i].adjoint()), a_.full.at(e.key)),
                                 b_.row_basis.leaf[j]);
        coll_b_[e.key] = product(product(Mat(a_.col_basis.leaf[i].transpose()), b_.full.at(e.key)),
                                 Mat(c_.col_basis.leaf[j].conjugate()));
        c_.full[e.key] = Mat::Zero(tree_.clusters[i].size(), tree_.clusters[j].size());
      } else if (e.kind == BlockKind::admissible) {
        c_.coupling[e.key] = Mat::Zero(rank_c_row(i), rank_c_col(j));
      }
    }

    // the four product cases
    for (int j : tree_.levels[leaf_level]) {
      for (const auto& [i, kind_a] : by_col_[j]) {
        for (const auto& [k, kind_b] : by_row_[j]) {
          const bool full_a = kind_a == BlockKind::inadmissible_leaf;
          const bool full_b = kind_b == BlockKind::inadmissible_leaf;
          // case indices: 0 FF, 1 FR, 2 RF, 3 RR
          const int case_idx = full_a ? (full_b ? 0 : 1) : (full_b ? 2 : 3);
          ++stats.case_products[case_idx];
          const TargetStatus st = blocks_.target_status(i, k);
          if (st == TargetStatus::full_block) {
            Mat da = full_a ? a_.full.at({i, j})
                            : product(product(a_.row_basis.leaf[i], a_.coupling.at({i, j})),
                                      Mat(a_.col_basis.leaf[j].transpose()));
            Mat db = full_b ? b_.full.at({j, k})
                            : product(product(b_.row_basis.leaf[j], b_.coupling.at({j, k})),
                                      Mat(b_.col_basis.leaf[k].transpose()));
            c_.full.at({i, k}).noalias() += product(da, db);
          } else {
            active_case_ = case_idx;
            Mat contrib;
            if (full_a && full_b) {
              contrib = product(product(Mat(c_.row_basis.leaf[i].adjoint()), ff(i, j, k)),
                                Mat(c_.col_basis.leaf[k].conjugate()));
            } else if (full_a) {
              contrib = product(product(coll_a_.at({i, j}), b_.coupling.at({j, k})), proj_b_[k]);
            } else if (full_b) {
              contrib = product(product(proj_a_[i], a_.coupling.at({i, j})), coll_b_.at({j, k}));
            } else {
              contrib = product(
                  product(product(product(proj_a_[i], a_.coupling.at({i, j})), bprod_[j]),
                          b_.coupling.at({j, k})),
                  proj_b_[k]);
            }
            target_add(i, k, st, contrib);
          }
          active_case_ = -1;
        }
      }
    }
  }

  // ---- non-leaf levels ----------------------------------------------------

  void merge_pending(int level) {
    std::map<BlockKey, Mat> child_pending = std::move(pending_);
    pending_.clear();
    merged_.clear();
    for (auto& [key, s] : child_pending) {
      const Cluster& ci = tree_.clusters[key.row];
      const Cluster& ck = tree_.clusters[key.col];
      if (ci.level != level + 1)
        throw InvariantError("mmp: pending coupling at an unexpected level");
      const int pi = ci.parent;
      const int pk = ck.parent;
      const Cluster& cpi = tree_.clusters[pi];
      const Cluster& cpk = tree_.clusters[pk];
      Mat& m = merged_[{pi, pk}];
      if (m.size() == 0)
        m = Mat::Zero(rank_c_row(cpi.child[0]) + rank_c_row(cpi.child[1]),
                      rank_c_col(cpk.child[0]) + rank_c_col(cpk.child[1]));
      const Index row_off = key.row == cpi.child[0] ? 0 : rank_c_row(cpi.child[0]);
      const Index col_off = key.col == cpk.child[0] ? 0 : rank_c_col(cpk.child[0]);
      m.block(row_off, col_off, s.rows(), s.cols()) += s;
    }
  }

  // children-coordinate collected NL blocks for both operands: a 2x2
  // assembly from collected full blocks, projected couplings, or the
  // previous level's collected NL blocks
  void assemble_collected(int level) {
    asm_a_.clear();
    asm_b_.clear();
    for (const BlockEntry& e : blocks_.level_blocks(level)) {
      if (e.kind != BlockKind::subdivided) continue;
      const Cluster& ct = tree_.clusters[e.key.row];
      const Cluster& cs = tree_.clusters[e.key.col];

      Mat am(rank_c_row(ct.child[0]) + rank_c_row(ct.child[1]),
             b_.row_basis.rank[cs.child[0]] + b_.row_basis.rank[cs.child[1]]);
      Mat bm(a_.col_basis.rank[ct.child[0]] + a_.col_basis.rank[ct.child[1]],
             rank_c_col(cs.child[0]) + rank_c_col(cs.child[1]));
      for (int ti = 0; ti < 2; ++ti) {
        for (int si = 0; si < 2; ++si) {
          const int tc = ct.child[ti];
          const int sc = cs.child[si];
          const BlockKind kind = blocks_.kind(tc, sc).value();
          Mat qa, qb;
          if (kind == BlockKind::admissible) {
            qa = product(product(proj_a_[tc], a_.coupling.at({tc, sc})), bprod_[sc]);
            qb = product(product(bprod_[tc], b_.coupling.at({tc, sc})), proj_b_[sc]);
          } else {
            qa = coll_a_.at({tc, sc});
            qb = coll_b_.at({tc, sc});
          }
          am.block(ti == 0 ? 0 : rank_c_row(ct.child[0]),
                   si == 0 ? 0 : b_.row_basis.rank[cs.child[0]], qa.rows(), qa.cols()) = qa;
          bm.block(ti == 0 ? 0 : a_.col_basis.rank[ct.child[0]],
                   si == 0 ? 0 : rank_c_col(cs.child[0]), qb.rows(), qb.cols()) = qb;
        }
      }
      asm_a_[e.key] = std::move(am);
      asm_b_[e.key] = std::move(bm);
    }
  }

  void nonleaf_transfers(int level, LevelStats& stats,
                         const std::map<int, std::vector<BlockKey>>& merged_by_row,
                         const std::map<int, std::vector<BlockKey>>& merged_by_col) {
    for (int id : tree_.levels[level]) {
      const Cluster& c = tree_.clusters[id];
      bool degen = false;
      if (adaptive_) {
        const Index nch = rank_c_row(c.child[0]) + rank_c_row(c.child[1]);
        Mat g1 = Mat::Zero(nch, nch);
        Mat g2 = Mat::Zero(nch, nch);
        int terms1 = 0;
        int terms2 = 0;
        if (auto it = merged_by_row.find(id); it != merged_by_row.end()) {
          for (const BlockKey& key : it->second) {
            add_outer(g1, merged_.at(key));
            ++terms1;
          }
        }
        for (const auto& [j, kind_a] : by_row_[id]) {
          if (kind_a != BlockKind::subdivided) continue;
          const Mat x = product(asm_a_.at({id, j}), b_.row_basis.transfer[j]);
          add_outer(g2, x);
          ++terms2;
        }
        Mat pch = Mat::Zero(nch, a_.row_basis.rank[c.child[0]] + a_.row_basis.rank[c.child[1]]);
        pch.topLeftCorner(proj_a_[c.child[0]].rows(), proj_a_[c.child[0]].cols()) =
            proj_a_[c.child[0]];
        pch.bottomRightCorner(proj_a_[c.child[1]].rows(), proj_a_[c.child[1]].cols()) =
            proj_a_[c.child[1]];
        const Mat x3 = product(pch, a_.row_basis.transfer[id]);
        Mat g3 = Mat::Zero(nch, nch);
        add_outer(g3, x3);

        stats.max_case1_terms = std::max(stats.max_case1_terms, terms1);
        stats.max_case2_terms = std::max(stats.max_case2_terms, terms2);

        Mat gram = Mat::Zero(nch, nch);
        add_normalized(gram, g1);
        add_normalized(gram, g2);
        add_normalized(gram, g3);
        auto trunc = truncate(gram);
        degen = trunc.degenerate ||
                (g1.norm() == 0.0 && g2.norm() == 0.0 && a_.row_basis.degenerate[id]);
        c_.row_basis.transfer[id] = trunc.basis;
      } else {
        c_.row_basis.transfer[id] = a_.row_basis.transfer[id];
        degen = a_.row_basis.degenerate[id];
      }
      c_.row_basis.rank[id] = c_.row_basis.transfer[id].cols();
      c_.row_basis.degenerate[id] = degen;
      stats.max_row_rank = std::max(stats.max_row_rank, c_.row_basis.rank[id]);
    }

    for (int id : tree_.levels[level]) {
      const Cluster& c = tree_.clusters[id];
      bool degen = false;
      if (adaptive_) {
        const Index nch = rank_c_col(c.child[0]) + rank_c_col(c.child[1]);
        Mat g1 = Mat::Zero(nch, nch);
        Mat g2 = Mat::Zero(nch, nch);
        int terms1 = 0;
        int terms3 = 0;
        if (auto it = merged_by_col.find(id); it != merged_by_col.end()) {
          for (const BlockKey& key : it->second) {
            const Mat& m = merged_.at(key);
            Mat mt = m.transpose();
            add_outer(g1, mt);
            ++terms1;
          }
        }
        for (const auto& [j, kind_b] : by_col_[id]) {
          if (kind_b != BlockKind::subdivided) continue;
          const Mat x =
              product(Mat(a_.col_basis.transfer[j].transpose()), asm_b_.at({j, id}));
          Mat xt = x.transpose();
          add_outer(g2, xt);
          ++terms3;
        }
        Mat pch = Mat::Zero(b_.col_basis.rank[c.child[0]] + b_.col_basis.rank[c.child[1]], nch);
        pch.topLeftCorner(proj_b_[c.child[0]].rows(), proj_b_[c.child[0]].cols()) =
            proj_b_[c.child[0]];
        pch.bottomRightCorner(proj_b_[c.child[1]].rows(), proj_b_[c.child[1]].cols()) =
            proj_b_[c.child[1]];
        const Mat x3 =
            product(Mat(pch.transpose()), Mat(b_.col_basis.transfer[id].conjugate()));
        Mat g3 = Mat::Zero(nch, nch);
        add_outer(g3, x3);

        stats.max_case1_terms = std::max(stats.max_case1_terms, terms1);
        stats.max_case3_terms = std::max(stats.max_case3_terms, terms3);

        Mat gram = Mat::Zero(nch, nch);
        add_normalized(gram, g1);
        add_normalized(gram, g2);
        add_normalized(gram, g3);
        auto trunc = truncate(gram);
        degen = trunc.degenerate ||
                (g1.norm() == 0.0 && g2.norm() == 0.0 && b_.col_basis.degenerate[id]);
        c_.col_basis.transfer[id] = trunc.basis;
      } else {
        c_.col_basis.transfer[id] = b_.col_basis.transfer[id];
        degen = b_.col_basis.degenerate[id];
      }
      c_.col_basis.rank[id] = c_.col_basis.transfer[id].cols();
      c_.col_basis.degenerate[id] = degen;
      stats.max_col_rank = std::max(stats.max_col_rank, c_.col_basis.rank[id]);
    }
  }

  void nonleaf_projections_and_collects(int level) {
    for (int id : tree_.levels[level]) {
      const Cluster& c = tree_.clusters[id];
      if (adaptive_) {
        const Mat& tc = c_.row_basis.transfer[id];
        const Mat& ta = a_.row_basis.transfer[id];
        const Index kc1 = rank_c_row(c.child[0]);
        const Index ka1 = a_.row_basis.rank[c.child[0]];
        proj_a_[id] = product(product(Mat(tc.topRows(kc1).adjoint()), proj_a_[c.child[0]]),
                              ta.topRows(ka1));
        proj_a_[id] += product(
            product(Mat(tc.bottomRows(tc.rows() - kc1).adjoint()), proj_a_[c.child[1]]),
            ta.bottomRows(ta.rows() - ka1));

        const Mat& tcc = c_.col_basis.transfer[id];
        const Mat& tb = b_.col_basis.transfer[id];
        const Index kcc1 = rank_c_col(c.child[0]);
        const Index kb1 = b_.col_basis.rank[c.child[0]];
        proj_b_[id] = product(product(Mat(tb.topRows(kb1).transpose()), proj_b_[c.child[0]]),
                              Mat(tcc.topRows(kcc1).conjugate()));
        proj_b_[id] +=
            product(product(Mat(tb.bottomRows(tb.rows() - kb1).transpose()), proj_b_[c.child[1]]),
                    Mat(tcc.bottomRows(tcc.rows() - kcc1).conjugate()));
      } else {
        proj_a_[id] = Mat::Identity(a_.row_basis.rank[id], a_.row_basis.rank[id]);
        proj_b_[id] = Mat::Identity(b_.col_basis.rank[id], b_.col_basis.rank[id]);
      }
    }

    for (const BlockEntry& e : blocks_.level_blocks(level)) {
      if (e.kind != BlockKind::subdivided) continue;
      const auto [t, s] = e.key;
      coll_a_[e.key] = product(product(Mat(c_.row_basis.transfer[t].adjoint()), asm_a_.at(e.key)),
                               b_.row_basis.transfer[s]);
      coll_b_[e.key] =
          product(product(Mat(a_.col_basis.transfer[t].transpose()), asm_b_.at(e.key)),
                  Mat(c_.col_basis.transfer[s].conjugate()));
    }
  }

  void nonleaf_phase(int level) {
    LevelStats& stats = report_.levels[level];
    merge_pending(level);
    assemble_collected(level);

    std::map<int, std::vector<BlockKey>> merged_by_row, merged_by_col;
    for (const auto& [key, m] : merged_) {
      merged_by_row[key.row].push_back(key);
      merged_by_col[key.col].push_back(key);
    }

    nonleaf_transfers(level, stats, merged_by_row, merged_by_col);
    nonleaf_projections_and_collects(level);

    for (const BlockEntry& e : blocks_.level_blocks(level))
      if (e.kind == BlockKind::admissible)
        c_.coupling[e.key] = Mat::Zero(rank_c_row(e.key.row), rank_c_col(e.key.col));

    // case-1: merged couplings of the children products
    for (const auto& [key, m] : merged_) {
      ++stats.case_products[0];
      active_case_ = 0;
      const Mat contrib =
          product(product(Mat(c_.row_basis.transfer[key.row].adjoint()), m),
                  Mat(c_.col_basis.transfer[key.col].conjugate()));
      active_case_ = -1;
      const TargetStatus st = blocks_.target_status(key.row, key.col);
      if (st != TargetStatus::admissible && st != TargetStatus::inside_admissible)
        throw InvariantError("mmp: merged coupling with an impossible target");
      target_add(key.row, key.col, st, contrib);
    }

    // cases 2-4
    for (int j : tree_.levels[level]) {
      for (const auto& [i, kind_a] : by_col_[j]) {
        for (const auto& [k, kind_b] : by_row_[j]) {
          const bool nl_a = kind_a == BlockKind::subdivided;
          const bool nl_b = kind_b == BlockKind::subdivided;
          if (nl_a && nl_b) continue;  // accounted by the merged path
          const int case_idx = nl_a ? 1 : (nl_b ? 2 : 3);
          ++stats.case_products[case_idx];
          active_case_ = case_idx;
          Mat contrib;
          if (nl_a) {
            contrib = product(product(coll_a_.at({i, j}), b_.coupling.at({j, k})), proj_b_[k]);
          } else if (nl_b) {
            contrib = product(product(proj_a_[i], a_.coupling.at({i, j})), coll_b_.at({j, k}));
          } else {
            contrib =
                product(product(product(product(proj_a_[i], a_.coupling.at({i, j})), bprod_[j]),
                                b_.coupling.at({j, k})),
                        proj_b_[k]);
          }
          active_case_ = -1;
          target_add(i, k, blocks_.target_status(i, k), contrib);
        }
      }
    }
  }

  // ---- top-down split of couplings accumulated on non-leaf blocks ---------

  void backward_split() {
    for (int level = 1; level < tree_.depth; ++level) {
      std::vector<BlockKey> keys;
      for (const auto& [key, m] : nl_coupling_)
        if (tree_.clusters[key.row].level == level) keys.push_back(key);
      for (const BlockKey& key : keys) {
        const Mat s = std::move(nl_coupling_.at(key));
        nl_coupling_.erase(key);
        const Cluster& ci = tree_.clusters[key.row];
        const Cluster& ck = tree_.clusters[key.col];
        const Mat& tr = c_.row_basis.transfer[key.row];
        const Mat& tc = c_.col_basis.transfer[key.col];
        Index row_off = 0;
        for (int ic : ci.child) {
          const Index kr = rank_c_row(ic);
          Index col_off = 0;
          for (int kc : ck.child) {
            const Index kk = rank_c_col(kc);
            const Mat contrib = product(product(Mat(tr.middleRows(row_off, kr)), s),
                                        Mat(tc.middleRows(col_off, kk).transpose()));
            switch (blocks_.kind(ic, kc).value()) {
              case BlockKind::admissible:
                c_.coupling.at({ic, kc}) += contrib;
                break;
              case BlockKind::subdivided: {
                Mat& slot = nl_coupling_[{ic, kc}];
                if (slot.size() == 0) slot = Mat::Zero(kr, kk);
                slot += contrib;
                break;
              }
              case BlockKind::inadmissible_leaf:
                c_.full.at({ic, kc}).noalias() +=
                    product(product(c_.row_basis.leaf[ic], contrib),
                            Mat(c_.col_basis.leaf[kc].transpose()));
                break;
            }
            col_off += kk;
          }
          row_off += kr;
        }
      }
    }
  }

  const H2Matrix<Scalar>& a_;
  const H2Matrix<Scalar>& b_;
  const ClusterTree& tree_;
  const BlockTree& blocks_;
  double eps_;
  bool adaptive_;

  H2Matrix<Scalar> c_;
  MmpReport report_;

  std::vector<std::vector<std::pair<int, BlockKind>>> by_row_, by_col_;
  std::vector<Mat> bprod_;
  std::vector<Mat> proj_a_, proj_b_;
  std::map<BlockKey, Mat> coll_a_, coll_b_;
  std::map<BlockKey, Mat> pending_;
  std::map<BlockKey, Mat> nl_coupling_;
  std::map<BlockKey, Mat> merged_;
  std::map<BlockKey, Mat> asm_a_, asm_b_;
  std::map<std::tuple<int, int, int>, Mat> ff_cache_;

  std::int64_t flops_ = 0;
  std::array<std::int64_t, 4> case_flops_{0, 0, 0, 0};
  int active_case_ = -1;
};

}  // namespace

template <class Scalar>
MmpResult<Scalar> mmp(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b, double eps_trunc) {
  return ProductEngine<Scalar>(a, b, eps_trunc, true).run();
}

template <class Scalar>
std::vector<DenseMatrix<Scalar>> basis_products(const H2Matrix<Scalar>& a,
                                                const H2Matrix<Scalar>& b) {
  if (a.tree != b.tree) throw ConfigError("basis_products: operands must share cluster trees");
  const ClusterTree& tree = *a.tree;
  std::vector<DenseMatrix<Scalar>> out(tree.clusters.size());
  for (int id : tree.levels[tree.depth])
    out[id] = a.col_basis.leaf[id].transpose() * b.row_basis.leaf[id];
  for (int l = tree.depth - 1; l >= 1; --l) {
    for (int id : tree.levels[l]) {
      const Cluster& c = tree.clusters[id];
      const DenseMatrix<Scalar>& ta = a.col_basis.transfer[id];
      const DenseMatrix<Scalar>& tb = b.row_basis.transfer[id];
      const Index ka1 = a.col_basis.rank[c.child[0]];
      const Index kb1 = b.row_basis.rank[c.child[0]];
      out[id] = ta.topRows(ka1).transpose() * out[c.child[0]] * tb.topRows(kb1);
      out[id] += ta.bottomRows(ta.rows() - ka1).transpose() * out[c.child[1]] *
                 tb.bottomRows(tb.rows() - kb1);
    }
  }
  return out;
}

template <class Scalar>
MmpResult<Scalar> formatted_mmp(const H2Matrix<Scalar>& a, const H2Matrix<Scalar>& b) {
  return ProductEngine<Scalar>(a, b, 0.0, false).run();
}

template MmpResult<Real> mmp<Real>(const H2Matrix<Real>&, const H2Matrix<Real>&, double);
template MmpResult<Complex> mmp<Complex>(const H2Matrix<Complex>&, const H2Matrix<Complex>&,
                                         double);
template MmpResult<Real> formatted_mmp<Real>(const H2Matrix<Real>&, const H2Matrix<Real>&);
template MmpResult<Complex> formatted_mmp<Complex>(const H2Matrix<Complex>&,
                                                   const H2Matrix<Complex>&);
template std::vector<DenseMatrix<Real>> basis_products<Real>(const H2Matrix<Real>&,
                                                             const H2Matrix<Real>&);
template std::vector<DenseMatrix<Complex>> basis_products<Complex>(const H2Matrix<Complex>&,
                                                                   const H2Matrix<Complex>&);

}  // namespace h2mmp
