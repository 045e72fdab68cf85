#pragma once

#include "h2mmp/dense.hpp"

namespace h2mmp {

template <class Scalar>
struct TruncatedBasis {
  DenseMatrix<Scalar> basis;  // n x r, orthonormal columns, r >= 1
  bool degenerate = false;    // set when the Gram matrix carried no content
};

/// Orthonormal basis of a Hermitian positive semidefinite Gram matrix, keeping
/// the singular vectors whose normalized singular values exceed eps (strict;
/// ties at exactly eps are dropped). At least one vector is always kept. An
/// exactly zero Gram matrix yields the first canonical unit vector with the
/// degenerate flag set.
template <class Scalar>
TruncatedBasis<Scalar> svd_truncate_gram(const DenseMatrix<Scalar>& gram, double eps);

}  // namespace h2mmp
