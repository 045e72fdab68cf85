#include "h2mmp/truncation.hpp"

#include <Eigen/Eigenvalues>

#include "h2mmp/errors.hpp"

namespace h2mmp {

template <class Scalar>
TruncatedBasis<Scalar> svd_truncate_gram(const DenseMatrix<Scalar>& gram, double eps) {
  if (gram.rows() != gram.cols() || gram.rows() < 1)
    throw ConfigError("svd_truncate_gram: gram matrix must be square and non-empty");
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("svd_truncate_gram: eps must be in (0,1)");

  const Index n = gram.rows();
  auto unit_basis = [n] {
    TruncatedBasis<Scalar> out;
    out.basis = DenseMatrix<Scalar>::Zero(n, 1);
    out.basis(0, 0) = Scalar(1);
    out.degenerate = true;
    return out;
  };
  if (gram.isZero(0.0)) return unit_basis();

  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> es(gram);
  if (es.info() != Eigen::Success)
    throw InvariantError("svd_truncate_gram: eigendecomposition failed");

  // eigenvalues come out ascending and real; tiny negatives are round-off
  const Eigen::VectorXd values = es.eigenvalues().cwiseMax(0.0);
  const double top = values(n - 1);
  if (top <= 0.0) return unit_basis();

  Index rank = 0;
  for (Index i = 0; i < n; ++i) {
    if (values(n - 1 - i) > eps * top)
      ++rank;
    else
      break;
  }
  rank = std::max<Index>(rank, 1);

  TruncatedBasis<Scalar> out;
  out.basis = es.eigenvectors().rowwise().reverse().leftCols(rank);
  out.degenerate = false;
  return out;
}

template TruncatedBasis<Real> svd_truncate_gram<Real>(const DenseMatrix<Real>&, double);
template TruncatedBasis<Complex> svd_truncate_gram<Complex>(const DenseMatrix<Complex>&, double);

}  // namespace h2mmp
