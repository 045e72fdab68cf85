#include <doctest.h>

#include <random>

#include "h2mmp/errors.hpp"
#include "h2mmp/truncation.hpp"

using namespace h2mmp;

TEST_CASE("identity gram keeps the full space") {
  const DenseMatrix<Real> g = DenseMatrix<Real>::Identity(4, 4);
  const auto t = svd_truncate_gram<Real>(g, 1e-2);
  CHECK(t.basis.cols() == 4);
  CHECK_FALSE(t.degenerate);
  CHECK((t.basis.adjoint() * t.basis - DenseMatrix<Real>::Identity(4, 4)).norm() < 1e-13);
}

TEST_CASE("threshold is strict on normalized singular values") {
  DenseMatrix<Real> g = DenseMatrix<Real>::Zero(4, 4);
  g.diagonal() << 1.0, 1e-1, 1e-3, 0.0;
  CHECK(svd_truncate_gram<Real>(g, 1e-2).basis.cols() == 2);

  // a tie at exactly eps is dropped
  DenseMatrix<Real> tie = DenseMatrix<Real>::Zero(2, 2);
  tie.diagonal() << 1.0, 1e-2;
  CHECK(svd_truncate_gram<Real>(tie, 1e-2).basis.cols() == 1);
  CHECK(svd_truncate_gram<Real>(tie, 0.5e-2).basis.cols() == 2);
}

TEST_CASE("gram of a rank-3 factor recovers rank 3") {
  std::mt19937_64 eng(42);
  auto uniform = [&eng] { return 2.0 * (static_cast<double>(eng() >> 11) * 0x1.0p-53) - 1.0; };
  DenseMatrix<Real> m(6, 3);
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 3; ++c) m(r, c) = uniform();
  REQUIRE(m.fullPivLu().rank() == 3);  // oracle for the factor rank
  const DenseMatrix<Real> g = m * m.transpose();
  const auto t = svd_truncate_gram<Real>(g, 1e-12);
  CHECK(t.basis.cols() == 3);
}

TEST_CASE("zero gram yields the flagged unit vector") {
  const DenseMatrix<Real> g = DenseMatrix<Real>::Zero(5, 5);
  const auto t = svd_truncate_gram<Real>(g, 1e-4);
  CHECK(t.degenerate);
  REQUIRE(t.basis.cols() == 1);
  CHECK(t.basis(0, 0) == 1.0);
  CHECK(t.basis.bottomRows(4).norm() == 0.0);
}

TEST_CASE("complex Hermitian gram gives an orthonormal complex basis") {
  DenseMatrix<Complex> m(4, 2);
  m << Complex(1, 1), Complex(0, 2), Complex(2, -1), Complex(1, 0), Complex(0, 1), Complex(3, 1),
      Complex(1, -2), Complex(0, 0);
  const DenseMatrix<Complex> g = m * m.adjoint();
  const auto t = svd_truncate_gram<Complex>(g, 1e-12);
  CHECK(t.basis.cols() == 2);
  CHECK((t.basis.adjoint() * t.basis - DenseMatrix<Complex>::Identity(2, 2)).norm() < 1e-13);
}

TEST_CASE("argument validation") {
  const DenseMatrix<Real> g = DenseMatrix<Real>::Identity(3, 3);
  CHECK_THROWS_AS(svd_truncate_gram<Real>(g, 0.0), ConfigError);
  CHECK_THROWS_AS(svd_truncate_gram<Real>(g, 1.0), ConfigError);
  CHECK_THROWS_AS(svd_truncate_gram<Real>(DenseMatrix<Real>(2, 3), 1e-2), ConfigError);
}
