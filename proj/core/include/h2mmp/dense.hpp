#pragma once

#include <Eigen/Dense>
#include <complex>
#include <type_traits>

namespace h2mmp {

using Real = double;
using Complex = std::complex<double>;
using Index = Eigen::Index;

template <class Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
inline constexpr bool is_complex_v = std::is_same_v<Scalar, Complex>;

}  // namespace h2mmp
