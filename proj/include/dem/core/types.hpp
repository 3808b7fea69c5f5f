#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

namespace dem {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

/// Iteration index of the parameter broadcast an E step was computed at.
using IterationTag = std::uint64_t;

using SubsetId = std::uint32_t;

}  // namespace dem
