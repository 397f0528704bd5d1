#pragma once

#include <Eigen/Dense>

namespace vlafp {

/// Row-major dense matrix; rows are frames / items, columns are features.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace vlafp
