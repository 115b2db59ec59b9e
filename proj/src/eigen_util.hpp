#pragma once

#include <Eigen/Dense>

#include "rollcast/gradcore.hpp"

namespace rollcast::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

inline MatrixMap as_matrix(NumericArray& a, Eigen::Index rows, Eigen::Index cols) {
  return {a.data(), rows, cols};
}
inline ConstMatrixMap as_matrix(const NumericArray& a, Eigen::Index rows, Eigen::Index cols) {
  return {a.data(), rows, cols};
}
inline VectorMap as_vector(NumericArray& a) { return {a.data(), static_cast<Eigen::Index>(a.size())}; }
inline ConstVectorMap as_vector(const NumericArray& a) {
  return {a.data(), static_cast<Eigen::Index>(a.size())};
}

}  // namespace rollcast::detail
