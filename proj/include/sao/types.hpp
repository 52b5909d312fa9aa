#pragma once

#include <Eigen/Dense>

#include "sao/tensor.hpp"

namespace sao {

using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Copies between Tensor (2-D) and Matrix.
Matrix to_matrix(const Tensor& t);
Tensor to_tensor(const Matrix& m, bool requires_grad = false);

}  // namespace sao
