#pragma once

#include "stril/tensor.hpp"

namespace stril {

struct PcaResult {
  Tensor projected;           // n x k
  Tensor components;          // k x d, orthonormal rows
  std::vector<double> explained_variance;  // length k, non-increasing
  std::vector<double> mean;   // length d
};

// Principal components of an n x d row matrix via cyclic Jacobi rotations
// of the d x d sample covariance. Rows are mean-centered first. Sign
// convention: the largest-magnitude entry of each component is positive.
PcaResult pca_project(const Tensor& rows, int k);

// Eigendecomposition of a symmetric matrix; eigenvalues descending.
// Exposed for the toy-scale d used here (d <= a few dozen).
void jacobi_eigen_symmetric(const Tensor& m, std::vector<double>& eigenvalues,
                            Tensor& eigenvectors);

}  // namespace stril
