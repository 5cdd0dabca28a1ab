#pragma once

#include <Eigen/Dense>

#include <vector>

namespace pwadeepc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Numerical rank with threshold `rel_tol * sigma_max`.
Index numerical_rank(const Matrix& m, double rel_tol = 1e-9);

/// Moore-Penrose pseudo-inverse via SVD, singular values below `rel_tol * sigma_max` dropped.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-12);

/// Minimum-norm least-squares solution of `a x = b`.
Vector min_norm_solve(const Matrix& a, const Vector& b, double rel_tol = 1e-12);

/// Spectral norm (largest singular value); 0 for empty matrices.
double spectral_norm(const Matrix& m);

/// Stack a sequence of equally sized vectors into one column.
Vector stack(const std::vector<Vector>& parts);

/// Interpret a flat row-major array as a rows x cols matrix.
Matrix from_row_major(const std::vector<double>& data, Index rows, Index cols);
std::vector<double> to_row_major(const Matrix& m);

}  // namespace pwadeepc
