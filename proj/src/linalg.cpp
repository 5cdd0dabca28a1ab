#include "pwadeepc/linalg.hpp"

#include "pwadeepc/error.hpp"

namespace pwadeepc {

Index numerical_rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double thr = rel_tol * s(0);
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > thr) ++r;
  }
  return r;
}

Matrix pseudo_inverse(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double thr = s.size() > 0 ? rel_tol * s(0) : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > thr && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Vector min_norm_solve(const Matrix& a, const Vector& b, double rel_tol) {
  if (a.rows() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "min_norm_solve: rows and rhs differ");
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  cod.setThreshold(rel_tol);
  return cod.solve(b);
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

Vector stack(const std::vector<Vector>& parts) {
  Index n = 0;
  for (const auto& p : parts) n += p.size();
  Vector out(n);
  Index off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.size()) = p;
    off += p.size();
  }
  return out;
}

Matrix from_row_major(const std::vector<double>& data, Index rows, Index cols) {
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "row-major array has wrong length");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<size_t>(r * cols + c)];
  return m;
}

std::vector<double> to_row_major(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

}  // namespace pwadeepc
