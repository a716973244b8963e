#ifndef RANKEDCL_NUMKERNEL_HPP
#define RANKEDCL_NUMKERNEL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "json.hpp"
#include "rankedcl/errors.hpp"

namespace rankedcl {

/// Dense row-major matrix. Row-major is fixed so flat serialization is unambiguous.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = RowMatrix<double>;
using RowVector = RowVectorX<double>;

template <typename A, typename B>
RowMatrix<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: lhs is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     ", rhs is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  return a * b;
}

/// Scales every row to unit Euclidean norm. A zero row is an error, never a silent division.
template <typename Derived>
RowMatrix<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out = z;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar norm = out.row(i).norm();
    if (!(norm > Scalar(0)) || !std::isfinite(static_cast<double>(norm))) {
      throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) + " has zero or non-finite norm");
    }
    out.row(i) /= norm;
  }
  return out;
}

/// Central-difference gradient of a scalar function, one entry at a time.
template <typename Fn, typename Derived>
RowMatrix<typename Derived::Scalar> finite_diff_grad(Fn&& f, const Eigen::MatrixBase<Derived>& x,
                                                     typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (!(eps > Scalar(0))) throw ValidationError("finite_diff_grad: eps must be positive");
  RowMatrix<Scalar> probe = x;
  RowMatrix<Scalar> grad(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    for (Eigen::Index j = 0; j < probe.cols(); ++j) {
      const Scalar saved = probe(i, j);
      probe(i, j) = saved + eps;
      const Scalar up = static_cast<Scalar>(f(std::as_const(probe)));
      probe(i, j) = saved - eps;
      const Scalar down = static_cast<Scalar>(f(std::as_const(probe)));
      probe(i, j) = saved;
      grad(i, j) = (up - down) / (Scalar(2) * eps);
    }
  }
  return grad;
}

/// |a-b| / max(|a|, |b|, 1e-8)
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Largest entrywise relative_error between two equally-shaped matrices.
template <typename A, typename B>
double max_relative_error(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, relative_error(static_cast<double>(a(i, j)), static_cast<double>(b(i, j))));
    }
  }
  return worst;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.array().isFinite().all();
}

/// Shortest decimal text that parses back to exactly v.
std::string format_double(double v);

/// {"rows": n, "cols": d, "data": [row-major values]}
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace rankedcl

#endif  // RANKEDCL_NUMKERNEL_HPP
