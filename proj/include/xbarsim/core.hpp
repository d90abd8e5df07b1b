#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>

#include "xbarsim/errors.hpp"

namespace xbarsim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.derived().array().isFinite().all();
}

// Reference vector-matrix product y = x^T W. Every crossbar read path is
// checked against this.
template <typename DerivedX, typename DerivedW>
VectorX<typename DerivedW::Scalar> matvec_ref(const Eigen::MatrixBase<DerivedX>& x,
                                              const Eigen::MatrixBase<DerivedW>& weights) {
  if (x.size() != weights.rows()) {
    throw ShapeError("core", "matvec_ref: input length " + std::to_string(x.size()) +
                                 " does not match weight rows " +
                                 std::to_string(weights.rows()));
  }
  return weights.transpose() * x;
}

// ||a - b||_inf / max(||b||_inf, floor). Used by the oracle comparisons.
template <typename DerivedA, typename DerivedB>
double relative_error(const Eigen::MatrixBase<DerivedA>& actual,
                      const Eigen::MatrixBase<DerivedB>& expected, double floor = 1e-300) {
  if (actual.size() != expected.size()) {
    throw ShapeError("core", "relative_error: size mismatch");
  }
  if (actual.size() == 0) return 0.0;
  const double scale = std::max(expected.template lpNorm<Eigen::Infinity>(), floor);
  return (actual - expected).template lpNorm<Eigen::Infinity>() / scale;
}

using ScalarFunction = std::function<double(const Vector&)>;

// Central differences (f(w + h e_i) - f(w - h e_i)) / 2h.
Vector finite_diff_grad(const ScalarFunction& f, const Vector& w, double h);

}  // namespace xbarsim
