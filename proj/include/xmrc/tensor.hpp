#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xmrc {

/// Dense row-major matrix; every tensor in the library is rank <= 2.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// `true` marks a valid (unmasked) entry.
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for the named op.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, Index r0, Index c0, Index r1, Index c1)
      : Error(op + ": shape mismatch " + shape_string(r0, c0) + " vs " + shape_string(r1, c1)) {}
  explicit ShapeError(const std::string& what) : Error(what) {}

  static std::string shape_string(Index r, Index c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }
};

/// An op produced NaN/Inf, or a numeric precondition failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A named trainable tensor. `grad` accumulates across backward passes until zero_grad().
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Boolean mask with `count` leading valid entries, as a 1 x total row.
inline BoolMatrix prefix_mask(Index total, Index count) {
  BoolMatrix m = BoolMatrix::Constant(1, total, false);
  m.leftCols(count).setConstant(true);
  return m;
}

}  // namespace xmrc
