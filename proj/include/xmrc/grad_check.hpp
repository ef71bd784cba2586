#pragma once

#include "xmrc/tape.hpp"

#include <functional>
#include <span>
#include <string>

namespace xmrc {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string param;  ///< parameter holding the worst coordinate
  Index row = -1;
  Index col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Builds a scalar loss on the supplied tape. Must be deterministic for a
/// given tape seed.
template <typename Scalar>
using LossBuilder = std::function<Var<Scalar>(Tape<Scalar>&)>;

/// Compares analytic gradients against central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of every parameter. The relative
/// error of a coordinate is |a - n| / max(|a|, |n|, 1e-8).
///
/// With `hold_detached`, stop-gradient outputs keep their unperturbed values
/// in the shifted evaluations, so the reference is the function backprop
/// actually differentiates.
///
/// Parameter values are restored afterwards; their grad buffers are left
/// holding the analytic gradient. Throws Error if two forward passes at the
/// same point disagree.
template <typename Scalar>
GradCheckReport grad_check(const LossBuilder<Scalar>& f, std::span<Parameter<Scalar>* const> params,
                           double step = 1e-4, double tol = 1e-6, std::uint64_t seed = 0, bool hold_detached = true);

}  // namespace xmrc
