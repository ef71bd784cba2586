#pragma once

// Differentiable ops over Var. Binary elementwise ops broadcast a 1xC, Rx1
// or 1x1 operand against an RxC one. Masks follow the same broadcasting
// rules; an empty mask means "all valid".

#include "xmrc/tape.hpp"

#include <span>

namespace xmrc {

enum class Axis { Rows = 0, Cols = 1 };

template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
template <typename S> Var<S> div(Var<S> a, Var<S> b);
template <typename S> Var<S> scale(Var<S> a, S factor);
template <typename S> Var<S> add_scalar(Var<S> a, S c);

template <typename S> Var<S> matmul(Var<S> a, Var<S> b);
/// a * b^T
template <typename S> Var<S> matmul_nt(Var<S> a, Var<S> b);
template <typename S> Var<S> transpose(Var<S> a);

template <typename S> Var<S> concat(std::span<const Var<S>> parts, Axis axis);
template <typename S> Var<S> slice(Var<S> a, Axis axis, Index start, Index count);

/// Reduces along `axis`: Rows -> 1xC, Cols -> Rx1.
template <typename S> Var<S> sum(Var<S> a, Axis axis);
template <typename S> Var<S> mean(Var<S> a, Axis axis);
template <typename S> Var<S> sum_all(Var<S> a);
template <typename S> Var<S> mean_all(Var<S> a);

template <typename S> Var<S> sqrt(Var<S> a);
template <typename S> Var<S> log(Var<S> a);
template <typename S> Var<S> exp(Var<S> a);
template <typename S> Var<S> square(Var<S> a);
template <typename S> Var<S> relu(Var<S> a);
/// Exact (erf) GELU.
template <typename S> Var<S> gelu(Var<S> a);
/// a*log(a) with 0*log(0) = 0; inputs must be >= 0.
template <typename S> Var<S> xlogx(Var<S> a);
/// Gradient passes where lo <= a <= hi.
template <typename S> Var<S> clamp(Var<S> a, S lo, S hi);

/// Entries where mask is false are replaced by `fill` and receive no gradient.
template <typename S> Var<S> masked_fill(Var<S> a, const BoolMatrix& mask, S fill);

/// Softmax over each slice along `axis` (Cols: each row sums to 1). Masked
/// entries are exactly 0. Throws Error on a fully-masked slice.
template <typename S> Var<S> softmax(Var<S> a, Axis axis, const BoolMatrix& mask = {});
/// Masked entries of the result are 0 and receive no gradient.
template <typename S> Var<S> log_softmax(Var<S> a, Axis axis, const BoolMatrix& mask = {});

/// Per-row normalization with affine gamma/beta (both 1xC).
template <typename S> Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps);
/// Inverted dropout driven by the tape RNG; identity when !training or rate == 0.
template <typename S> Var<S> dropout(Var<S> x, S rate, bool training);
/// Rows of `table` selected by `ids`.
template <typename S> Var<S> gather_rows(Var<S> table, std::span<const int> ids);
/// 1x1 view of a(r, c).
template <typename S> Var<S> element(Var<S> a, Index r, Index c);

/// Identity forward, no gradient to `a`.
template <typename S> Var<S> detach(Var<S> a);

template <typename S> Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <typename S> Var<S> operator*(Var<S> a, Var<S> b) { return mul(a, b); }
template <typename S> Var<S> operator/(Var<S> a, Var<S> b) { return div(a, b); }
template <typename S> Var<S> operator-(Var<S> a) { return scale(a, S(-1)); }
template <typename S> Var<S> operator*(Var<S> a, S c) { return scale(a, c); }
template <typename S> Var<S> operator*(S c, Var<S> a) { return scale(a, c); }
template <typename S> Var<S> operator+(Var<S> a, S c) { return add_scalar(a, c); }

/// Expands a broadcastable mask to rows x cols; empty -> all true.
BoolMatrix expand_mask(const BoolMatrix& mask, Index rows, Index cols);

/// Plain softmax over a vector of logits, in the same numeric form as the op.
template <typename S>
Matrix<S> softmax_values(const Matrix<S>& a, Axis axis, const BoolMatrix& mask = {});

}  // namespace xmrc
