#include "xmrc/ops.hpp"

#include <cmath>
#include <numbers>

namespace xmrc {

namespace {

template <typename S>
using Mat = Matrix<S>;

bool broadcastable(Index from, Index to) { return from == to || from == 1; }

template <typename S>
Mat<S> expand(const Mat<S>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

/// Sums a full-shape gradient down to the operand's (possibly broadcast) shape.
template <typename S>
Mat<S> reduce_to(const Mat<S>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Mat<S> r = g;
  if (rows == 1 && g.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && g.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

template <typename S>
std::pair<Index, Index> broadcast_shape(const char* op, const Mat<S>& a, const Mat<S>& b) {
  const Index rows = std::max(a.rows(), b.rows());
  const Index cols = std::max(a.cols(), b.cols());
  if (!broadcastable(a.rows(), rows) || !broadcastable(b.rows(), rows) || !broadcastable(a.cols(), cols) ||
      !broadcastable(b.cols(), cols)) {
    throw ShapeError(op, a.rows(), a.cols(), b.rows(), b.cols());
  }
  return {rows, cols};
}

template <typename S>
Var<S> unary(const char* op, Var<S> a, Mat<S> out, Mat<S> local_grad) {
  Tape<S>& t = *a.tape;
  const int ai = a.id;
  return t.record(op, std::move(out), {ai}, [ai, lg = std::move(local_grad)](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(ai, g.cwiseProduct(lg));
  });
}

}  // namespace

BoolMatrix expand_mask(const BoolMatrix& mask, Index rows, Index cols) {
  if (mask.size() == 0) return BoolMatrix::Constant(rows, cols, true);
  if (!broadcastable(mask.rows(), rows) || !broadcastable(mask.cols(), cols)) {
    throw ShapeError("mask", mask.rows(), mask.cols(), rows, cols);
  }
  if (mask.rows() == rows && mask.cols() == cols) return mask;
  return mask.replicate(rows / mask.rows(), cols / mask.cols());
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto [rows, cols] = broadcast_shape("add", av, bv);
  Mat<S> out = expand(av, rows, cols) + expand(bv, rows, cols);
  const Index ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  const int ai = a.id, bi = b.id;
  return a.tape->record("add", std::move(out), {ai, bi}, [=](Tape<S>& t, const Mat<S>& g) {
    if (t.requires_grad(ai)) t.accumulate(ai, reduce_to(g, ar, ac));
    if (t.requires_grad(bi)) t.accumulate(bi, reduce_to(g, br, bc));
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto [rows, cols] = broadcast_shape("sub", av, bv);
  Mat<S> out = expand(av, rows, cols) - expand(bv, rows, cols);
  const Index ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  const int ai = a.id, bi = b.id;
  return a.tape->record("sub", std::move(out), {ai, bi}, [=](Tape<S>& t, const Mat<S>& g) {
    if (t.requires_grad(ai)) t.accumulate(ai, reduce_to(g, ar, ac));
    if (t.requires_grad(bi)) t.accumulate(bi, reduce_to<S>(-g, br, bc));
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  const auto [rows, cols] = broadcast_shape("mul", a.value(), b.value());
  Mat<S> ae = expand(a.value(), rows, cols);
  Mat<S> be = expand(b.value(), rows, cols);
  Mat<S> out = ae.cwiseProduct(be);
  const Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const int ai = a.id, bi = b.id;
  return a.tape->record("mul", std::move(out), {ai, bi},
                        [=, ae = std::move(ae), be = std::move(be)](Tape<S>& t, const Mat<S>& g) {
                          if (t.requires_grad(ai)) t.accumulate(ai, reduce_to<S>(g.cwiseProduct(be), ar, ac));
                          if (t.requires_grad(bi)) t.accumulate(bi, reduce_to<S>(g.cwiseProduct(ae), br, bc));
                        });
}

template <typename S>
Var<S> div(Var<S> a, Var<S> b) {
  const auto [rows, cols] = broadcast_shape("div", a.value(), b.value());
  Mat<S> ae = expand(a.value(), rows, cols);
  Mat<S> be = expand(b.value(), rows, cols);
  Mat<S> out = ae.cwiseQuotient(be);
  const Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const int ai = a.id, bi = b.id;
  return a.tape->record("div", out, {ai, bi},
                        [=, be = std::move(be)](Tape<S>& t, const Mat<S>& g) {
                          Mat<S> ga = g.cwiseQuotient(be);
                          if (t.requires_grad(bi)) t.accumulate(bi, reduce_to<S>(-ga.cwiseProduct(out), br, bc));
                          if (t.requires_grad(ai)) t.accumulate(ai, reduce_to(ga, ar, ac));
                        });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  const int ai = a.id;
  return a.tape->record("scale", a.value() * factor, {ai},
                        [=](Tape<S>& t, const Mat<S>& g) { t.accumulate(ai, g * factor); });
}

template <typename S>
Var<S> add_scalar(Var<S> a, S c) {
  const int ai = a.id;
  return a.tape->record("add_scalar", (a.value().array() + c).matrix(), {ai},
                        [=](Tape<S>& t, const Mat<S>& g) { t.accumulate(ai, g); });
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul", av.rows(), av.cols(), bv.rows(), bv.cols());
  Mat<S> out = av * bv;
  const int ai = a.id, bi = b.id;
  return a.tape->record("matmul", std::move(out), {ai, bi}, [=](Tape<S>& t, const Mat<S>& g) {
    if (t.requires_grad(ai)) t.accumulate(ai, g * t.value({&t, bi}).transpose());
    if (t.requires_grad(bi)) t.accumulate(bi, t.value({&t, ai}).transpose() * g);
  });
}

template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) throw ShapeError("matmul_nt", av.rows(), av.cols(), bv.rows(), bv.cols());
  Mat<S> out = av * bv.transpose();
  const int ai = a.id, bi = b.id;
  return a.tape->record("matmul_nt", std::move(out), {ai, bi}, [=](Tape<S>& t, const Mat<S>& g) {
    if (t.requires_grad(ai)) t.accumulate(ai, g * t.value({&t, bi}));
    if (t.requires_grad(bi)) t.accumulate(bi, g.transpose() * t.value({&t, ai}));
  });
}

template <typename S>
Var<S> transpose(Var<S> a) {
  const int ai = a.id;
  return a.tape->record("transpose", a.value().transpose(), {ai},
                        [=](Tape<S>& t, const Mat<S>& g) { t.accumulate(ai, g.transpose()); });
}

template <typename S>
Var<S> concat(std::span<const Var<S>> parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape<S>& tape = *parts.front().tape;
  const bool rows = axis == Axis::Rows;
  Index total = 0;
  const Index fixed = rows ? parts.front().cols() : parts.front().rows();
  std::vector<int> ids;
  std::vector<Index> sizes;
  for (const auto& p : parts) {
    const Index other = rows ? p.cols() : p.rows();
    if (other != fixed) {
      throw ShapeError("concat", parts.front().rows(), parts.front().cols(), p.rows(), p.cols());
    }
    const Index n = rows ? p.rows() : p.cols();
    ids.push_back(p.id);
    sizes.push_back(n);
    total += n;
  }
  Mat<S> out(rows ? total : fixed, rows ? fixed : total);
  Index off = 0;
  for (const auto& p : parts) {
    if (rows) {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    }
  }
  return tape.record("concat", std::move(out), ids, [=](Tape<S>& t, const Mat<S>& g) {
    Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        if (rows) {
          t.accumulate(ids[k], g.middleRows(o, sizes[k]));
        } else {
          t.accumulate(ids[k], g.middleCols(o, sizes[k]));
        }
      }
      o += sizes[k];
    }
  });
}

template <typename S>
Var<S> slice(Var<S> a, Axis axis, Index start, Index count) {
  const auto& av = a.value();
  const bool rows = axis == Axis::Rows;
  const Index extent = rows ? av.rows() : av.cols();
  if (start < 0 || count < 0 || start + count > extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of bounds for " + ShapeError::shape_string(av.rows(), av.cols()));
  }
  Mat<S> out = rows ? Mat<S>(av.middleRows(start, count)) : Mat<S>(av.middleCols(start, count));
  const Index r = av.rows(), c = av.cols();
  const int ai = a.id;
  return a.tape->record("slice", std::move(out), {ai}, [=](Tape<S>& t, const Mat<S>& g) {
    Mat<S> full = Mat<S>::Zero(r, c);
    if (rows) {
      full.middleRows(start, count) = g;
    } else {
      full.middleCols(start, count) = g;
    }
    t.accumulate(ai, full);
  });
}

template <typename S>
Var<S> sum(Var<S> a, Axis axis) {
  const auto& av = a.value();
  const Index r = av.rows(), c = av.cols();
  Mat<S> out = axis == Axis::Rows ? Mat<S>(av.colwise().sum()) : Mat<S>(av.rowwise().sum());
  const int ai = a.id;
  return a.tape->record("sum", std::move(out), {ai},
                        [=](Tape<S>& t, const Mat<S>& g) { t.accumulate(ai, expand(g, r, c)); });
}

template <typename S>
Var<S> mean(Var<S> a, Axis axis) {
  const Index n = axis == Axis::Rows ? a.rows() : a.cols();
  if (n == 0) throw ShapeError("mean: empty axis");
  return scale(sum(a, axis), S(1) / static_cast<S>(n));
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  const Index r = a.rows(), c = a.cols();
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum();
  const int ai = a.id;
  return a.tape->record("sum_all", std::move(out), {ai},
                        [=](Tape<S>& t, const Mat<S>& g) { t.accumulate(ai, Mat<S>::Constant(r, c, g(0, 0))); });
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  if (a.value().size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(a), S(1) / static_cast<S>(a.value().size()));
}

template <typename S>
Var<S> sqrt(Var<S> a) {
  if ((a.value().array() < S(0)).any()) throw NumericError("sqrt: negative input");
  Mat<S> out = a.value().cwiseSqrt();
  Mat<S> lg = (S(0.5) / out.array()).matrix();
  return unary("sqrt", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> log(Var<S> a) {
  if ((a.value().array() <= S(0)).any()) throw NumericError("log: non-positive input");
  Mat<S> out = a.value().array().log().matrix();
  Mat<S> lg = a.value().cwiseInverse();
  return unary("log", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> exp(Var<S> a) {
  Mat<S> out = a.value().array().exp().matrix();
  Mat<S> lg = out;
  return unary("exp", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> square(Var<S> a) {
  Mat<S> out = a.value().array().square().matrix();
  Mat<S> lg = S(2) * a.value();
  return unary("square", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> relu(Var<S> a) {
  Mat<S> out = a.value().cwiseMax(S(0));
  Mat<S> lg = (a.value().array() > S(0)).template cast<S>().matrix();
  return unary("relu", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> gelu(Var<S> a) {
  const auto& x = a.value();
  const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
  const S inv_sqrt_2pi = S(1) / std::sqrt(S(2) * std::numbers::pi_v<S>);
  Mat<S> out(x.rows(), x.cols());
  Mat<S> lg(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const S v = x.data()[i];
    const S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
    out.data()[i] = v * cdf;
    lg.data()[i] = cdf + v * inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
  }
  return unary("gelu", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> xlogx(Var<S> a) {
  const auto& x = a.value();
  if ((x.array() < S(0)).any()) throw NumericError("xlogx: negative input");
  Mat<S> out(x.rows(), x.cols());
  Mat<S> lg(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const S v = x.data()[i];
    if (v > S(0)) {
      out.data()[i] = v * std::log(v);
      lg.data()[i] = std::log(v) + S(1);
    } else {
      out.data()[i] = S(0);
      lg.data()[i] = S(0);
    }
  }
  return unary("xlogx", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  const auto& x = a.value();
  Mat<S> out = x.cwiseMax(lo).cwiseMin(hi);
  Mat<S> lg = ((x.array() >= lo) && (x.array() <= hi)).template cast<S>().matrix();
  return unary("clamp", a, std::move(out), std::move(lg));
}

template <typename S>
Var<S> masked_fill(Var<S> a, const BoolMatrix& mask, S fill) {
  const BoolMatrix m = expand_mask(mask, a.rows(), a.cols());
  Mat<S> out = m.select(a.value().array(), fill).matrix();
  Mat<S> lg = m.template cast<S>().matrix();
  return unary("masked_fill", a, std::move(out), std::move(lg));
}

template <typename S>
Matrix<S> softmax_values(const Matrix<S>& a, Axis axis, const BoolMatrix& mask) {
  const BoolMatrix m = expand_mask(mask, a.rows(), a.cols());
  const bool by_row = axis == Axis::Cols;
  const Index slices = by_row ? a.rows() : a.cols();
  const Index len = by_row ? a.cols() : a.rows();
  Mat<S> out = Mat<S>::Zero(a.rows(), a.cols());
  for (Index s = 0; s < slices; ++s) {
    S mx = -std::numeric_limits<S>::infinity();
    bool any = false;
    for (Index k = 0; k < len; ++k) {
      const Index r = by_row ? s : k, c = by_row ? k : s;
      if (m(r, c)) {
        mx = std::max(mx, a(r, c));
        any = true;
      }
    }
    if (!any) throw Error("softmax: fully-masked slice at index " + std::to_string(s));
    S total = 0;
    for (Index k = 0; k < len; ++k) {
      const Index r = by_row ? s : k, c = by_row ? k : s;
      if (m(r, c)) {
        out(r, c) = std::exp(a(r, c) - mx);
        total += out(r, c);
      }
    }
    for (Index k = 0; k < len; ++k) {
      const Index r = by_row ? s : k, c = by_row ? k : s;
      out(r, c) /= total;
    }
  }
  return out;
}

template <typename S>
Var<S> softmax(Var<S> a, Axis axis, const BoolMatrix& mask) {
  Mat<S> y = softmax_values(a.value(), axis, mask);
  const int ai = a.id;
  return a.tape->record("softmax", y, {ai}, [=](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gy = g.cwiseProduct(y);
    if (axis == Axis::Cols) {
      Eigen::Matrix<S, Eigen::Dynamic, 1> dots = gy.rowwise().sum();
      t.accumulate(ai, gy - y.cwiseProduct(dots.replicate(1, y.cols())));
    } else {
      RowVector<S> dots = gy.colwise().sum();
      t.accumulate(ai, gy - y.cwiseProduct(dots.replicate(y.rows(), 1)));
    }
  });
}

template <typename S>
Var<S> log_softmax(Var<S> a, Axis axis, const BoolMatrix& mask) {
  const BoolMatrix m = expand_mask(mask, a.rows(), a.cols());
  Mat<S> p = softmax_values(a.value(), axis, m);
  // log p computed as (x - max) - log(sum) for stability
  const bool by_row = axis == Axis::Cols;
  const auto& x = a.value();
  Mat<S> out = Mat<S>::Zero(x.rows(), x.cols());
  const Index slices = by_row ? x.rows() : x.cols();
  const Index len = by_row ? x.cols() : x.rows();
  for (Index s = 0; s < slices; ++s) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Index k = 0; k < len; ++k) {
      const Index r = by_row ? s : k, c = by_row ? k : s;
      if (m(r, c)) mx = std::max(mx, x(r, c));
    }
    S total = 0;
    for (Index k = 0; k < len; ++k) {
      const Index r = by_row ? s : k, c = by_row ? k : s;
      if (m(r, c)) total += std::exp(x(r, c) - mx);
    }
    const S lse = std::log(total);
    for (Index k = 0; k < len; ++k) {
      const Index r = by_row ? s : k, c = by_row ? k : s;
      if (m(r, c)) out(r, c) = x(r, c) - mx - lse;
    }
  }
  const int ai = a.id;
  return a.tape->record("log_softmax", std::move(out), {ai}, [=](Tape<S>& t, const Mat<S>& g) {
    Mat<S> gm = m.select(g.array(), S(0)).matrix();
    if (axis == Axis::Cols) {
      Eigen::Matrix<S, Eigen::Dynamic, 1> sums = gm.rowwise().sum();
      t.accumulate(ai, gm - p.cwiseProduct(sums.replicate(1, p.cols())));
    } else {
      RowVector<S> sums = gm.colwise().sum();
      t.accumulate(ai, gm - p.cwiseProduct(sums.replicate(p.rows(), 1)));
    }
  });
}

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
  const auto& xv = x.value();
  const Index n = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != n) throw ShapeError("layer_norm", xv.rows(), n, gamma.rows(), gamma.cols());
  if (beta.rows() != 1 || beta.cols() != n) throw ShapeError("layer_norm", xv.rows(), n, beta.rows(), beta.cols());
  Eigen::Matrix<S, Eigen::Dynamic, 1> mu = xv.rowwise().mean();
  Mat<S> centered = xv - mu.replicate(1, n);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<S>(n)) + eps).rsqrt().matrix();
  Mat<S> xhat = centered.cwiseProduct(inv_std.replicate(1, n));
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Mat<S> out = (xhat.array().rowwise() * gv.array().row(0)).rowwise() + bv.array().row(0);
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return x.tape->record("layer_norm", std::move(out), {xi, gi, bi},
                        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<S>& t, const Mat<S>& g) {
                          if (t.requires_grad(bi)) t.accumulate(bi, g.colwise().sum());
                          if (t.requires_grad(gi)) t.accumulate(gi, g.cwiseProduct(xhat).colwise().sum());
                          if (t.requires_grad(xi)) {
                            const auto& gam = t.value({&t, gi});
                            Mat<S> dxhat = (g.array().rowwise() * gam.array().row(0)).matrix();
                            Eigen::Matrix<S, Eigen::Dynamic, 1> m1 = dxhat.rowwise().mean();
                            Eigen::Matrix<S, Eigen::Dynamic, 1> m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                            Mat<S> dx = dxhat - m1.replicate(1, n) - xhat.cwiseProduct(m2.replicate(1, n));
                            t.accumulate(xi, dx.cwiseProduct(inv_std.replicate(1, n)));
                          }
                        });
}

template <typename S>
Var<S> dropout(Var<S> x, S rate, bool training) {
  if (!training || rate <= S(0)) return x;
  if (rate >= S(1)) throw Error("dropout: rate must be < 1");
  auto& rng = x.tape->rng();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const S keep_scale = S(1) / (S(1) - rate);
  Mat<S> m(x.rows(), x.cols());
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng) < static_cast<double>(rate) ? S(0) : keep_scale;
  return unary("dropout", x, Mat<S>(x.value().cwiseProduct(m)), m);
}

template <typename S>
Var<S> gather_rows(Var<S> table, std::span<const int> ids) {
  const auto& tv = table.value();
  Mat<S> out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= tv.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[k]) + " out of range [0, " +
                       std::to_string(tv.rows()) + ")");
    }
    out.row(static_cast<Index>(k)) = tv.row(ids[k]);
  }
  const Index r = tv.rows(), c = tv.cols();
  const int ti = table.id;
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->record("gather_rows", std::move(out), {ti}, [=](Tape<S>& t, const Mat<S>& g) {
    Mat<S> full = Mat<S>::Zero(r, c);
    for (std::size_t k = 0; k < idv.size(); ++k) full.row(idv[k]) += g.row(static_cast<Index>(k));
    t.accumulate(ti, full);
  });
}

template <typename S>
Var<S> element(Var<S> a, Index r, Index c) {
  const auto& av = a.value();
  if (r < 0 || c < 0 || r >= av.rows() || c >= av.cols()) {
    throw ShapeError("element: (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                     ShapeError::shape_string(av.rows(), av.cols()));
  }
  Mat<S> out(1, 1);
  out(0, 0) = av(r, c);
  const Index rows = av.rows(), cols = av.cols();
  const int ai = a.id;
  return a.tape->record("element", std::move(out), {ai}, [=](Tape<S>& t, const Mat<S>& g) {
    Mat<S> full = Mat<S>::Zero(rows, cols);
    full(r, c) = g(0, 0);
    t.accumulate(ai, full);
  });
}

template <typename S>
Var<S> detach(Var<S> a) {
  return a.tape->constant(a.tape->detached_value(a.value()));
}

#define XMRC_INSTANTIATE_OPS(S)                                                   \
  template Var<S> add(Var<S>, Var<S>);                                            \
  template Var<S> sub(Var<S>, Var<S>);                                            \
  template Var<S> mul(Var<S>, Var<S>);                                            \
  template Var<S> div(Var<S>, Var<S>);                                            \
  template Var<S> scale(Var<S>, S);                                               \
  template Var<S> add_scalar(Var<S>, S);                                          \
  template Var<S> matmul(Var<S>, Var<S>);                                         \
  template Var<S> matmul_nt(Var<S>, Var<S>);                                      \
  template Var<S> transpose(Var<S>);                                              \
  template Var<S> concat(std::span<const Var<S>>, Axis);                          \
  template Var<S> slice(Var<S>, Axis, Index, Index);                              \
  template Var<S> sum(Var<S>, Axis);                                              \
  template Var<S> mean(Var<S>, Axis);                                             \
  template Var<S> sum_all(Var<S>);                                                \
  template Var<S> mean_all(Var<S>);                                               \
  template Var<S> sqrt(Var<S>);                                                   \
  template Var<S> log(Var<S>);                                                    \
  template Var<S> exp(Var<S>);                                                    \
  template Var<S> square(Var<S>);                                                 \
  template Var<S> relu(Var<S>);                                                   \
  template Var<S> gelu(Var<S>);                                                   \
  template Var<S> xlogx(Var<S>);                                                  \
  template Var<S> clamp(Var<S>, S, S);                                            \
  template Var<S> masked_fill(Var<S>, const BoolMatrix&, S);                      \
  template Matrix<S> softmax_values(const Matrix<S>&, Axis, const BoolMatrix&);   \
  template Var<S> softmax(Var<S>, Axis, const BoolMatrix&);                       \
  template Var<S> log_softmax(Var<S>, Axis, const BoolMatrix&);                   \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                          \
  template Var<S> dropout(Var<S>, S, bool);                                       \
  template Var<S> gather_rows(Var<S>, std::span<const int>);                      \
  template Var<S> element(Var<S>, Index, Index);                                  \
  template Var<S> detach(Var<S>);

XMRC_INSTANTIATE_OPS(float)
XMRC_INSTANTIATE_OPS(double)

}  // namespace xmrc
