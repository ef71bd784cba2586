#include "xmrc/calibration.hpp"

namespace xmrc {

namespace {
constexpr double kProbFloor = 1e-12;
}

template <typename S>
NormStats<S> NormStats<S>::init(int hidden, double momentum, double epsilon) {
  NormStats s;
  s.running_mean = RowVector<S>::Zero(hidden);
  s.running_var = RowVector<S>::Ones(hidden);
  s.momentum = static_cast<S>(momentum);
  s.epsilon = static_cast<S>(epsilon);
  return s;
}

template <typename S>
void NormStats<S>::update(const RowVector<S>& batch_mean, const RowVector<S>& batch_var) {
  if ((batch_var.array() < S(0)).any()) throw NumericError("normalize: negative variance");
  running_mean = momentum * running_mean + (S(1) - momentum) * batch_mean;
  running_var = momentum * running_var + (S(1) - momentum) * batch_var;
  ++count;
}

template <typename S>
Var<S> normalize(Var<S> h, NormStats<S>& stats, NormMode mode, bool update_stats) {
  if (h.cols() != stats.running_mean.cols()) {
    throw ShapeError("normalize", h.rows(), h.cols(), 1, stats.running_mean.cols());
  }
  Tape<S>& tape = *h.tape;
  if (mode == NormMode::Infer) {
    Var<S> mu = tape.constant(stats.running_mean);
    Var<S> denom = tape.constant((stats.running_var.array() + stats.epsilon).sqrt().matrix());
    return div(sub(h, mu), denom);
  }
  if (h.rows() < 2) throw Error("normalize: train mode needs at least 2 token rows, got " + std::to_string(h.rows()));
  Var<S> mu = mean(h, Axis::Rows);
  Var<S> centered = sub(h, mu);
  Var<S> var = mean(square(centered), Axis::Rows);
  if ((var.value().array() < S(0)).any()) throw NumericError("normalize: negative variance");
  Var<S> out = div(centered, sqrt(add_scalar(var, stats.epsilon)));
  if (update_stats) stats.update(mu.value(), var.value());
  return out;
}

template <typename S>
TransferParams<S> TransferParams<S>::init(int hidden, int heads, std::mt19937_64& rng) {
  TransferParams p;
  p.wq = Parameter<S>("transfer.wq", glorot<S>(hidden, hidden, rng));
  p.wk = Parameter<S>("transfer.wk", glorot<S>(hidden, hidden, rng));
  p.heads = heads;
  return p;
}

template <typename S>
void TransferParams<S>::collect(std::vector<Parameter<S>*>& out) {
  out.push_back(&wq);
  out.push_back(&wk);
}

template <typename S>
TransferResult<S> attentive_transfer(ParamBinding<S>& bind, TransferParams<S>& p, Var<S> target_states,
                                     Var<S> source_states, Var<S> source_distribution, const BoolMatrix& key_mask,
                                     bool renormalize) {
  if (source_distribution.rows() != source_states.rows()) {
    throw ShapeError("attentive_transfer", source_states.rows(), source_states.cols(), source_distribution.rows(),
                     source_distribution.cols());
  }
  Var<S> q = matmul(target_states, bind(p.wq));
  Var<S> k = matmul(source_states, bind(p.wk));
  Var<S> v = detach(source_distribution);
  AttentionResult<S> att = scaled_dot_attention(q, k, v, key_mask, p.heads, HeadCombine::Average);
  Var<S> out = att.output;
  if (renormalize) out = div(out, sum(out, Axis::Rows));
  return {out, std::move(att)};
}

template <typename S>
Var<S> span_nll(Var<S> p, Index start, Index end, const BoolMatrix& mask) {
  if (p.cols() != 2) throw ShapeError("span_nll", p.rows(), p.cols(), p.rows(), 2);
  const BoolMatrix m = expand_mask(mask, 1, p.rows());
  for (Index idx : {start, end}) {
    if (idx < 0 || idx >= p.rows() || !m(0, idx)) {
      throw Error("span loss: label position " + std::to_string(idx) + " outside the valid sequence of length " +
                  std::to_string(p.rows()));
    }
  }
  const S floor = static_cast<S>(kProbFloor);
  Var<S> ls = log(clamp(element(p, start, 0), floor, S(1)));
  Var<S> le = log(clamp(element(p, end, 1), floor, S(1)));
  return scale(add(ls, le), S(-1));
}

template <typename S>
Var<S> teacher_guided_loss(Var<S> transferred, Index start, Index end, const BoolMatrix& mask) {
  return span_nll(transferred, start, end, mask);
}

template <typename S>
Matrix<S> calibrate(const Matrix<S>& transferred, const Matrix<S>& target) {
  if (transferred.rows() != target.rows() || transferred.cols() != target.cols()) {
    throw ShapeError("calibrate", transferred.rows(), transferred.cols(), target.rows(), target.cols());
  }
  return (transferred + target) / S(2);
}

#define XMRC_INSTANTIATE_CALIBRATION(S)                                                                      \
  template struct NormStats<S>;                                                                              \
  template struct TransferParams<S>;                                                                         \
  template Var<S> normalize(Var<S>, NormStats<S>&, NormMode, bool);                                          \
  template TransferResult<S> attentive_transfer(ParamBinding<S>&, TransferParams<S>&, Var<S>, Var<S>, Var<S>, \
                                                const BoolMatrix&, bool);                                    \
  template Var<S> span_nll(Var<S>, Index, Index, const BoolMatrix&);                                         \
  template Var<S> teacher_guided_loss(Var<S>, Index, Index, const BoolMatrix&);                              \
  template Matrix<S> calibrate(const Matrix<S>&, const Matrix<S>&);

XMRC_INSTANTIATE_CALIBRATION(float)
XMRC_INSTANTIATE_CALIBRATION(double)

}  // namespace xmrc
