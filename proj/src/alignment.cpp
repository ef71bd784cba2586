#include "xmrc/alignment.hpp"

#include <cmath>
#include <iostream>

namespace xmrc {

template <typename S>
Var<S> sentence_repr(Var<S> h, const BoolMatrix& mask) {
  const BoolMatrix m = expand_mask(mask, 1, h.rows());
  const Index valid = m.count();
  if (valid == 0) throw Error("sentence_repr: no unmasked tokens");
  if (valid == h.rows()) return mean(h, Axis::Rows);
  Matrix<S> weights = Matrix<S>::Zero(1, h.rows());
  for (Index j = 0; j < h.rows(); ++j) {
    if (m(0, j)) weights(0, j) = S(1) / static_cast<S>(valid);
  }
  return matmul(h.tape->constant(std::move(weights)), h);
}

namespace {

template <typename S>
Var<S> unit_rows(Var<S> x) {
  const auto norms = x.value().rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > S(0))) throw NumericError("contrastive_loss: zero-norm representation at row " + std::to_string(i));
  }
  return div(x, sqrt(sum(square(x), Axis::Cols)));
}

}  // namespace

template <typename S>
std::optional<Var<S>> contrastive_loss(Var<S> anchors, Var<S> positives, const std::vector<bool>& is_anchor,
                                       const AlignmentConfig& config) {
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
    throw ShapeError("contrastive_loss", anchors.rows(), anchors.cols(), positives.rows(), positives.cols());
  }
  if (static_cast<Index>(is_anchor.size()) != anchors.rows()) throw Error("contrastive_loss: anchor flags size");
  if (config.tau <= 0.0) throw Error("contrastive_loss: tau must be > 0");
  const Index batch = anchors.rows();
  std::vector<Index> rows;
  for (Index i = 0; i < batch; ++i) {
    if (is_anchor[i]) rows.push_back(i);
  }
  if (rows.empty()) return std::nullopt;
  if (batch < 2) {
    std::cerr << "warning: contrastive_loss with batch size " << batch << " has no negatives; using 0\n";
    return anchors.tape->constant(Matrix<S>::Zero(1, 1));
  }

  const S inv_tau = static_cast<S>(1.0 / config.tau);
  Var<S> a = unit_rows(anchors);
  Var<S> p = unit_rows(positives);
  Var<S> logits = scale(matmul_nt(a, p), inv_tau);
  BoolMatrix mask = BoolMatrix::Constant(batch, batch, true);
  if (config.negatives_scope == NegativesScope::BothSides) {
    Var<S> self = scale(matmul_nt(a, a), inv_tau);
    const Var<S> parts[] = {logits, self};
    logits = concat<S>(parts, Axis::Cols);
    mask = BoolMatrix::Constant(batch, 2 * batch, true);
    for (Index i = 0; i < batch; ++i) mask(i, batch + i) = false;
  }
  Var<S> logp = log_softmax(logits, Axis::Cols, mask);
  Var<S> total;
  for (Index i : rows) {
    Var<S> term = element(logp, i, i);
    total = total.valid() ? add(total, term) : term;
  }
  return scale(total, S(-1) / static_cast<S>(rows.size()));
}

template <typename S>
Var<S> cross_attention_weights(Var<S> target, Var<S> source, const BoolMatrix& source_mask) {
  if (target.cols() != source.cols()) {
    throw ShapeError("cross_attention_weights", target.rows(), target.cols(), source.rows(), source.cols());
  }
  const BoolMatrix m = expand_mask(source_mask, 1, source.rows());
  if (m.count() == 0) throw Error("eca_loss: no unmasked source tokens");
  const S inv = S(1) / std::sqrt(static_cast<S>(target.cols()));
  return softmax(scale(matmul_nt(target, source), inv), Axis::Cols, m);
}

template <typename S>
Var<S> attention_entropy(Var<S> attention) {
  if (attention.rows() == 0) throw Error("attention_entropy: no target tokens");
  return scale(sum_all(xlogx(attention)), S(-1) / static_cast<S>(attention.rows()));
}

template <typename S>
Var<S> eca_loss(Var<S> target, Var<S> source, const BoolMatrix& source_mask) {
  return attention_entropy(cross_attention_weights(target, source, source_mask));
}

template <typename S>
std::optional<Var<S>> align_loss(std::optional<Var<S>> sentence_term, std::optional<Var<S>> token_term,
                                 const AlignmentConfig& config) {
  std::optional<Var<S>> total;
  if (sentence_term) total = scale(*sentence_term, static_cast<S>(config.sigma_s));
  if (token_term) {
    Var<S> t = scale(*token_term, static_cast<S>(config.eta_t));
    total = total ? add(*total, t) : t;
  }
  return total;
}

#define XMRC_INSTANTIATE_ALIGNMENT(S)                                                                               \
  template Var<S> sentence_repr(Var<S>, const BoolMatrix&);                                                         \
  template std::optional<Var<S>> contrastive_loss(Var<S>, Var<S>, const std::vector<bool>&, const AlignmentConfig&); \
  template Var<S> cross_attention_weights(Var<S>, Var<S>, const BoolMatrix&);                                      \
  template Var<S> attention_entropy(Var<S>);                                                                        \
  template Var<S> eca_loss(Var<S>, Var<S>, const BoolMatrix&);                                                      \
  template std::optional<Var<S>> align_loss(std::optional<Var<S>>, std::optional<Var<S>>, const AlignmentConfig&);

XMRC_INSTANTIATE_ALIGNMENT(float)
XMRC_INSTANTIATE_ALIGNMENT(double)

}  // namespace xmrc
