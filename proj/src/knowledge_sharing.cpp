#include "xmrc/knowledge_sharing.hpp"

namespace xmrc {

template <typename S>
SharingParams<S> SharingParams<S>::init(const ModelConfig& config, double lambda0, std::mt19937_64& rng) {
  const int n = config.hidden_size;
  const int in = config.correction_input == CorrectionInput::SourceAndTarget ? 2 * n : n;
  SharingParams p;
  p.correction_w = Parameter<S>("share.correction_w", Matrix<S>::Zero(in, n));
  p.correction_b = Parameter<S>("share.correction_b", Matrix<S>::Zero(1, n));
  p.lambda_w = Parameter<S>("share.lambda_w", Matrix<S>::Ones(1, 1));
  p.lambda_b = Parameter<S>("share.lambda_b", Matrix<S>::Zero(1, 1));
  p.cross = AttentionParams<S>::init("share.cross.", n, rng);
  p.lambda0 = static_cast<S>(lambda0);
  return p;
}

template <typename S>
void SharingParams<S>::collect(std::vector<Parameter<S>*>& out) {
  for (auto* q : {&correction_w, &correction_b, &lambda_w, &lambda_b}) out.push_back(q);
  cross.collect(out);
}

template <typename S>
Var<S> transform_source(ParamBinding<S>& bind, SharingParams<S>& p, Var<S> source, Var<S> target, bool same_language,
                        const SharingOptions& options) {
  if (same_language || !options.disentangle) return source;
  Var<S> hs = detach(source);
  Var<S> input = hs;
  if (options.correction_input == CorrectionInput::SourceAndTarget) {
    Var<S> context = mean(detach(target), Axis::Rows);  // 1 x n
    Matrix<S> ones = Matrix<S>::Ones(hs.rows(), 1);
    Var<S> tiled = matmul(hs.tape->constant(std::move(ones)), context);
    const Var<S> parts[] = {hs, tiled};
    input = concat<S>(parts, Axis::Cols);
  }
  if (p.correction_w.value.rows() != input.cols()) {
    throw ShapeError("correction", input.rows(), input.cols(), p.correction_w.value.rows(), p.correction_w.value.cols());
  }
  Var<S> correction = dropout(linear(bind, p.correction_w, p.correction_b, input), static_cast<S>(options.dropout_rate),
                              options.training);
  return add(hs, correction);
}

template <typename S>
Var<S> lambda_value(ParamBinding<S>& bind, SharingParams<S>& p, const SharingOptions& options) {
  Tape<S>& tape = bind.tape();
  if (options.lambda_override) {
    return tape.constant(Matrix<S>::Constant(1, 1, static_cast<S>(*options.lambda_override)));
  }
  Var<S> raw = add(scale(bind(p.lambda_w), p.lambda0), bind(p.lambda_b));
  return clamp(raw, S(0), S(1));
}

template <typename S>
FusionResult<S> fuse(ParamBinding<S>& bind, SharingParams<S>& p, AttentionParams<S>& self_attention, Var<S> target,
                     Var<S> shared_source, const BoolMatrix& target_mask, const BoolMatrix& source_mask, int heads,
                     const SharingOptions& options) {
  AttentionResult<S> cross = multi_head_attention(bind, p.cross, target, shared_source, shared_source, source_mask, heads);
  AttentionResult<S> self = multi_head_attention(bind, self_attention, target, target, target, target_mask, heads);
  Var<S> lambda = lambda_value(bind, p, options);
  Var<S> keep = add_scalar(scale(lambda, S(-1)), S(1));
  Var<S> out = add(mul(cross.output, keep), mul(self.output, lambda));
  return {out, std::move(cross), lambda};
}

#define XMRC_INSTANTIATE_SHARING(S)                                                                                  \
  template struct SharingParams<S>;                                                                                  \
  template Var<S> transform_source(ParamBinding<S>&, SharingParams<S>&, Var<S>, Var<S>, bool, const SharingOptions&); \
  template Var<S> lambda_value(ParamBinding<S>&, SharingParams<S>&, const SharingOptions&);                          \
  template FusionResult<S> fuse(ParamBinding<S>&, SharingParams<S>&, AttentionParams<S>&, Var<S>, Var<S>,            \
                                const BoolMatrix&, const BoolMatrix&, int, const SharingOptions&);

XMRC_INSTANTIATE_SHARING(float)
XMRC_INSTANTIATE_SHARING(double)

}  // namespace xmrc
