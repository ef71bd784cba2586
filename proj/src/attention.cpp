#include "xmrc/attention.hpp"

#include <cmath>

namespace xmrc {

template <typename S>
Matrix<S> glorot(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix<S> m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
  return m;
}

template <typename S>
Matrix<S> normal(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix<S> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(n(rng));
  return m;
}

template <typename S>
AttentionParams<S> AttentionParams<S>::init(const std::string& prefix, int hidden, std::mt19937_64& rng) {
  auto zeros = [&](const char* name) { return Parameter<S>(prefix + name, Matrix<S>::Zero(1, hidden)); };
  AttentionParams p;
  p.wq = Parameter<S>(prefix + "wq", glorot<S>(hidden, hidden, rng));
  p.bq = zeros("bq");
  p.wk = Parameter<S>(prefix + "wk", glorot<S>(hidden, hidden, rng));
  p.wv = Parameter<S>(prefix + "wv", glorot<S>(hidden, hidden, rng));
  p.bv = zeros("bv");
  p.wo = Parameter<S>(prefix + "wo", glorot<S>(hidden, hidden, rng));
  p.bo = zeros("bo");
  return p;
}

template <typename S>
void AttentionParams<S>::collect(std::vector<Parameter<S>*>& out) {
  for (auto* p : {&wq, &bq, &wk, &wv, &bv, &wo, &bo}) out.push_back(p);
}

template <typename S>
Matrix<S> AttentionResult<S>::mean_weights() const {
  Matrix<S> m = weights.front().value();
  for (std::size_t h = 1; h < weights.size(); ++h) m += weights[h].value();
  return m / static_cast<S>(weights.size());
}

template <typename S>
Var<S> AttentionResult<S>::mean_weights_var() const {
  Var<S> m = weights.front();
  for (std::size_t h = 1; h < weights.size(); ++h) m = add(m, weights[h]);
  return weights.size() == 1 ? m : scale(m, S(1) / static_cast<S>(weights.size()));
}

template <typename S>
AttentionResult<S> scaled_dot_attention(Var<S> q, Var<S> k, Var<S> v, const BoolMatrix& key_mask, int heads,
                                        HeadCombine combine) {
  if (heads <= 0 || q.cols() % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  if (q.cols() != k.cols()) throw ShapeError("attention(q,k)", q.rows(), q.cols(), k.rows(), k.cols());
  if (k.rows() != v.rows()) throw ShapeError("attention(k,v)", k.rows(), k.cols(), v.rows(), v.cols());
  if (combine == HeadCombine::Concat && v.cols() % heads != 0) {
    throw ShapeError("attention: value width " + std::to_string(v.cols()) + " not divisible by heads");
  }
  if (key_mask.size() != 0 && !key_mask.any()) throw Error("attention: all keys are masked");

  const Index d = q.cols() / heads;
  const Index dv = combine == HeadCombine::Concat ? v.cols() / heads : v.cols();
  const S inv_scale = S(1) / std::sqrt(static_cast<S>(d));
  AttentionResult<S> result;
  std::vector<Var<S>> outputs;
  for (int h = 0; h < heads; ++h) {
    Var<S> qh = heads == 1 ? q : slice(q, Axis::Cols, h * d, d);
    Var<S> kh = heads == 1 ? k : slice(k, Axis::Cols, h * d, d);
    Var<S> vh = (combine == HeadCombine::Average || heads == 1) ? v : slice(v, Axis::Cols, h * dv, dv);
    Var<S> a = softmax(scale(matmul_nt(qh, kh), inv_scale), Axis::Cols, key_mask);
    result.weights.push_back(a);
    outputs.push_back(matmul(a, vh));
  }
  if (heads == 1) {
    result.output = outputs.front();
  } else if (combine == HeadCombine::Concat) {
    result.output = concat<S>(outputs, Axis::Cols);
  } else {
    Var<S> acc = outputs.front();
    for (std::size_t h = 1; h < outputs.size(); ++h) acc = add(acc, outputs[h]);
    result.output = scale(acc, S(1) / static_cast<S>(heads));
  }
  return result;
}

template <typename S>
AttentionResult<S> multi_head_attention(ParamBinding<S>& bind, AttentionParams<S>& p, Var<S> query, Var<S> key,
                                        Var<S> value, const BoolMatrix& key_mask, int heads) {
  Var<S> q = linear(bind, p.wq, p.bq, query);
  Var<S> k = matmul(key, bind(p.wk));
  Var<S> v = linear(bind, p.wv, p.bv, value);
  AttentionResult<S> r = scaled_dot_attention(q, k, v, key_mask, heads, HeadCombine::Concat);
  r.output = linear(bind, p.wo, p.bo, r.output);
  return r;
}

#define XMRC_INSTANTIATE_ATTENTION(S)                                                                            \
  template Matrix<S> glorot<S>(Index, Index, std::mt19937_64&);                                                  \
  template Matrix<S> normal<S>(Index, Index, double, std::mt19937_64&);                                          \
  template struct AttentionParams<S>;                                                                            \
  template struct AttentionResult<S>;                                                                            \
  template AttentionResult<S> scaled_dot_attention(Var<S>, Var<S>, Var<S>, const BoolMatrix&, int, HeadCombine); \
  template AttentionResult<S> multi_head_attention(ParamBinding<S>&, AttentionParams<S>&, Var<S>, Var<S>, Var<S>, \
                                                   const BoolMatrix&, int);

XMRC_INSTANTIATE_ATTENTION(float)
XMRC_INSTANTIATE_ATTENTION(double)

}  // namespace xmrc
