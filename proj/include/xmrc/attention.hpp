#pragma once

#include "xmrc/ops.hpp"

#include <random>
#include <vector>

namespace xmrc {

/// Projections of one multi-head attention block (weights are in x out).
/// Keys carry no bias: softmax over keys is invariant to it.
template <typename S>
struct AttentionParams {
  Parameter<S> wq, bq, wk, wv, bv, wo, bo;

  static AttentionParams init(const std::string& prefix, int hidden, std::mt19937_64& rng);
  void collect(std::vector<Parameter<S>*>& out);
};

enum class HeadCombine {
  Concat,   ///< value columns are split across heads, outputs concatenated
  Average,  ///< every head reads all value columns, outputs averaged
};

template <typename S>
struct AttentionResult {
  Var<S> output;
  std::vector<Var<S>> weights;  ///< one N_q x N_k matrix per head

  /// Head-averaged weights.
  Matrix<S> mean_weights() const;
  Var<S> mean_weights_var() const;
};

/// Scaled dot-product attention with `heads` heads; each head's scores are
/// scaled by 1/sqrt(q.cols() / heads). `key_mask` is 1 x N_k (or empty).
template <typename S>
AttentionResult<S> scaled_dot_attention(Var<S> q, Var<S> k, Var<S> v, const BoolMatrix& key_mask, int heads,
                                        HeadCombine combine = HeadCombine::Concat);

/// Projected multi-head attention: softmax((qWq)(kWk)^T / sqrt(d)) (vWv), then Wo.
template <typename S>
AttentionResult<S> multi_head_attention(ParamBinding<S>& bind, AttentionParams<S>& p, Var<S> query, Var<S> key,
                                        Var<S> value, const BoolMatrix& key_mask, int heads);

/// x W + b with b broadcast over rows.
template <typename S>
Var<S> linear(ParamBinding<S>& bind, Parameter<S>& w, Parameter<S>& b, Var<S> x) {
  return add(matmul(x, bind(w)), bind(b));
}

/// Glorot-uniform fan_in x fan_out matrix.
template <typename S>
Matrix<S> glorot(Index fan_in, Index fan_out, std::mt19937_64& rng);
template <typename S>
Matrix<S> normal(Index rows, Index cols, double stddev, std::mt19937_64& rng);

}  // namespace xmrc
