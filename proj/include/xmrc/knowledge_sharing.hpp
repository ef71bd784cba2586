#pragma once

// Cross-lingual knowledge sharing at one encoder layer: the target branch
// attends to source states whose gradient is cut, plus a trainable additive
// correction, and mixes the result with its own self-attention.

#include "xmrc/attention.hpp"
#include "xmrc/config.hpp"

#include <optional>

namespace xmrc {

template <typename S>
struct SharingParams {
  Parameter<S> correction_w;  ///< (2n or n) x n, zero-initialized
  Parameter<S> correction_b;  ///< 1 x n, zero-initialized
  Parameter<S> lambda_w;      ///< 1 x 1
  Parameter<S> lambda_b;      ///< 1 x 1
  AttentionParams<S> cross;   ///< target -> source attention
  S lambda0 = S(0.3);

  static SharingParams init(const ModelConfig& config, double lambda0, std::mt19937_64& rng);
  void collect(std::vector<Parameter<S>*>& out);
};

struct SharingOptions {
  /// false reproduces plain cross-attention: no stop-gradient, no correction.
  bool disentangle = true;
  std::optional<double> lambda_override;
  CorrectionInput correction_input = CorrectionInput::SourceAndTarget;
  double dropout_rate = 0.0;
  bool training = false;
};

/// Source states as seen by the target branch. For a same-language pair the
/// states pass through untouched; otherwise sg(h_S) + f(sg(h_S), sg(h_T)).
template <typename S>
Var<S> transform_source(ParamBinding<S>& bind, SharingParams<S>& p, Var<S> source, Var<S> target, bool same_language,
                        const SharingOptions& options);

/// clamp(w * lambda0 + b, 0, 1), or the override as a constant.
template <typename S>
Var<S> lambda_value(ParamBinding<S>& bind, SharingParams<S>& p, const SharingOptions& options);

template <typename S>
struct FusionResult {
  Var<S> output;                ///< N_T x n
  AttentionResult<S> cross;     ///< target -> source attention
  Var<S> lambda;
};

/// (1 - lambda) * cross_mha(h_T, h~_S, h~_S) + lambda * self_mha(h_T, h_T, h_T).
/// `self_attention` is the attention block of the host layer.
template <typename S>
FusionResult<S> fuse(ParamBinding<S>& bind, SharingParams<S>& p, AttentionParams<S>& self_attention, Var<S> target,
                     Var<S> shared_source, const BoolMatrix& target_mask, const BoolMatrix& source_mask, int heads,
                     const SharingOptions& options);

}  // namespace xmrc
