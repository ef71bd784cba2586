#pragma once

#include "xmrc/attention.hpp"
#include "xmrc/config.hpp"
#include "xmrc/knowledge_sharing.hpp"

#include <span>
#include <vector>

namespace xmrc {

template <typename S>
struct EncoderLayerParams {
  AttentionParams<S> attention;
  Parameter<S> norm1_gamma, norm1_beta;
  Parameter<S> ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
  Parameter<S> norm2_gamma, norm2_beta;

  static EncoderLayerParams init(const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng);
  void collect(std::vector<Parameter<S>*>& out);
};

template <typename S>
struct EncoderParams {
  Parameter<S> token_embedding;     ///< vocab x n
  Parameter<S> position_embedding;  ///< max_seq_len x n
  std::vector<EncoderLayerParams<S>> layers;

  static EncoderParams init(const ModelConfig& config, std::mt19937_64& rng);
  void collect(std::vector<Parameter<S>*>& out);
};

/// Token + learned position embedding, then dropout in training mode.
template <typename S>
Var<S> embed(ParamBinding<S>& bind, EncoderParams<S>& p, std::span<const int> token_ids, const ModelConfig& config,
             bool training);

/// Post-norm transformer block. When `attention_output` is given it stands in
/// for the block's self-attention sublayer.
template <typename S>
Var<S> encoder_layer(ParamBinding<S>& bind, EncoderLayerParams<S>& p, Var<S> h, const BoolMatrix& mask,
                     const ModelConfig& config, bool training, std::optional<Var<S>> attention_output = std::nullopt);

template <typename S>
struct BranchState {
  std::vector<Var<S>> hidden;  ///< h^0 .. h^L, each N x n
  BoolMatrix mask;             ///< 1 x N

  Var<S> final() const { return hidden.back(); }
};

template <typename S>
struct EncoderState {
  BranchState<S> source;
  BranchState<S> target;
  bool same_language = false;
  /// Fusion-layer inputs: h_T at the sharing layer and the shared source states.
  Var<S> sharing_query;
  Var<S> sharing_source;
  /// Cross-attention of the fusion block (per head and head-averaged).
  AttentionResult<S> sharing_attention;
  Var<S> lambda;
};

/// Graph-building context for one forward pass. Source and target branches
/// bind parameters separately so each branch's gradient can be inspected.
template <typename S>
struct ForwardContext {
  Tape<S>& tape;
  ParamBinding<S> source;
  ParamBinding<S> target;
  bool training = false;

  ForwardContext(Tape<S>& t, bool train, bool trainable)
      : tape(t), source(t, trainable), target(t, trainable), training(train) {}
};

/// Runs the source branch through all vanilla layers and the target branch
/// through the same layers except the sharing layer, where the target fuses
/// source states. `options.training`/dropout are taken from the context.
template <typename S>
EncoderState<S> encode_pair(ForwardContext<S>& ctx, EncoderParams<S>& encoder, SharingParams<S>& sharing,
                            const ModelConfig& config, std::span<const int> source_ids,
                            std::span<const int> target_ids, bool same_language, SharingOptions options);

/// Source branch only (vanilla encoder).
template <typename S>
BranchState<S> encode_single(ParamBinding<S>& bind, EncoderParams<S>& encoder, const ModelConfig& config,
                             std::span<const int> ids, bool training);

}  // namespace xmrc
