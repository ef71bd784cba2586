#include "xmrc/encoder.hpp"

namespace xmrc {

template <typename S>
EncoderLayerParams<S> EncoderLayerParams<S>::init(const std::string& prefix, const ModelConfig& config,
                                                  std::mt19937_64& rng) {
  const int n = config.hidden_size;
  const int f = config.ffn_size;
  EncoderLayerParams p;
  p.attention = AttentionParams<S>::init(prefix + "attn.", n, rng);
  p.norm1_gamma = Parameter<S>(prefix + "norm1_gamma", Matrix<S>::Ones(1, n));
  p.norm1_beta = Parameter<S>(prefix + "norm1_beta", Matrix<S>::Zero(1, n));
  p.ffn_in_w = Parameter<S>(prefix + "ffn_in_w", glorot<S>(n, f, rng));
  p.ffn_in_b = Parameter<S>(prefix + "ffn_in_b", Matrix<S>::Zero(1, f));
  p.ffn_out_w = Parameter<S>(prefix + "ffn_out_w", glorot<S>(f, n, rng));
  p.ffn_out_b = Parameter<S>(prefix + "ffn_out_b", Matrix<S>::Zero(1, n));
  p.norm2_gamma = Parameter<S>(prefix + "norm2_gamma", Matrix<S>::Ones(1, n));
  p.norm2_beta = Parameter<S>(prefix + "norm2_beta", Matrix<S>::Zero(1, n));
  return p;
}

template <typename S>
void EncoderLayerParams<S>::collect(std::vector<Parameter<S>*>& out) {
  attention.collect(out);
  for (auto* p : {&norm1_gamma, &norm1_beta, &ffn_in_w, &ffn_in_b, &ffn_out_w, &ffn_out_b, &norm2_gamma, &norm2_beta}) {
    out.push_back(p);
  }
}

template <typename S>
EncoderParams<S> EncoderParams<S>::init(const ModelConfig& config, std::mt19937_64& rng) {
  const int n = config.hidden_size;
  EncoderParams p;
  p.token_embedding = Parameter<S>("enc.token_embedding", normal<S>(config.vocab_size, n, 1.0, rng));
  p.position_embedding = Parameter<S>("enc.position_embedding", normal<S>(config.max_seq_len, n, 1.0, rng));
  for (int l = 0; l < config.num_layers; ++l) {
    p.layers.push_back(EncoderLayerParams<S>::init("enc.layer" + std::to_string(l) + ".", config, rng));
  }
  return p;
}

template <typename S>
void EncoderParams<S>::collect(std::vector<Parameter<S>*>& out) {
  out.push_back(&token_embedding);
  out.push_back(&position_embedding);
  for (auto& l : layers) l.collect(out);
}

template <typename S>
Var<S> embed(ParamBinding<S>& bind, EncoderParams<S>& p, std::span<const int> token_ids, const ModelConfig& config,
             bool training) {
  const auto n = static_cast<int>(token_ids.size());
  if (n == 0) throw Error("embed: empty input");
  if (n > config.max_seq_len) {
    throw Error("embed: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                std::to_string(config.max_seq_len));
  }
  for (int id : token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw Error("embed: token id " + std::to_string(id) + " outside vocabulary of size " +
                  std::to_string(config.vocab_size));
    }
  }
  std::vector<int> positions(token_ids.size());
  for (int i = 0; i < n; ++i) positions[i] = i;
  Var<S> h = add(gather_rows(bind(p.token_embedding), token_ids),
                 gather_rows<S>(bind(p.position_embedding), positions));
  return dropout(h, static_cast<S>(config.dropout_rate), training);
}

template <typename S>
Var<S> encoder_layer(ParamBinding<S>& bind, EncoderLayerParams<S>& p, Var<S> h, const BoolMatrix& mask,
                     const ModelConfig& config, bool training, std::optional<Var<S>> attention_output) {
  const S rate = static_cast<S>(config.dropout_rate);
  const S eps = static_cast<S>(config.layer_norm_eps);
  Var<S> attn = attention_output
                    ? *attention_output
                    : multi_head_attention(bind, p.attention, h, h, h, mask, config.num_heads).output;
  Var<S> h1 = layer_norm(add(h, dropout(attn, rate, training)), bind(p.norm1_gamma), bind(p.norm1_beta), eps);
  Var<S> ff = linear(bind, p.ffn_out_w, p.ffn_out_b, gelu(linear(bind, p.ffn_in_w, p.ffn_in_b, h1)));
  return layer_norm(add(h1, dropout(ff, rate, training)), bind(p.norm2_gamma), bind(p.norm2_beta), eps);
}

template <typename S>
BranchState<S> encode_single(ParamBinding<S>& bind, EncoderParams<S>& encoder, const ModelConfig& config,
                             std::span<const int> ids, bool training) {
  BranchState<S> b;
  b.mask = BoolMatrix::Constant(1, static_cast<Index>(ids.size()), true);
  b.hidden.push_back(embed(bind, encoder, ids, config, training));
  for (int l = 0; l < config.num_layers; ++l) {
    b.hidden.push_back(encoder_layer(bind, encoder.layers[l], b.hidden.back(), b.mask, config, training));
  }
  return b;
}

template <typename S>
EncoderState<S> encode_pair(ForwardContext<S>& ctx, EncoderParams<S>& encoder, SharingParams<S>& sharing,
                            const ModelConfig& config, std::span<const int> source_ids,
                            std::span<const int> target_ids, bool same_language, SharingOptions options) {
  options.training = ctx.training;
  options.dropout_rate = config.dropout_rate;
  options.correction_input = config.correction_input;

  EncoderState<S> state;
  state.same_language = same_language;
  state.source = encode_single(ctx.source, encoder, config, source_ids, ctx.training);

  BranchState<S>& t = state.target;
  t.mask = BoolMatrix::Constant(1, static_cast<Index>(target_ids.size()), true);
  t.hidden.push_back(embed(ctx.target, encoder, target_ids, config, ctx.training));
  for (int l = 0; l < config.num_layers; ++l) {
    Var<S> h = t.hidden.back();
    if (l != config.gdks_layer) {
      t.hidden.push_back(encoder_layer(ctx.target, encoder.layers[l], h, t.mask, config, ctx.training));
      continue;
    }
    Var<S> hs = state.source.hidden[l];
    Var<S> shared = transform_source(ctx.target, sharing, hs, h, same_language, options);
    FusionResult<S> fused = fuse(ctx.target, sharing, encoder.layers[l].attention, h, shared, t.mask,
                                 state.source.mask, config.num_heads, options);
    state.sharing_query = h;
    state.sharing_source = shared;
    state.sharing_attention = std::move(fused.cross);
    state.lambda = fused.lambda;
    if (config.placement == SharingPlacement::ReplaceLayer) {
      t.hidden.push_back(fused.output);
    } else {
      t.hidden.push_back(encoder_layer(ctx.target, encoder.layers[l], h, t.mask, config, ctx.training,
                                         std::optional<Var<S>>(fused.output)));
    }
  }
  return state;
}

#define XMRC_INSTANTIATE_ENCODER(S)                                                                                \
  template struct EncoderLayerParams<S>;                                                                           \
  template struct EncoderParams<S>;                                                                                \
  template Var<S> embed(ParamBinding<S>&, EncoderParams<S>&, std::span<const int>, const ModelConfig&, bool);      \
  template Var<S> encoder_layer(ParamBinding<S>&, EncoderLayerParams<S>&, Var<S>, const BoolMatrix&,               \
                                const ModelConfig&, bool, std::optional<Var<S>>);                                  \
  template BranchState<S> encode_single(ParamBinding<S>&, EncoderParams<S>&, const ModelConfig&,                   \
                                        std::span<const int>, bool);                                               \
  template EncoderState<S> encode_pair(ForwardContext<S>&, EncoderParams<S>&, SharingParams<S>&, const ModelConfig&, \
                                       std::span<const int>, std::span<const int>, bool, SharingOptions);

XMRC_INSTANTIATE_ENCODER(float)
XMRC_INSTANTIATE_ENCODER(double)

}  // namespace xmrc
