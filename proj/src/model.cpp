#include "xmrc/model.hpp"

namespace xmrc {

template <typename S>
Model<S> Model<S>::init(const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.config = config.model;
  m.encoder = EncoderParams<S>::init(config.model, rng);
  m.sharing = SharingParams<S>::init(config.model, config.lambda0, rng);
  m.transfer = TransferParams<S>::init(config.model.hidden_size, config.model.transfer_heads(), rng);
  m.head = SpanHeadParams<S>::init(config.model.hidden_size, rng);
  m.norm = NormStats<S>::init(config.model.hidden_size, config.norm_momentum, config.epsilon);
  return m;
}

template <typename S>
std::vector<Parameter<S>*> Model<S>::parameters() {
  std::vector<Parameter<S>*> out;
  encoder.collect(out);
  sharing.collect(out);
  transfer.collect(out);
  head.collect(out);
  return out;
}

SharingOptions sharing_options(const TrainConfig& config) {
  SharingOptions o;
  o.disentangle = !config.ablations.no_gdks;
  return o;
}

namespace {

template <typename S>
Var<S> batch_mean(const std::vector<Var<S>>& terms) {
  Var<S> total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return terms.size() == 1 ? total : scale(total, S(1) / static_cast<S>(terms.size()));
}

BoolMatrix transfer_key_mask(const TrainConfig& config, Index length, std::pair<Index, Index> context) {
  if (config.transfer_keys == TransferKeys::AllTokens) return {};
  BoolMatrix m = BoolMatrix::Constant(1, length, false);
  m.middleCols(context.first, context.second - context.first).setConstant(true);
  return m;
}

}  // namespace

template <typename S>
BatchOutput<S> forward_batch(ForwardContext<S>& ctx, Model<S>& model, const TrainConfig& config, const Batch& batch,
                             bool with_transfer) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error("forward_batch: empty batch");
  const bool training = ctx.training;
  const SharingOptions options = sharing_options(config);

  BatchOutput<S> out;
  out.pairs.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::vector<int> src = batch.source_row(r);
    const std::vector<int> tgt = batch.target_row(r);
    PairOutput<S> po;
    po.state = encode_pair(ctx, model.encoder, model.sharing, model.config, std::span<const int>(src),
                           std::span<const int>(tgt), batch.same_language[r], options);
    po.p_source = span_head(ctx.source, model.head, po.state.source.final());
    po.p_target = span_head(ctx.target, model.head, po.state.target.final());
    out.pairs.push_back(std::move(po));
  }
  out.lambda = out.pairs.front().state.lambda;

  // Output calibration path. In training it exists only to feed the teacher loss.
  const bool transfer = config.use_transfer() && (training ? config.gamma > 0.0 : with_transfer);
  if (transfer) {
    std::vector<Var<S>> finals;
    finals.reserve(2 * n);
    for (const auto& po : out.pairs) {
      finals.push_back(po.state.source.final());
      finals.push_back(po.state.target.final());
    }
    std::vector<Var<S>> normed = finals;
    if (!config.ablations.no_norm) {
      Var<S> all = concat<S>(finals, Axis::Rows);
      Var<S> z = normalize(all, model.norm, training ? NormMode::Train : NormMode::Infer);
      Index offset = 0;
      for (std::size_t k = 0; k < finals.size(); ++k) {
        normed[k] = slice(z, Axis::Rows, offset, finals[k].rows());
        offset += finals[k].rows();
      }
    }
    for (std::size_t r = 0; r < n; ++r) {
      PairOutput<S>& po = out.pairs[r];
      const BoolMatrix keys = transfer_key_mask(config, po.state.source.final().rows(), batch.source_context[r]);
      po.p_transfer = attentive_transfer(ctx.target, model.transfer, normed[2 * r + 1], normed[2 * r], po.p_source,
                                         keys, config.renormalize_transfer)
                          .distribution;
    }
  }

  if (!training) return out;

  std::vector<Var<S>> ls, lt, ltg, leca;
  for (std::size_t r = 0; r < n; ++r) {
    PairOutput<S>& po = out.pairs[r];
    ls.push_back(mrc_loss(po.p_source, batch.source_labels[r]));
    lt.push_back(mrc_loss(po.p_target, batch.target_labels[r]));
    if (po.p_transfer) {
      ltg.push_back(teacher_guided_loss(*po.p_transfer, batch.target_labels[r].start, batch.target_labels[r].end));
    }
  }
  LossParts<S>& parts = out.parts;
  if (config.alpha > 0.0) parts.mrc_source = batch_mean(ls);
  if (config.alpha < 1.0) parts.mrc_target = batch_mean(lt);
  if (!ltg.empty()) parts.teacher = batch_mean(ltg);

  if (!config.ablations.no_align_s && config.sigma_s > 0.0) {
    std::vector<Var<S>> anchors, positives;
    for (auto& po : out.pairs) {
      anchors.push_back(sentence_repr(po.state.target.final()));
      positives.push_back(sentence_repr(po.state.source.final()));
    }
    std::vector<bool> is_anchor(batch.same_language.size());
    for (std::size_t r = 0; r < n; ++r) is_anchor[r] = !batch.same_language[r];
    parts.align_sentence = contrastive_loss(concat<S>(anchors, Axis::Rows), concat<S>(positives, Axis::Rows),
                                            is_anchor, config.alignment());
  }

  if (!config.ablations.no_align_t && config.eta_t > 0.0) {
    for (auto& po : out.pairs) {
      Var<S> a = config.eca_source == EcaSource::HiddenStates
                     ? cross_attention_weights(po.state.sharing_query, po.state.sharing_source)
                     : po.state.sharing_attention.mean_weights_var();
      po.eca_attention = a;
      leca.push_back(attention_entropy(a));
    }
    parts.align_token = batch_mean(leca);
  }

  out.loss = composite_loss(ctx.tape, parts, {config.alpha, config.gamma, config.sigma_s, config.eta_t});
  return out;
}

#define XMRC_INSTANTIATE_MODEL(S) \
  template struct Model<S>;       \
  template BatchOutput<S> forward_batch(ForwardContext<S>&, Model<S>&, const TrainConfig&, const Batch&, bool);

XMRC_INSTANTIATE_MODEL(float)
XMRC_INSTANTIATE_MODEL(double)

}  // namespace xmrc
