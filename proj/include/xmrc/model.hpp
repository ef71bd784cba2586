#pragma once

// The full two-branch reader: shared encoder with the knowledge-sharing
// layer, span head, output calibration and alignment terms, assembled per
// batch.

#include "xmrc/alignment.hpp"
#include "xmrc/calibration.hpp"
#include "xmrc/data.hpp"
#include "xmrc/encoder.hpp"
#include "xmrc/mrc.hpp"

#include <optional>
#include <vector>

namespace xmrc {

template <typename S>
struct Model {
  ModelConfig config;
  EncoderParams<S> encoder;
  SharingParams<S> sharing;
  TransferParams<S> transfer;
  SpanHeadParams<S> head;
  NormStats<S> norm;

  static Model init(const TrainConfig& config, std::uint64_t seed);
  /// Every trainable tensor in a fixed order.
  std::vector<Parameter<S>*> parameters();
};

/// Per-example outputs of one forward pass.
template <typename S>
struct PairOutput {
  EncoderState<S> state;
  Var<S> p_source;                  ///< N_S x 2
  Var<S> p_target;                  ///< N_T x 2
  std::optional<Var<S>> p_transfer;  ///< N_T x 2, when the transfer path is built
  std::optional<Var<S>> eca_attention;
};

template <typename S>
struct BatchOutput {
  std::vector<PairOutput<S>> pairs;
  LossParts<S> parts;
  Var<S> loss;  ///< only set in training mode
  Var<S> lambda;
};

/// Builds the graph for one batch. Training mode assembles every enabled loss
/// term and updates the normalization statistics; inference mode builds only
/// span distributions (plus the transfer path when `with_transfer`).
template <typename S>
BatchOutput<S> forward_batch(ForwardContext<S>& ctx, Model<S>& model, const TrainConfig& config, const Batch& batch,
                             bool with_transfer = true);

/// Sharing options implied by the configuration.
SharingOptions sharing_options(const TrainConfig& config);

}  // namespace xmrc
