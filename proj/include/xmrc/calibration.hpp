#pragma once

// Teacher-guided output calibration: normalization of final hidden states,
// attention-based transfer of the source span distribution into the target
// sequence, the teacher-guided loss and inference-time averaging.

#include "xmrc/attention.hpp"

namespace xmrc {

/// Running statistics shared by all languages.
template <typename S>
struct NormStats {
  RowVector<S> running_mean;
  RowVector<S> running_var;
  S momentum = S(0.99);
  S epsilon = S(1e-8);
  std::int64_t count = 0;

  static NormStats init(int hidden, double momentum, double epsilon);
  /// running = momentum * running + (1 - momentum) * batch
  void update(const RowVector<S>& batch_mean, const RowVector<S>& batch_var);
};

enum class NormMode { Train, Infer };

/// Train: standardize with the per-feature mean/variance of all rows of `h`
/// (callers pass unmasked token rows only) and fold them into `stats` when
/// `update_stats` is set. Infer: use the running statistics.
template <typename S>
Var<S> normalize(Var<S> h, NormStats<S>& stats, NormMode mode, bool update_stats = true);

template <typename S>
struct TransferParams {
  Parameter<S> wq;  ///< n x n, split across heads
  Parameter<S> wk;  ///< n x n
  int heads = 1;

  static TransferParams init(int hidden, int heads, std::mt19937_64& rng);
  void collect(std::vector<Parameter<S>*>& out);
};

template <typename S>
struct TransferResult {
  Var<S> distribution;       ///< N_T x 2
  AttentionResult<S> attention;
};

/// Maps source span probabilities into the target sequence: each head attends
/// from projected target states to projected source states and takes a convex
/// combination of the detached source probabilities; heads are averaged.
template <typename S>
TransferResult<S> attentive_transfer(ParamBinding<S>& bind, TransferParams<S>& p, Var<S> target_states,
                                     Var<S> source_states, Var<S> source_distribution, const BoolMatrix& key_mask,
                                     bool renormalize = false);

/// -log p[start, 0] - log p[end, 1] with p clamped to >= 1e-12. Throws when
/// a label falls outside the sequence or on a masked position.
template <typename S>
Var<S> span_nll(Var<S> p, Index start, Index end, const BoolMatrix& mask = {});

template <typename S>
Var<S> teacher_guided_loss(Var<S> transferred, Index start, Index end, const BoolMatrix& mask = {});

/// (p_transfer + p_target) / 2
template <typename S>
Matrix<S> calibrate(const Matrix<S>& transferred, const Matrix<S>& target);

}  // namespace xmrc
