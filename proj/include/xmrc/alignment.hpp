#pragma once

// Sentence-level contrastive alignment and the token-level attention-entropy
// penalty.

#include "xmrc/config.hpp"
#include "xmrc/ops.hpp"

#include <optional>
#include <vector>

namespace xmrc {

/// Mean of the unmasked rows of h (1 x n). `mask` is 1 x N or empty.
template <typename S>
Var<S> sentence_repr(Var<S> h, const BoolMatrix& mask = {});

/// InfoNCE over cosine similarities. Row i of `anchors` is paired with row i
/// of `positives`; the other rows of `positives` (and, for BothSides, the
/// other anchors) are negatives. Only rows with `is_anchor[i]` contribute;
/// the result is the mean over them. Returns nullopt when no row is an
/// anchor, and a constant 0 when fewer than two rows exist.
template <typename S>
std::optional<Var<S>> contrastive_loss(Var<S> anchors, Var<S> positives, const std::vector<bool>& is_anchor,
                                       const AlignmentConfig& config);

/// softmax(h_T h_S^T / sqrt(n)) over unmasked source columns.
template <typename S>
Var<S> cross_attention_weights(Var<S> target, Var<S> source, const BoolMatrix& source_mask = {});

/// Mean row entropy -(1/I) sum_ij a_ij log a_ij of an attention matrix.
template <typename S>
Var<S> attention_entropy(Var<S> attention);

/// Entropy penalty on the unprojected single-head attention between the two states.
template <typename S>
Var<S> eca_loss(Var<S> target, Var<S> source, const BoolMatrix& source_mask = {});

/// sigma_s * l_s + eta_t * l_t; absent terms are skipped.
template <typename S>
std::optional<Var<S>> align_loss(std::optional<Var<S>> sentence_term, std::optional<Var<S>> token_term,
                                 const AlignmentConfig& config);

}  // namespace xmrc
