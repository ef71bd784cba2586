#pragma once

// Span prediction head, span losses, the composite training objective,
// answer decoding and SQuAD-style scoring.

#include "xmrc/attention.hpp"
#include "xmrc/config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace xmrc {

struct SpanLabel {
  Index start = 0;
  Index end = 0;
  std::string answer_text;
};

template <typename S>
struct SpanHeadParams {
  Parameter<S> w;  ///< n x 2
  Parameter<S> b;  ///< 1 x 2

  static SpanHeadParams init(int hidden, std::mt19937_64& rng);
  void collect(std::vector<Parameter<S>*>& out);
};

/// softmax(h W + b) down each column over unmasked positions; column 0 is the
/// start distribution, column 1 the end distribution.
template <typename S>
Var<S> span_head(ParamBinding<S>& bind, SpanHeadParams<S>& p, Var<S> h, const BoolMatrix& mask = {});

/// -log p[start, 0] - log p[end, 1], clamped at 1e-12.
template <typename S>
Var<S> mrc_loss(Var<S> p, const SpanLabel& label, const BoolMatrix& mask = {});

/// Batch-mean loss terms; absent terms are disabled.
template <typename S>
struct LossParts {
  std::optional<Var<S>> mrc_source;
  std::optional<Var<S>> mrc_target;
  std::optional<Var<S>> teacher;
  std::optional<Var<S>> align_sentence;
  std::optional<Var<S>> align_token;
};

struct LossWeights {
  double alpha = 0.2;
  double gamma = 0.1;
  double sigma_s = 0.05;
  double eta_t = 0.05;
};

/// alpha*L_S + (1-alpha)*L_T + gamma*L_tg + sigma_s*L_sent + eta_t*L_tok.
/// Absent terms and terms with a zero coefficient add no graph edges.
template <typename S>
Var<S> composite_loss(Tape<S>& tape, const LossParts<S>& parts, const LossWeights& weights);

struct DecodedSpan {
  Index start = 0;
  Index end = 0;
  double score = 0.0;
};

/// argmax over start <= end <= start + max_len - 1 inside [context_begin,
/// context_end) of p[start, 0] * p[end, 1]; ties go to the smaller start,
/// then the smaller end.
template <typename S>
DecodedSpan decode_span(const Matrix<S>& p, Index context_begin, Index context_end, int max_answer_len);

enum class TextStyle {
  Squad,      ///< lowercase, strip punctuation and English articles, collapse whitespace
  Synthetic,  ///< lowercase, collapse whitespace
};

TextStyle text_style_for(const std::string& language);
std::string normalize_answer(const std::string& text, TextStyle style);

struct MatchScore {
  double em = 0.0;
  double f1 = 0.0;
};

/// EM and token-bag F1 against the best of `golds`.
MatchScore em_f1(const std::string& prediction, const std::vector<std::string>& golds, TextStyle style);

}  // namespace xmrc
