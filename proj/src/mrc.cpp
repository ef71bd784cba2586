#include "xmrc/mrc.hpp"

#include "xmrc/calibration.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace xmrc {

template <typename S>
SpanHeadParams<S> SpanHeadParams<S>::init(int hidden, std::mt19937_64& rng) {
  SpanHeadParams p;
  p.w = Parameter<S>("head.w", glorot<S>(hidden, 2, rng));
  p.b = Parameter<S>("head.b", Matrix<S>::Zero(1, 2));
  return p;
}

template <typename S>
void SpanHeadParams<S>::collect(std::vector<Parameter<S>*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

template <typename S>
Var<S> span_head(ParamBinding<S>& bind, SpanHeadParams<S>& p, Var<S> h, const BoolMatrix& mask) {
  BoolMatrix col_mask = expand_mask(mask, 1, h.rows()).transpose();
  if (col_mask.count() == 0) throw Error("span_head: all positions masked");
  return softmax(linear(bind, p.w, p.b, h), Axis::Rows, col_mask);
}

template <typename S>
Var<S> mrc_loss(Var<S> p, const SpanLabel& label, const BoolMatrix& mask) {
  return span_nll(p, label.start, label.end, mask);
}

template <typename S>
Var<S> composite_loss(Tape<S>& tape, const LossParts<S>& parts, const LossWeights& w) {
  Var<S> total;
  auto add_term = [&](const std::optional<Var<S>>& term, double coef) {
    if (!term || coef == 0.0) return;
    Var<S> t = coef == 1.0 ? *term : scale(*term, static_cast<S>(coef));
    total = total.valid() ? add(total, t) : t;
  };
  add_term(parts.mrc_source, w.alpha);
  add_term(parts.mrc_target, 1.0 - w.alpha);
  add_term(parts.teacher, w.gamma);
  add_term(parts.align_sentence, w.sigma_s);
  add_term(parts.align_token, w.eta_t);
  if (!total.valid()) total = tape.constant(Matrix<S>::Zero(1, 1));
  return total;
}

template <typename S>
DecodedSpan decode_span(const Matrix<S>& p, Index context_begin, Index context_end, int max_answer_len) {
  if (p.cols() != 2) throw ShapeError("decode_span", p.rows(), p.cols(), p.rows(), 2);
  context_begin = std::max<Index>(context_begin, 0);
  context_end = std::min<Index>(context_end, p.rows());
  if (context_begin >= context_end || max_answer_len <= 0) throw Error("decode_span: empty feasible set");
  DecodedSpan best;
  bool found = false;
  for (Index i = context_begin; i < context_end; ++i) {
    const Index last = std::min<Index>(context_end - 1, i + max_answer_len - 1);
    for (Index j = i; j <= last; ++j) {
      const double score = static_cast<double>(p(i, 0)) * static_cast<double>(p(j, 1));
      if (!found || score > best.score) {
        best = {i, j, score};
        found = true;
      }
    }
  }
  return best;
}

TextStyle text_style_for(const std::string& language) {
  return language.rfind("syn", 0) == 0 ? TextStyle::Synthetic : TextStyle::Squad;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

std::string normalize_answer(const std::string& text, TextStyle style) {
  std::string s;
  s.reserve(text.size());
  for (unsigned char c : text) {
    if (style == TextStyle::Squad && std::ispunct(c)) continue;
    s += static_cast<char>(std::tolower(c));
  }
  std::vector<std::string> words = split_ws(s);
  if (style == TextStyle::Squad) {
    std::erase_if(words, [](const std::string& w) { return w == "a" || w == "an" || w == "the"; });
  }
  return join(words);
}

MatchScore em_f1(const std::string& prediction, const std::vector<std::string>& golds, TextStyle style) {
  if (golds.empty()) throw Error("em_f1: empty gold list");
  const std::string pred = normalize_answer(prediction, style);
  const std::vector<std::string> pred_tokens = split_ws(pred);
  MatchScore best;
  for (const auto& g : golds) {
    const std::string gold = normalize_answer(g, style);
    const std::vector<std::string> gold_tokens = split_ws(gold);
    const double em = pred == gold ? 1.0 : 0.0;
    double f1 = 0.0;
    if (pred_tokens.empty() || gold_tokens.empty()) {
      f1 = pred_tokens == gold_tokens ? 1.0 : 0.0;
    } else {
      std::map<std::string, int> counts;
      for (const auto& t : gold_tokens) ++counts[t];
      int common = 0;
      for (const auto& t : pred_tokens) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
          --it->second;
          ++common;
        }
      }
      if (common > 0) {
        const double precision = static_cast<double>(common) / static_cast<double>(pred_tokens.size());
        const double recall = static_cast<double>(common) / static_cast<double>(gold_tokens.size());
        f1 = 2.0 * precision * recall / (precision + recall);
      }
    }
    best.em = std::max(best.em, em);
    best.f1 = std::max(best.f1, f1);
  }
  return best;
}

#define XMRC_INSTANTIATE_MRC(S)                                                              \
  template struct SpanHeadParams<S>;                                                         \
  template Var<S> span_head(ParamBinding<S>&, SpanHeadParams<S>&, Var<S>, const BoolMatrix&); \
  template Var<S> mrc_loss(Var<S>, const SpanLabel&, const BoolMatrix&);                     \
  template Var<S> composite_loss(Tape<S>&, const LossParts<S>&, const LossWeights&);         \
  template DecodedSpan decode_span(const Matrix<S>&, Index, Index, int);

XMRC_INSTANTIATE_MRC(float)
XMRC_INSTANTIATE_MRC(double)

}  // namespace xmrc
