#include "xmrc/calibration.hpp"
#include "xmrc/mrc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace xmrc {
namespace {

using M = Matrix<double>;
using L = long double;

M random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  M m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

SpanHeadParams<double> head(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return SpanHeadParams<double>::init(6, rng);
}

TEST(SpanHead, ZeroWeightsGiveUniform) {
  auto p = head(1);
  p.w.value.setZero();
  p.b.value.setZero();
  Tape<double> t;
  ParamBinding<double> bind(t);
  const M out = span_head(bind, p, t.constant(random_matrix(4, 6, 2))).value();
  EXPECT_EQ(out, M::Constant(4, 2, 0.25));
}

TEST(SpanHead, ColumnsSumToOneAndMaskedRowsAreZero) {
  auto p = head(3);
  Tape<double> t;
  ParamBinding<double> bind(t);
  const M out = span_head(bind, p, t.constant(random_matrix(7, 6, 4, 3.0)), prefix_mask(7, 5)).value();
  for (Index c = 0; c < 2; ++c) EXPECT_NEAR(out.col(c).sum(), 1.0, 1e-12);
  EXPECT_EQ(out.bottomRows(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SpanHead, MatchesLoopSoftmax) {
  auto p = head(5);
  p.b.value << 0.3, -0.2;
  const M h = random_matrix(5, 6, 6);
  Tape<double> t;
  ParamBinding<double> bind(t);
  const M out = span_head(bind, p, t.constant(h)).value();
  for (Index c = 0; c < 2; ++c) {
    L logits[5], z = 0;
    for (Index i = 0; i < 5; ++i) {
      logits[i] = p.b.value(0, c);
      for (Index k = 0; k < 6; ++k) logits[i] += static_cast<L>(h(i, k)) * p.w.value(k, c);
      z += std::exp(logits[i]);
    }
    for (Index i = 0; i < 5; ++i) EXPECT_NEAR(out(i, c), static_cast<double>(std::exp(logits[i]) / z), 1e-12);
  }
}

TEST(MrcLoss, Examples) {
  Tape<double> t;
  M one = M::Zero(4, 2);
  one(1, 0) = one(2, 1) = 1.0;
  EXPECT_EQ(mrc_loss(t.constant(one), SpanLabel{1, 2, ""}).item(), 0.0);
  const double uniform = mrc_loss(t.constant(M::Constant(4, 2, 0.25)), SpanLabel{0, 3, ""}).item();
  EXPECT_NEAR(uniform, 2.0 * std::log(4.0), 1e-15);
  EXPECT_NEAR(uniform, 2.7726, 1e-4);
}

TEST(MrcLoss, SameFormulaAsTeacherLoss) {
  M p = random_matrix(6, 2, 7).array().exp();
  for (Index c = 0; c < 2; ++c) p.col(c) /= p.col(c).sum();
  for (Index s = 0; s < 6; ++s) {
    for (Index e = s; e < 6; ++e) {
      Tape<double> t;
      EXPECT_EQ(mrc_loss(t.constant(p), SpanLabel{s, e, ""}).item(), teacher_guided_loss(t.constant(p), s, e).item());
    }
  }
}

TEST(MrcLoss, RejectsMaskedLabel) {
  Tape<double> t;
  EXPECT_THROW(mrc_loss(t.constant(M::Constant(4, 2, 0.25)), SpanLabel{0, 3, ""}, prefix_mask(4, 3)), Error);
  EXPECT_THROW(mrc_loss(t.constant(M::Constant(4, 2, 0.25)), SpanLabel{-1, 1, ""}), Error);
}

Var<double> scalar(Tape<double>& t, double v) { return t.constant(M::Constant(1, 1, v)); }

TEST(CompositeLoss, Arithmetic) {
  Tape<double> t;
  LossParts<double> parts;
  parts.mrc_source = scalar(t, 1.0);
  parts.mrc_target = scalar(t, 2.0);
  LossWeights w;
  w.alpha = 0.2;
  w.gamma = w.sigma_s = w.eta_t = 0.0;
  EXPECT_NEAR(composite_loss(t, parts, w).item(), 1.8, 1e-15);
  parts.teacher = scalar(t, 3.0);
  w.gamma = 0.1;
  EXPECT_NEAR(composite_loss(t, parts, w).item(), 2.1, 1e-15);
  parts.align_sentence = scalar(t, 2.0);
  parts.align_token = scalar(t, 4.0);
  w.sigma_s = w.eta_t = 0.05;
  EXPECT_NEAR(composite_loss(t, parts, w).item(), 2.4, 1e-15);

  LossParts<double> zeros;
  zeros.mrc_source = scalar(t, 0.0);
  zeros.mrc_target = scalar(t, 0.0);
  zeros.teacher = scalar(t, 0.0);
  zeros.align_sentence = scalar(t, 0.0);
  zeros.align_token = scalar(t, 0.0);
  EXPECT_EQ(composite_loss(t, zeros, w).item(), 0.0);
}

TEST(CompositeLoss, ZeroCoefficientAddsNoGradient) {
  Tape<double> t;
  Var<double> x = t.input(M::Constant(1, 1, 2.0));
  Var<double> y = t.input(M::Constant(1, 1, 3.0));
  LossParts<double> parts;
  parts.mrc_source = square(x);
  parts.mrc_target = square(y);
  parts.teacher = square(x);
  LossWeights w;
  w.alpha = 0.2;
  w.gamma = 0.0;
  t.backward(composite_loss(t, parts, w));
  EXPECT_NEAR(t.grad(x)(0, 0), 0.2 * 4.0, 1e-15);
  EXPECT_NEAR(t.grad(y)(0, 0), 0.8 * 6.0, 1e-15);
}

M span_dist(std::initializer_list<double> start, std::initializer_list<double> end) {
  M p(static_cast<Index>(start.size()), 2);
  Index i = 0;
  for (double v : start) p(i++, 0) = v;
  i = 0;
  for (double v : end) p(i++, 1) = v;
  return p;
}

TEST(DecodeSpan, Example) {
  const M p = span_dist({0.1, 0.7, 0.2}, {0.2, 0.1, 0.7});
  const DecodedSpan s = decode_span<double>(p, 0, 3, 2);
  EXPECT_EQ(s.start, 1);
  EXPECT_EQ(s.end, 2);
  EXPECT_NEAR(s.score, 0.49, 1e-15);
}

TEST(DecodeSpan, OneHotAndTies) {
  const M one = span_dist({0, 0, 1, 0}, {0, 0, 1, 0});
  const DecodedSpan s = decode_span<double>(one, 0, 4, 3);
  EXPECT_EQ(s.start, 2);
  EXPECT_EQ(s.end, 2);
  const M tie = span_dist({0.5, 0, 0.5, 0}, {0.5, 0, 0.5, 0});
  const DecodedSpan t = decode_span<double>(tie, 0, 4, 1);
  EXPECT_EQ(t.start, 0);
  EXPECT_EQ(t.end, 0);
}

TEST(DecodeSpan, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> len(4, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = len(rng);
    M p = random_matrix(n, 2, 100 + trial, 2.0).array().exp();
    for (Index c = 0; c < 2; ++c) p.col(c) /= p.col(c).sum();
    const Index begin = trial % 3, end = n - (trial % 2);
    const int max_len = 1 + trial % 4;
    Index bs = -1, be = -1;
    double best = -1;
    for (Index i = begin; i < end; ++i) {
      for (Index j = i; j < end && j < i + max_len; ++j) {
        const double s = p(i, 0) * p(j, 1);
        if (s > best) {
          best = s;
          bs = i;
          be = j;
        }
      }
    }
    const DecodedSpan d = decode_span<double>(p, begin, end, max_len);
    ASSERT_EQ(d.start, bs) << trial;
    ASSERT_EQ(d.end, be) << trial;
    ASSERT_EQ(d.score, best);
  }
}

TEST(EmF1, Examples) {
  MatchScore s = em_f1("The Cat.", {"cat"}, TextStyle::Squad);
  EXPECT_EQ(s.em, 1.0);
  EXPECT_EQ(s.f1, 1.0);
  s = em_f1("a b c", {"b c d"}, TextStyle::Synthetic);
  EXPECT_EQ(s.em, 0.0);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3.0);
  s = em_f1("alpha beta", {"alpha beta"}, TextStyle::Synthetic);
  EXPECT_EQ(s.em, 1.0);
  EXPECT_EQ(s.f1, 1.0);
}

TEST(EmF1, BestGoldAndEmptyStrings) {
  MatchScore s = em_f1("red fox", {"blue", "the red fox"}, TextStyle::Squad);
  EXPECT_EQ(s.em, 1.0);
  s = em_f1("red", {"red fox", "red"}, TextStyle::Synthetic);
  EXPECT_EQ(s.em, 1.0);
  EXPECT_EQ(s.f1, 1.0);
  s = em_f1("", {"fox"}, TextStyle::Synthetic);
  EXPECT_EQ(s.f1, 0.0);
  // Token bag overlap counts duplicates once per occurrence.
  s = em_f1("a a b", {"a b b"}, TextStyle::Synthetic);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3.0);
}

TEST(NormalizeAnswer, Styles) {
  EXPECT_EQ(normalize_answer("  The  Quick, brown fox!  ", TextStyle::Squad), "quick brown fox");
  EXPECT_EQ(normalize_answer("  The  Quick, brown ", TextStyle::Synthetic), "the quick, brown");
  EXPECT_EQ(text_style_for("syn-src"), TextStyle::Synthetic);
  EXPECT_EQ(text_style_for("en"), TextStyle::Squad);
}

}  // namespace
}  // namespace xmrc
