#pragma once

// Small models and hand-built pairs shared by the unit and acceptance tests.

#include "xmrc/model.hpp"

#include <string>
#include <vector>

namespace xmrc::testing {

/// Zero-shot baseline of the end-to-end acceptance run: desk config trained
/// on source self-pairs only, target-side F1 on the 500-pair eval split.
inline constexpr double kZeroShotTargetF1 = 32.1;

/// 2 layers, n = 8, H = 2, no dropout.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.model.num_layers = 2;
  c.model.hidden_size = 8;
  c.model.num_heads = 2;
  c.model.ffn_size = 16;
  c.model.vocab_size = 40;
  c.model.max_seq_len = 16;
  c.model.dropout_rate = 0.0;
  c.model.gdks_layer = 1;
  c.batch_size = 4;
  return c;
}

inline MrcExample make_example(const std::string& id, const std::string& language, const std::string& question,
                               const std::string& context, const std::string& answer) {
  const auto pos = context.find(answer);
  return {id, question, context, {{answer, pos}}, language};
}

/// Four short pairs (packed length <= 12): three translated, one self-pair.
inline std::vector<ParallelExample> tiny_pairs() {
  auto src = [](const std::string& id, const std::string& q, const std::string& c, const std::string& a) {
    return make_example(id, "syn-src", q, c, a);
  };
  auto tgt = [](const std::string& id, const std::string& q, const std::string& c, const std::string& a) {
    return make_example(id, "syn-tgt", q, c, a);
  };
  std::vector<ParallelExample> pairs;
  pairs.push_back({"p0", src("p0", "what ba", "ba is bo . de is di", "bo"),
                   tgt("p0.tgt", "wot za", "xe iz xi . za iz zo", "zo"), false});
  pairs.push_back({"p1", src("p1", "what de", "ba is du . de is bi", "bi"),
                   tgt("p1.tgt", "wot xe", "xe iz zi .", "zi"), false});
  pairs.push_back({"p2", src("p2", "what ga", "ga is go go .", "go go"),
                   tgt("p2.tgt", "wot ka", "ka iz ko ko . za", "ko ko"), false});
  const MrcExample self = src("p3", "what bo", "bo is ba . ga is di", "di");
  pairs.push_back({"p3", self, self, true});
  return pairs;
}

}  // namespace xmrc::testing
