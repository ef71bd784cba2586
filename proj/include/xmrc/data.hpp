#pragma once

#include "xmrc/mrc.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xmrc {

struct Answer {
  std::string text;
  std::size_t char_start = 0;

  bool operator==(const Answer&) const = default;
};

struct MrcExample {
  std::string id;
  std::string question;
  std::string context;
  std::vector<Answer> answers;
  std::string language;

  bool operator==(const MrcExample&) const = default;
  /// Throws Error unless every answer text occurs at its char_start.
  void validate() const;
};

struct ParallelExample {
  std::string id;
  MrcExample source;
  MrcExample target;
  bool same_language = false;

  bool operator==(const ParallelExample&) const = default;
};

/// Whitespace vocabulary. Ids 0..3 are [PAD], [CLS], [SEP], [UNK].
class Vocab {
 public:
  static constexpr int kPad = 0, kCls = 1, kSep = 2, kUnk = 3;

  Vocab();
  /// Adds every whitespace token of both sides of every pair, in first-seen order.
  static Vocab build(const std::vector<ParallelExample>& pairs);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int add(const std::string& token);
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Whitespace tokens with their [begin, end) character offsets.
struct TextTokens {
  std::vector<std::string> words;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

TextTokens whitespace_tokenize(const std::string& text);

/// Packed model input: [CLS] question [SEP] context [SEP].
struct TokenizedExample {
  std::vector<int> ids;
  std::vector<std::string> tokens;
  Index context_begin = 0;  ///< first context token in `ids`
  Index context_end = 0;    ///< one past the last context token
  /// Character span in the context of each context token (index k <-> ids[context_begin + k]).
  std::vector<std::pair<std::size_t, std::size_t>> context_chars;
  SpanLabel label;  ///< packed positions of the first answer

  Index length() const { return static_cast<Index>(ids.size()); }
};

/// Maps the first answer to the minimal covering token span. Throws Error
/// naming the example when the answer does not land on context tokens.
TokenizedExample tokenize_and_map(const MrcExample& example, const Vocab& vocab);

/// Context substring covered by packed positions [start, end].
std::string render_span(const MrcExample& example, const TokenizedExample& tokens, Index start, Index end);

struct SynthConfig {
  std::uint64_t seed = 1;
  int vocab_size = 200;
  int num_examples = 1000;
  int min_clauses = 3;
  int max_clauses = 5;
  /// Fraction of translated pairs whose clause order is permuted so the answer moves.
  double shift_strength = 0.8;
  std::uint64_t lexicon_seed = 17;
  double self_pair_fraction = 0.3;
  /// Two-token values make clause lengths vary, which a small learned-position
  /// encoder cannot resolve from 2k examples; off by default.
  double two_token_value_prob = 0.0;
  std::string source_language = "syn-src";
  std::string target_language = "syn-tgt";
  std::string id_prefix = "ex";
};

/// Parallel corpus of "entity relation value ." clause stories. The target
/// side is a word-by-word bijective relabeling into a disjoint vocabulary,
/// with clause order permuted for a `shift_strength` fraction of pairs.
std::vector<ParallelExample> synth_corpus(const SynthConfig& config);

/// Source-to-target word map used by synth_corpus for `config`.
std::unordered_map<std::string, std::string> synth_lexicon(const SynthConfig& config);

/// One (source, source) same-language pair per distinct source example.
std::vector<ParallelExample> source_self_pairs(const std::vector<ParallelExample>& pairs);
/// One (target, target) same-language pair per pair, for zero-shot scoring of the target side.
std::vector<ParallelExample> target_self_pairs(const std::vector<ParallelExample>& pairs);

std::vector<MrcExample> load_squad_json(const std::filesystem::path& path, const std::string& language = "en");
void save_squad_json(const std::filesystem::path& path, const std::vector<MrcExample>& examples);

/// JSON lines with fields id, src_question, src_context, src_answer,
/// src_char_start, tgt_question, tgt_context, tgt_answer, tgt_char_start,
/// same_language, plus optional src_language / tgt_language.
std::vector<ParallelExample> load_pairs_jsonl(const std::filesystem::path& path);
void save_pairs_jsonl(const std::filesystem::path& path, const std::vector<ParallelExample>& pairs);

struct EncodedPair {
  ParallelExample pair;
  TokenizedExample source;
  TokenizedExample target;

  /// True when the target answer starts at a different packed position than the source answer.
  bool shifted() const { return source.label.start != target.label.start; }
};

std::vector<EncodedPair> encode_pairs(const std::vector<ParallelExample>& pairs, const Vocab& vocab);

using IdMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Batch {
  IdMatrix source_ids;  ///< rows padded with Vocab::kPad to the batch max length
  IdMatrix target_ids;
  BoolMatrix source_mask;
  BoolMatrix target_mask;
  std::vector<SpanLabel> source_labels;
  std::vector<SpanLabel> target_labels;
  std::vector<std::pair<Index, Index>> source_context;
  std::vector<std::pair<Index, Index>> target_context;
  std::vector<bool> same_language;
  std::vector<std::string> ids;
  std::vector<std::size_t> indices;  ///< positions in the encoded corpus

  std::size_t size() const { return ids.size(); }
  /// Unpadded ids of row r.
  std::vector<int> source_row(std::size_t r) const;
  std::vector<int> target_row(std::size_t r) const;
};

/// Seeded shuffle (when requested), fixed-size batches, final partial batch kept.
std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, int batch_size, std::uint64_t seed,
                                bool shuffle);

}  // namespace xmrc
