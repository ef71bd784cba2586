#include "xmrc/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace xmrc {

using nlohmann::json;

void MrcExample::validate() const {
  for (const auto& a : answers) {
    if (a.text.empty() || a.char_start + a.text.size() > context.size() ||
        context.compare(a.char_start, a.text.size(), a.text) != 0) {
      throw Error("example '" + id + "': answer '" + a.text + "' not found at char " + std::to_string(a.char_start));
    }
  }
}

// ---------------------------------------------------------------- vocab

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) add(t);
}

int Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

Vocab Vocab::build(const std::vector<ParallelExample>& pairs) {
  Vocab v;
  auto add_text = [&](const std::string& s) {
    for (const auto& w : whitespace_tokenize(s).words) v.add(w);
  };
  for (const auto& p : pairs) {
    for (const MrcExample* e : {&p.source, &p.target}) {
      add_text(e->question);
      add_text(e->context);
    }
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("vocab: cannot open '" + path.string() + "'");
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (v.index_.count(line)) throw Error("vocab: duplicate token '" + line + "' in '" + path.string() + "'");
    v.add(line);
  }
  if (v.size() < 4 || v.token(kPad) != "[PAD]" || v.token(kUnk) != "[UNK]") {
    throw Error("vocab: '" + path.string() + "' must start with [PAD] [CLS] [SEP] [UNK]");
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("vocab: cannot open '" + path.string() + "' for writing");
  for (const auto& t : tokens_) out << t << '\n';
}

// ---------------------------------------------------------- tokenization

TextTokens whitespace_tokenize(const std::string& text) {
  TextTokens t;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t b = i;
    while (i < text.size() && !space(text[i])) ++i;
    t.words.push_back(text.substr(b, i - b));
    t.spans.emplace_back(b, i);
  }
  return t;
}

TokenizedExample tokenize_and_map(const MrcExample& example, const Vocab& vocab) {
  const TextTokens q = whitespace_tokenize(example.question);
  const TextTokens c = whitespace_tokenize(example.context);
  if (q.words.empty()) throw Error("example '" + example.id + "': empty question");
  if (c.words.empty()) throw Error("example '" + example.id + "': empty context");

  TokenizedExample t;
  auto push = [&](int id, const std::string& tok) {
    t.ids.push_back(id);
    t.tokens.push_back(tok);
  };
  push(Vocab::kCls, "[CLS]");
  for (const auto& w : q.words) push(vocab.id(w), w);
  push(Vocab::kSep, "[SEP]");
  t.context_begin = static_cast<Index>(t.ids.size());
  for (const auto& w : c.words) push(vocab.id(w), w);
  t.context_end = static_cast<Index>(t.ids.size());
  push(Vocab::kSep, "[SEP]");
  t.context_chars = c.spans;

  if (example.answers.empty()) throw Error("example '" + example.id + "': no answers");
  const Answer& a = example.answers.front();
  const std::size_t a_begin = a.char_start;
  const std::size_t a_end = a.char_start + a.text.size();
  Index first = -1, last = -1;
  for (std::size_t k = 0; k < c.spans.size(); ++k) {
    const auto [b, e] = c.spans[k];
    if (e > a_begin && b < a_end) {
      if (first < 0) first = static_cast<Index>(k);
      last = static_cast<Index>(k);
    }
  }
  if (first < 0) throw Error("example '" + example.id + "': answer does not cover any context token");
  t.label.start = t.context_begin + first;
  t.label.end = t.context_begin + last;
  t.label.answer_text = a.text;
  return t;
}

std::string render_span(const MrcExample& example, const TokenizedExample& tokens, Index start, Index end) {
  if (start < tokens.context_begin || end >= tokens.context_end || start > end) {
    throw Error("render_span: span [" + std::to_string(start) + ", " + std::to_string(end) +
                "] outside the context of '" + example.id + "'");
  }
  const std::size_t b = tokens.context_chars[static_cast<std::size_t>(start - tokens.context_begin)].first;
  const std::size_t e = tokens.context_chars[static_cast<std::size_t>(end - tokens.context_begin)].second;
  return example.context.substr(b, e - b);
}

// ------------------------------------------------------------- synthetic

namespace {

struct Lexicon {
  std::vector<std::string> source;  // all source words, by role below
  std::vector<std::string> target;  // target[i] translates source[i]
  int question_word = 0, question_mark = 1, clause_end = 2;
  int entity_begin = 0, entity_end = 0;
  int relation_begin = 0, relation_end = 0;
  int value_begin = 0, value_end = 0;
};

std::vector<std::string> pseudo_words(const std::string& consonants, const std::string& vowels, std::size_t count) {
  std::vector<std::string> syllables;
  for (char c : consonants) {
    for (char v : vowels) syllables.push_back(std::string{c, v});
  }
  std::vector<std::string> words;
  for (std::size_t i = 0; i < syllables.size() && words.size() < count; ++i) {
    for (std::size_t j = 0; j < syllables.size() && words.size() < count; ++j) {
      words.push_back(syllables[i] + syllables[j]);
    }
  }
  return words;
}

Lexicon make_lexicon(const SynthConfig& config) {
  const int per_language = (config.vocab_size - 4) / 2;
  const int open = per_language - 3;
  const int entities = open * 3 / 10;
  const int relations = open * 15 / 100;
  const int values = open - entities - relations;
  if (entities < config.max_clauses || relations < 1 || values < 2) {
    throw Error("synth_corpus: vocab_size " + std::to_string(config.vocab_size) +
                " too small for a bijective lexicon with " + std::to_string(config.max_clauses) + " clauses");
  }
  Lexicon lex;
  lex.entity_begin = 3;
  lex.entity_end = lex.entity_begin + entities;
  lex.relation_begin = lex.entity_end;
  lex.relation_end = lex.relation_begin + relations;
  lex.value_begin = lex.relation_end;
  lex.value_end = lex.value_begin + values;

  std::mt19937_64 rng(config.lexicon_seed);
  lex.source = pseudo_words("bdgklmnprst", "aeiou", static_cast<std::size_t>(per_language));
  lex.target = pseudo_words("cfhjqvwxz", "aeiouy", static_cast<std::size_t>(per_language));
  if (lex.source.size() < static_cast<std::size_t>(per_language) ||
      lex.target.size() < static_cast<std::size_t>(per_language)) {
    throw Error("synth_corpus: vocab_size too large for the word generator");
  }
  std::shuffle(lex.source.begin(), lex.source.end(), rng);
  std::shuffle(lex.target.begin(), lex.target.end(), rng);
  return lex;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

/// Builds context text from clauses; returns the char start of `answer_clause`'s value.
MrcExample build_example(const std::string& id, const std::string& language, const std::vector<std::string>& question,
                         const std::vector<std::vector<std::string>>& clauses, std::size_t answer_clause,
                         std::size_t value_offset, std::size_t value_len) {
  MrcExample e;
  e.id = id;
  e.language = language;
  e.question = join_words(question);
  std::vector<std::string> words;
  std::size_t answer_word = 0;
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    if (c == answer_clause) answer_word = words.size() + value_offset;
    for (const auto& w : clauses[c]) words.push_back(w);
  }
  e.context = join_words(words);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < answer_word; ++k) pos += words[k].size() + 1;
  std::vector<std::string> answer(words.begin() + static_cast<std::ptrdiff_t>(answer_word),
                                  words.begin() + static_cast<std::ptrdiff_t>(answer_word + value_len));
  e.answers.push_back({join_words(answer), pos});
  return e;
}

}  // namespace

std::unordered_map<std::string, std::string> synth_lexicon(const SynthConfig& config) {
  const Lexicon lex = make_lexicon(config);
  std::unordered_map<std::string, std::string> map;
  for (std::size_t i = 0; i < lex.source.size(); ++i) map.emplace(lex.source[i], lex.target[i]);
  return map;
}

std::vector<ParallelExample> synth_corpus(const SynthConfig& config) {
  if (config.shift_strength < 0.0 || config.shift_strength > 1.0) throw Error("synth_corpus: shift_strength must be in [0, 1]");
  if (config.two_token_value_prob < 0.0 || config.two_token_value_prob > 1.0) {
    throw Error("synth_corpus: two_token_value_prob must be in [0, 1]");
  }
  if (config.min_clauses < 2 || config.max_clauses < config.min_clauses) {
    throw Error("synth_corpus: need 2 <= min_clauses <= max_clauses");
  }
  const Lexicon lex = make_lexicon(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto pick = [&](int begin, int end) { return std::uniform_int_distribution<int>(begin, end - 1)(rng); };

  std::vector<ParallelExample> out;
  out.reserve(static_cast<std::size_t>(config.num_examples));
  for (int n = 0; n < config.num_examples; ++n) {
    const int clauses = pick(config.min_clauses, config.max_clauses + 1);
    std::vector<int> entities(static_cast<std::size_t>(lex.entity_end - lex.entity_begin));
    std::iota(entities.begin(), entities.end(), lex.entity_begin);
    std::shuffle(entities.begin(), entities.end(), rng);

    // Word indices per clause: entity relation value... clause_end.
    std::vector<std::vector<int>> src;
    std::vector<std::size_t> value_len;
    for (int c = 0; c < clauses; ++c) {
      std::vector<int> clause{entities[static_cast<std::size_t>(c)], pick(lex.relation_begin, lex.relation_end)};
      const std::size_t len = coin(rng) < config.two_token_value_prob ? 2 : 1;
      for (std::size_t k = 0; k < len; ++k) clause.push_back(pick(lex.value_begin, lex.value_end));
      clause.push_back(lex.clause_end);
      src.push_back(std::move(clause));
      value_len.push_back(len);
    }
    const auto asked = static_cast<std::size_t>(pick(0, clauses));
    const std::vector<int> question{lex.question_word, src[asked][1], src[asked][0], lex.question_mark};

    const bool self_pair = coin(rng) < config.self_pair_fraction;
    std::vector<std::size_t> order(static_cast<std::size_t>(clauses));
    std::iota(order.begin(), order.end(), 0);
    if (!self_pair && coin(rng) < config.shift_strength) {
      do {
        std::shuffle(order.begin(), order.end(), rng);
      } while (order[asked] == asked);
    }

    auto words = [](const std::vector<std::string>& table, const std::vector<int>& ids) {
      std::vector<std::string> w;
      for (int i : ids) w.push_back(table[static_cast<std::size_t>(i)]);
      return w;
    };

    const std::string id = config.id_prefix + std::to_string(n);
    std::vector<std::vector<std::string>> src_clauses;
    for (const auto& c : src) src_clauses.push_back(words(lex.source, c));
    ParallelExample pair;
    pair.id = id;
    pair.source = build_example(id, config.source_language, words(lex.source, question), src_clauses, asked, 2,
                                value_len[asked]);
    if (self_pair) {
      pair.target = pair.source;
      pair.same_language = true;
    } else {
      // order[c] is the target slot of source clause c.
      std::vector<std::vector<std::string>> tgt_clauses(src.size());
      std::size_t answer_slot = 0;
      for (std::size_t c = 0; c < src.size(); ++c) {
        tgt_clauses[order[c]] = words(lex.target, src[c]);
        if (c == asked) answer_slot = order[c];
      }
      pair.target = build_example(id + ".tgt", config.target_language, words(lex.target, question), tgt_clauses,
                                  answer_slot, 2, value_len[asked]);
    }
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<ParallelExample> source_self_pairs(const std::vector<ParallelExample>& pairs) {
  std::vector<ParallelExample> out;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (!seen.insert(p.source.id).second) continue;
    out.push_back({p.source.id, p.source, p.source, true});
  }
  return out;
}

std::vector<ParallelExample> target_self_pairs(const std::vector<ParallelExample>& pairs) {
  std::vector<ParallelExample> out;
  for (const auto& p : pairs) out.push_back({p.target.id, p.target, p.target, true});
  return out;
}

// ----------------------------------------------------------------- SQuAD

namespace {

const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error("squad: missing key '" + key + "' at " + where);
  return j.at(key);
}

std::string require_string(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_string()) throw Error("squad: '" + where + "." + key + "' must be a string");
  return v.get<std::string>();
}

const json& require_array(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_array()) throw Error("squad: '" + where + "." + key + "' must be an array");
  return v;
}

}  // namespace

std::vector<MrcExample> load_squad_json(const std::filesystem::path& path, const std::string& language) {
  std::ifstream in(path);
  if (!in) throw Error("squad: cannot open '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("squad: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  std::vector<MrcExample> out;
  const json& data = require_array(doc, "data", "$");
  for (std::size_t a = 0; a < data.size(); ++a) {
    const std::string wa = "$.data[" + std::to_string(a) + "]";
    const json& paragraphs = require_array(data[a], "paragraphs", wa);
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      const std::string wp = wa + ".paragraphs[" + std::to_string(p) + "]";
      const std::string context = require_string(paragraphs[p], "context", wp);
      const json& qas = require_array(paragraphs[p], "qas", wp);
      for (std::size_t q = 0; q < qas.size(); ++q) {
        const std::string wq = wp + ".qas[" + std::to_string(q) + "]";
        MrcExample e;
        e.id = require_string(qas[q], "id", wq);
        e.question = require_string(qas[q], "question", wq);
        e.context = context;
        e.language = language;
        const json& answers = require_array(qas[q], "answers", wq);
        for (std::size_t k = 0; k < answers.size(); ++k) {
          const std::string wk = wq + ".answers[" + std::to_string(k) + "]";
          const json& start = require(answers[k], "answer_start", wk);
          if (!start.is_number_integer() || start.get<long long>() < 0) {
            throw Error("squad: '" + wk + ".answer_start' must be a non-negative integer");
          }
          e.answers.push_back({require_string(answers[k], "text", wk), start.get<std::size_t>()});
        }
        e.validate();
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

void save_squad_json(const std::filesystem::path& path, const std::vector<MrcExample>& examples) {
  json data = json::array();
  for (const auto& e : examples) {
    json answers = json::array();
    for (const auto& a : e.answers) answers.push_back({{"text", a.text}, {"answer_start", a.char_start}});
    json qa = {{"id", e.id}, {"question", e.question}, {"answers", answers}};
    data.push_back({{"title", e.id}, {"paragraphs", json::array({{{"context", e.context}, {"qas", json::array({qa})}}})}});
  }
  std::ofstream out(path);
  if (!out) throw Error("squad: cannot open '" + path.string() + "' for writing");
  out << json{{"version", "1.1"}, {"data", data}}.dump() << '\n';
}

// ------------------------------------------------------------ pair files

std::vector<ParallelExample> load_pairs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("pairs: cannot open '" + path.string() + "'");
  std::vector<ParallelExample> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      ParallelExample p;
      p.id = j.at("id").get<std::string>();
      p.same_language = j.at("same_language").get<bool>();
      auto side = [&](const char* prefix, const std::string& default_language, const std::string& id) {
        const std::string pre = prefix;
        MrcExample e;
        e.id = id;
        e.question = j.at(pre + "question").get<std::string>();
        e.context = j.at(pre + "context").get<std::string>();
        e.answers.push_back({j.at(pre + "answer").get<std::string>(), j.at(pre + "char_start").get<std::size_t>()});
        e.language = j.value(pre + "language", default_language);
        e.validate();
        return e;
      };
      p.source = side("src_", "src", j.value("src_id", p.id));
      p.target = side("tgt_", p.same_language ? p.source.language : "tgt",
                      j.value("tgt_id", p.same_language ? p.id : p.id + ".tgt"));
      if (p.same_language && !(p.source.question == p.target.question && p.source.context == p.target.context &&
                               p.source.answers == p.target.answers)) {
        throw Error("same_language pair has differing sides");
      }
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error("pairs: " + where + ": " + e.what());
    } catch (const Error& e) {
      throw Error("pairs: " + where + ": " + e.what());
    }
  }
  return out;
}

void save_pairs_jsonl(const std::filesystem::path& path, const std::vector<ParallelExample>& pairs) {
  std::ofstream out(path);
  if (!out) throw Error("pairs: cannot open '" + path.string() + "' for writing");
  for (const auto& p : pairs) {
    json j = {{"id", p.id},
              {"src_id", p.source.id},
              {"src_question", p.source.question},
              {"src_context", p.source.context},
              {"src_answer", p.source.answers.front().text},
              {"src_char_start", p.source.answers.front().char_start},
              {"src_language", p.source.language},
              {"tgt_id", p.target.id},
              {"tgt_question", p.target.question},
              {"tgt_context", p.target.context},
              {"tgt_answer", p.target.answers.front().text},
              {"tgt_char_start", p.target.answers.front().char_start},
              {"tgt_language", p.target.language},
              {"same_language", p.same_language}};
    out << j.dump() << '\n';
  }
}

// --------------------------------------------------------------- batches

std::vector<EncodedPair> encode_pairs(const std::vector<ParallelExample>& pairs, const Vocab& vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p, tokenize_and_map(p.source, vocab), tokenize_and_map(p.target, vocab)});
  return out;
}

std::vector<int> Batch::source_row(std::size_t r) const {
  const auto row = static_cast<Index>(r);
  std::vector<int> ids;
  for (Index j = 0; j < source_ids.cols() && source_mask(row, j); ++j) ids.push_back(source_ids(row, j));
  return ids;
}

std::vector<int> Batch::target_row(std::size_t r) const {
  const auto row = static_cast<Index>(r);
  std::vector<int> ids;
  for (Index j = 0; j < target_ids.cols() && target_mask(row, j); ++j) ids.push_back(target_ids(row, j));
  return ids;
}

std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, int batch_size, std::uint64_t seed,
                                bool shuffle) {
  if (batch_size <= 0) throw Error("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    const auto rows = static_cast<Index>(end - begin);
    Index src_len = 0, tgt_len = 0;
    for (std::size_t k = begin; k < end; ++k) {
      src_len = std::max(src_len, pairs[order[k]].source.length());
      tgt_len = std::max(tgt_len, pairs[order[k]].target.length());
    }
    Batch b;
    b.source_ids = IdMatrix::Constant(rows, src_len, Vocab::kPad);
    b.target_ids = IdMatrix::Constant(rows, tgt_len, Vocab::kPad);
    b.source_mask = BoolMatrix::Constant(rows, src_len, false);
    b.target_mask = BoolMatrix::Constant(rows, tgt_len, false);
    for (std::size_t k = begin; k < end; ++k) {
      const auto r = static_cast<Index>(k - begin);
      const EncodedPair& e = pairs[order[k]];
      for (Index j = 0; j < e.source.length(); ++j) {
        b.source_ids(r, j) = e.source.ids[static_cast<std::size_t>(j)];
        b.source_mask(r, j) = true;
      }
      for (Index j = 0; j < e.target.length(); ++j) {
        b.target_ids(r, j) = e.target.ids[static_cast<std::size_t>(j)];
        b.target_mask(r, j) = true;
      }
      b.source_labels.push_back(e.source.label);
      b.target_labels.push_back(e.target.label);
      b.source_context.emplace_back(e.source.context_begin, e.source.context_end);
      b.target_context.emplace_back(e.target.context_begin, e.target.context_end);
      b.same_language.push_back(e.pair.same_language);
      b.ids.push_back(e.pair.id);
      b.indices.push_back(order[k]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace xmrc
