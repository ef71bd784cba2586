#include "xmrc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace xmrc {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ (stream * 0x2545f4914f6cdd1dULL)) + index);
}

template <typename S>
const char* dtype_name() {
  return std::is_same_v<S, float> ? "f32" : "f64";
}

}  // namespace

double scheduled_lr(double lr, std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps) {
  if (total_steps <= 0) return 0.0;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  const double t = static_cast<double>(total_steps);
  const double up = warmup_steps > 0 ? s / w : std::numeric_limits<double>::infinity();
  const double down = total_steps > warmup_steps ? 1.0 - (s - w) / (t - w) : 0.0;
  return lr * std::max(0.0, std::min(up, down));
}

template <typename S>
void adam_step(const std::vector<Parameter<S>*>& params, AdamState<S>& state, double lr) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: optimizer state does not match the parameter list");
  for (auto* p : params) {
    if (!p->grad.allFinite()) throw NumericError("adam_step: non-finite gradient for parameter '" + p->name + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(state.beta1);
  const S b2 = static_cast<S>(state.beta2);
  const S step_size = static_cast<S>(lr / bc1);
  const S inv_bc2 = static_cast<S>(1.0 / bc2);
  const S eps = static_cast<S>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<S>& p = *params[i];
    state.m[i] = b1 * state.m[i] + (S(1) - b1) * p.grad;
    state.v[i] = b2 * state.v[i] + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step_size * state.m[i].array() / ((state.v[i].array() * inv_bc2).sqrt() + eps);
  }
}

// ------------------------------------------------------------ checkpoints

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<S>& checkpoint) {
  TensorArchive a;
  a.meta["format"] = json("xmrc-checkpoint").dump();
  a.meta["precision"] = json(dtype_name<S>()).dump();
  a.meta["config"] = to_json(checkpoint.config).dump();
  a.meta["vocab"] = json(checkpoint.vocab.tokens()).dump();
  a.meta["step"] = json(checkpoint.step).dump();
  a.meta["best_score"] = json(checkpoint.best_score).dump();
  a.meta["norm_count"] = json(checkpoint.model.norm.count).dump();
  Model<S>& m = const_cast<Model<S>&>(checkpoint.model);
  for (auto* p : m.parameters()) a.tensors.push_back({p->name, p->value});
  a.tensors.push_back({"norm.running_mean", Matrix<S>(m.norm.running_mean)});
  a.tensors.push_back({"norm.running_var", Matrix<S>(m.norm.running_var)});
  save_archive(path, a);
}

namespace {

json meta_json(const TensorArchive& a, const std::string& key, const std::filesystem::path& path) {
  auto it = a.meta.find(key);
  if (it == a.meta.end()) throw Error("checkpoint '" + path.string() + "': missing meta '" + key + "'");
  try {
    return json::parse(it->second);
  } catch (const json::exception& e) {
    throw Error("checkpoint '" + path.string() + "': bad meta '" + key + "': " + e.what());
  }
}

}  // namespace

std::string checkpoint_precision(const std::filesystem::path& path) {
  return meta_json(load_archive(path), "precision", path).get<std::string>();
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive a = load_archive(path);
  if (meta_json(a, "format", path) != "xmrc-checkpoint") throw Error("'" + path.string() + "' is not a checkpoint");
  const std::string precision = meta_json(a, "precision", path).get<std::string>();
  if (precision != dtype_name<S>()) {
    throw Error("checkpoint '" + path.string() + "' is " + precision + ", requested " + dtype_name<S>());
  }
  Checkpoint<S> c;
  c.config = train_config_from_json(meta_json(a, "config", path));
  c.model = Model<S>::init(c.config, c.config.seed);
  Vocab v;
  const auto tokens = meta_json(a, "vocab", path).get<std::vector<std::string>>();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != static_cast<int>(i)) throw Error("checkpoint '" + path.string() + "': bad vocab");
  }
  c.vocab = std::move(v);
  c.step = meta_json(a, "step", path).get<std::int64_t>();
  c.best_score = meta_json(a, "best_score", path).get<double>();
  c.model.norm.count = meta_json(a, "norm_count", path).get<std::int64_t>();

  auto fetch = [&](const std::string& name, Index rows, Index cols) {
    const StoredTensor* t = a.find(name);
    if (!t) throw Error("checkpoint '" + path.string() + "': missing tensor '" + name + "'");
    if (t->rows() != rows || t->cols() != cols) {
      throw ShapeError("checkpoint tensor '" + name + "'", t->rows(), t->cols(), rows, cols);
    }
    return t->as<S>();
  };
  for (auto* p : c.model.parameters()) {
    p->value = fetch(p->name, p->value.rows(), p->value.cols());
    p->zero_grad();
  }
  const Index n = c.model.norm.running_mean.cols();
  c.model.norm.running_mean = fetch("norm.running_mean", 1, n);
  c.model.norm.running_var = fetch("norm.running_var", 1, n);
  return c;
}

// ------------------------------------------------------------- evaluation

json EvalResult::predictions_json() const {
  json j = json::object();
  for (const auto& e : examples) j[e.id] = e.text;
  return j;
}

json EvalResult::metrics_json() const {
  json langs = json::array();
  for (const auto& l : languages) langs.push_back({{"language", l.language}, {"em", l.em}, {"f1", l.f1}, {"count", l.count}});
  return {{"languages", langs}, {"mean_em", mean_em}, {"mean_f1", mean_f1}};
}

std::string EvalResult::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s\n", "language", "EM", "F1", "count");
  out << line;
  for (const auto& l : languages) {
    std::snprintf(line, sizeof line, "%-16s %8.2f %8.2f %8zu\n", l.language.c_str(), l.em, l.f1, l.count);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-16s %8.2f %8.2f\n", "mean", mean_em, mean_f1);
  out << line;
  return out.str();
}

template <typename S>
EvalResult evaluate(Model<S>& model, const TrainConfig& config, const std::vector<EncodedPair>& pairs, bool calibrate) {
  if (calibrate && !config.use_transfer()) throw Error("evaluate: calibration requested but the transfer path is disabled");
  EvalResult result;
  result.examples.resize(pairs.size());
  for (const Batch& batch : make_batches(pairs, std::max(1, config.batch_size), 0, false)) {
    Tape<S> tape(0);
    ForwardContext<S> ctx(tape, false, false);
    BatchOutput<S> out = forward_batch(ctx, model, config, batch, calibrate);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const EncodedPair& e = pairs[batch.indices[r]];
      if (calibrate && e.pair.source.context.empty()) {
        throw Error("evaluate: pair '" + e.pair.id + "' has no source counterpart");
      }
      Matrix<S> p = out.pairs[r].p_target.value();
      if (calibrate) p = xmrc::calibrate<S>(out.pairs[r].p_transfer->value(), p);
      const DecodedSpan d = decode_span(p, e.target.context_begin, e.target.context_end, config.max_answer_len);
      ExamplePrediction& ex = result.examples[batch.indices[r]];
      ex.id = e.pair.target.id;
      ex.language = e.pair.target.language;
      ex.start = d.start;
      ex.end = d.end;
      ex.text = render_span(e.pair.target, e.target, d.start, d.end);
      std::vector<std::string> golds;
      for (const auto& a : e.pair.target.answers) golds.push_back(a.text);
      ex.score = em_f1(ex.text, golds, text_style_for(ex.language));
    }
  }
  std::map<std::string, LanguageScore> by_lang;
  for (const auto& ex : result.examples) {
    LanguageScore& l = by_lang[ex.language];
    l.language = ex.language;
    l.em += ex.score.em;
    l.f1 += ex.score.f1;
    ++l.count;
  }
  for (auto& [_, l] : by_lang) {
    l.em = 100.0 * l.em / static_cast<double>(l.count);
    l.f1 = 100.0 * l.f1 / static_cast<double>(l.count);
    result.mean_em += l.em;
    result.mean_f1 += l.f1;
    result.languages.push_back(l);
  }
  if (!result.languages.empty()) {
    result.mean_em /= static_cast<double>(result.languages.size());
    result.mean_f1 /= static_cast<double>(result.languages.size());
  }
  return result;
}

// --------------------------------------------------------------- training

template <typename S>
TrainResult<S> train(const TrainConfig& config, const Vocab& vocab, const std::vector<EncodedPair>& train_pairs,
                     const std::vector<EncodedPair>& valid_pairs) {
  config.validate();
  if (vocab.size() > config.model.vocab_size) {
    throw Error("train: vocabulary has " + std::to_string(vocab.size()) + " tokens but vocab_size is " +
                std::to_string(config.model.vocab_size));
  }
  TrainResult<S> result;
  Model<S> model = Model<S>::init(config, config.seed);
  result.checkpoint = {config, model, vocab, 0, 0.0};
  if (config.epochs <= 0 || train_pairs.empty()) return result;

  const std::vector<Parameter<S>*> params = model.parameters();
  AdamState<S> adam;
  const auto batches_per_epoch =
      static_cast<std::int64_t>((train_pairs.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                static_cast<std::size_t>(config.batch_size));
  const std::int64_t total = batches_per_epoch * config.epochs;
  const auto warmup = static_cast<std::int64_t>(std::llround(config.warmup_fraction * static_cast<double>(total)));
  const bool calibrate = config.calibrate_at_inference();

  double best = -std::numeric_limits<double>::infinity();
  std::int64_t step = 0;
  auto term = [](const std::optional<Var<S>>& v) { return static_cast<double>(v->item()); };

  for (int epoch = 0; epoch < config.epochs && !result.aborted; ++epoch) {
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    for (const Batch& batch : make_batches(train_pairs, config.batch_size, derive_seed(config.seed, 1, epoch), true)) {
      const double lr = scheduled_lr(config.lr, step + 1, warmup, total);
      try {
        Tape<S> tape(derive_seed(config.seed, 2, static_cast<std::uint64_t>(step)));
        ForwardContext<S> ctx(tape, true, true);
        for (auto* p : params) p->zero_grad();
        BatchOutput<S> out = forward_batch(ctx, model, config, batch);
        const double loss = out.loss.item();
        if (!std::isfinite(loss)) throw NumericError("non-finite loss");
        tape.backward(out.loss);
        adam_step(params, adam, lr);
        ++step;
        loss_sum += loss;
        ++loss_count;
        if (config.log_every > 0 && step % config.log_every == 0) {
          json rec = {{"type", "step"}, {"step", step}, {"epoch", epoch}, {"lr", lr},
                      {"lambda", out.lambda.item()}, {"loss", loss}};
          const LossParts<S>& parts = out.parts;
          if (parts.mrc_source) rec["mrc_source"] = term(parts.mrc_source);
          if (parts.mrc_target) rec["mrc_target"] = term(parts.mrc_target);
          if (parts.teacher) rec["teacher"] = term(parts.teacher);
          if (parts.align_sentence) rec["align_sentence"] = term(parts.align_sentence);
          if (parts.align_token) rec["align_token"] = term(parts.align_token);
          result.log.push_back(std::move(rec));
        }
      } catch (const NumericError& e) {
        result.aborted = true;
        result.abort_reason = std::string("step ") + std::to_string(step + 1) + ": " + e.what();
        result.log.push_back({{"type", "abort"}, {"step", step + 1}, {"epoch", epoch}, {"reason", e.what()}});
        break;
      }
    }
    if (result.aborted) break;

    json rec = {{"type", "epoch"}, {"epoch", epoch}, {"step", step},
                {"train_loss", loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0}};
    double score = 0.0;
    if (!valid_pairs.empty()) {
      const EvalResult v = evaluate(model, config, valid_pairs, calibrate);
      json langs = json::object();
      for (const auto& l : v.languages) langs[l.language] = {{"em", l.em}, {"f1", l.f1}};
      rec["valid"] = langs;
      rec["valid_mean_f1"] = v.mean_f1;
      score = v.mean_f1;
    }
    const bool improved = score > best;
    rec["best"] = improved;
    result.log.push_back(std::move(rec));
    if (improved) {
      best = score;
      result.checkpoint = {config, model, vocab, step, score};
    }
  }
  for (auto* p : result.checkpoint.model.parameters()) p->zero_grad();
  return result;
}

// ---------------------------------------------------------------- exports

template <typename S>
AttentionMaps<S> attention_maps(Model<S>& model, const TrainConfig& config, const EncodedPair& pair) {
  const std::vector<Batch> batches = make_batches(std::vector<EncodedPair>{pair}, 1, 0, false);
  Tape<S> tape(0);
  ForwardContext<S> ctx(tape, false, false);
  BatchOutput<S> out = forward_batch(ctx, model, config, batches.front(), false);
  const EncoderState<S>& st = out.pairs.front().state;
  AttentionMaps<S> maps;
  maps.target_tokens = pair.target.tokens;
  maps.source_tokens = pair.source.tokens;
  maps.sharing = st.sharing_attention.mean_weights();
  maps.eca = config.eca_source == EcaSource::HiddenStates
                 ? cross_attention_weights(st.sharing_query, st.sharing_source).value()
                 : maps.sharing;
  return maps;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename S>
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& rows,
                      const std::vector<std::string>& cols, const Matrix<S>& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "target\\source";
  for (const auto& c : cols) out << ',' << csv_field(c);
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << csv_field(rows[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < m.cols(); ++j) out << ',' << format_real(static_cast<double>(m(i, j)));
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace

template <typename S>
void write_attention_csv(const std::filesystem::path& dir, const AttentionMaps<S>& maps) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "gdks_attention.csv", maps.target_tokens, maps.source_tokens, maps.sharing);
  write_matrix_csv(dir / "eca_attention.csv", maps.target_tokens, maps.source_tokens, maps.eca);
}

Matrix<double> read_attention_csv(const std::filesystem::path& path, std::vector<std::string>* row_tokens,
                                  std::vector<std::string>* col_tokens) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path.string() + "' is empty");
  std::vector<std::string> header = split_csv_line(line);
  if (col_tokens) col_tokens->assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) throw Error("'" + path.string() + "': ragged row");
    if (row_tokens) row_tokens->push_back(f[0]);
    std::vector<double> r;
    for (std::size_t k = 1; k < f.size(); ++k) r.push_back(std::stod(f[k]));
    rows.push_back(std::move(r));
  }
  Matrix<double> m(static_cast<Index>(rows.size()), static_cast<Index>(header.size() - 1));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

template <typename S>
std::vector<ReprRow> export_representations(Model<S>& model, const TrainConfig& config,
                                            const std::vector<EncodedPair>& pairs, ReprMode mode) {
  std::vector<ReprRow> rows;
  std::vector<Matrix<S>> states;
  std::set<std::string> seen;
  auto keep = [&](const MrcExample& e, const Matrix<S>& h) {
    if (!seen.insert(e.id).second) return;
    rows.push_back({e.id, e.language, {}, h.rows()});
    states.push_back(h);
  };
  for (const Batch& batch : make_batches(pairs, std::max(1, config.batch_size), 0, false)) {
    Tape<S> tape(0);
    ForwardContext<S> ctx(tape, false, false);
    BatchOutput<S> out = forward_batch(ctx, model, config, batch, false);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const EncodedPair& e = pairs[batch.indices[r]];
      keep(e.pair.source, out.pairs[r].state.source.final().value());
      keep(e.pair.target, out.pairs[r].state.target.final().value());
    }
  }
  if (mode == ReprMode::Normalized && !states.empty()) {
    Index total = 0;
    for (const auto& h : states) total += h.rows();
    Matrix<S> all(total, states.front().cols());
    Index offset = 0;
    for (const auto& h : states) {
      all.middleRows(offset, h.rows()) = h;
      offset += h.rows();
    }
    Tape<S> tape(0);
    NormStats<S> stats = model.norm;
    const Matrix<S> z = normalize(tape.constant(std::move(all)), stats, NormMode::Train, false).value();
    offset = 0;
    for (auto& h : states) {
      h = z.middleRows(offset, h.rows());
      offset += h.rows();
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const RowVector<S> r = states[k].colwise().mean();
    rows[k].values.assign(r.data(), r.data() + r.size());
  }
  return rows;
}

void write_repr_csv(const std::filesystem::path& path, const std::vector<ReprRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "id,language";
  const std::size_t n = rows.empty() ? 0 : rows.front().values.size();
  for (std::size_t k = 0; k < n; ++k) out << ",d" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.id) << ',' << csv_field(r.language);
    for (double v : r.values) out << ',' << format_real(v);
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ------------------------------------------------------------------ sweep

template <typename S>
std::vector<json> sweep(const TrainConfig& base, const SweepGrid& grid, const Vocab& vocab,
                        const std::vector<EncodedPair>& train_pairs, const std::vector<EncodedPair>& valid_pairs,
                        const std::vector<EncodedPair>& eval_pairs) {
  std::size_t cells = 1;
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw Error("sweep: no values for '" + key + "'");
    cells *= values.size();
  }
  std::vector<json> table;
  for (std::size_t k = 0; k < cells; ++k) {
    json row = {{"cell", k}};
    json settings = json::object();
    std::size_t rem = k;
    std::vector<std::pair<std::string, std::string>> chosen(grid.size());
    for (std::size_t g = grid.size(); g-- > 0;) {
      const auto& values = grid[g].second;
      chosen[g] = {grid[g].first, values[rem % values.size()]};
      rem /= values.size();
    }
    try {
      TrainConfig cfg = base;
      for (const auto& [key, value] : chosen) {
        apply_override(cfg, key, value);
        settings[key] = value;
      }
      cfg.seed = base.seed + k;
      row["settings"] = settings;
      row["seed"] = cfg.seed;
      TrainResult<S> r = train<S>(cfg, vocab, train_pairs, valid_pairs);
      if (r.aborted) throw NumericError(r.abort_reason);
      const EvalResult e = evaluate(r.checkpoint.model, cfg, eval_pairs, cfg.calibrate_at_inference());
      row["metrics"] = e.metrics_json();
    } catch (const std::exception& e) {
      row["settings"] = settings;
      row["error"] = e.what();
    }
    table.push_back(std::move(row));
  }
  return table;
}

#define XMRC_INSTANTIATE_TRAINER(S)                                                                               \
  template void adam_step(const std::vector<Parameter<S>*>&, AdamState<S>&, double);                              \
  template void save_checkpoint(const std::filesystem::path&, const Checkpoint<S>&);                              \
  template Checkpoint<S> load_checkpoint<S>(const std::filesystem::path&);                                           \
  template EvalResult evaluate(Model<S>&, const TrainConfig&, const std::vector<EncodedPair>&, bool);             \
  template TrainResult<S> train<S>(const TrainConfig&, const Vocab&, const std::vector<EncodedPair>&,                \
                                const std::vector<EncodedPair>&);                                                 \
  template AttentionMaps<S> attention_maps(Model<S>&, const TrainConfig&, const EncodedPair&);                    \
  template void write_attention_csv(const std::filesystem::path&, const AttentionMaps<S>&);                       \
  template std::vector<ReprRow> export_representations(Model<S>&, const TrainConfig&,                             \
                                                       const std::vector<EncodedPair>&, ReprMode);                \
  template std::vector<json> sweep<S>(const TrainConfig&, const SweepGrid&, const Vocab&,                            \
                                   const std::vector<EncodedPair>&, const std::vector<EncodedPair>&,              \
                                   const std::vector<EncodedPair>&);

XMRC_INSTANTIATE_TRAINER(float)
XMRC_INSTANTIATE_TRAINER(double)

}  // namespace xmrc
