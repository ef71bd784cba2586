// Command-line front end: data generation, training, evaluation, exports
// and sweeps.

#include "xmrc/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xmrc;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

/// Turns leftover "--key value" arguments into config overrides.
void apply_extras(TrainConfig& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0) throw Error("unexpected argument '" + key + "'");
    key = key.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw Error("missing value for --" + key);
      value = extras[++i];
    }
    apply_override(config, key, value);
  }
}

TrainConfig base_config(const Globals& g, const std::vector<std::string>& extras) {
  TrainConfig c = g.config_path.empty() ? TrainConfig{} : load_train_config(g.config_path);
  apply_extras(c, extras);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::string text;
  for (const auto& r : records) text += r.dump() + "\n";
  write_text(path, text);
}

Vocab vocab_for(const std::string& vocab_path, const std::vector<ParallelExample>& pairs) {
  return vocab_path.empty() ? Vocab::build(pairs) : Vocab::load(vocab_path);
}

template <typename S>
int run_train(const TrainConfig& config, const std::string& train_path, const std::string& valid_path,
              const std::string& vocab_path, const fs::path& out) {
  const auto train_pairs = load_pairs_jsonl(train_path);
  const auto valid_pairs = valid_path.empty() ? std::vector<ParallelExample>{} : load_pairs_jsonl(valid_path);
  const Vocab vocab = vocab_for(vocab_path, train_pairs);
  TrainResult<S> r = train<S>(config, vocab, encode_pairs(train_pairs, vocab), encode_pairs(valid_pairs, vocab));
  write_jsonl(out / "metrics.jsonl", r.log);
  save_checkpoint(out / "checkpoint.bin", r.checkpoint);
  vocab.save(out / "vocab.txt");
  if (r.aborted) throw NumericError("training aborted: " + r.abort_reason + " (last good checkpoint saved)");
  std::cout << json{{"checkpoint", (out / "checkpoint.bin").string()}, {"step", r.checkpoint.step},
                    {"best_valid_mean_f1", r.checkpoint.best_score}}
                   .dump()
            << "\n";
  return 0;
}

template <typename S>
int run_eval(const fs::path& checkpoint, const std::vector<std::string>& extras, const std::string& pairs_path,
             std::optional<bool> calibrate, const fs::path& out) {
  Checkpoint<S> c = load_checkpoint<S>(checkpoint);
  apply_extras(c.config, extras);
  const auto pairs = encode_pairs(load_pairs_jsonl(pairs_path), c.vocab);
  const bool cal = calibrate.value_or(c.config.calibrate_at_inference());
  const EvalResult r = evaluate(c.model, c.config, pairs, cal);
  write_text(out / "predictions.json", r.predictions_json().dump(1) + "\n");
  json metrics = r.metrics_json();
  metrics["calibrate"] = cal;
  write_text(out / "metrics.json", metrics.dump(1) + "\n");
  std::cout << r.table();
  return 0;
}

template <typename S>
int run_export_attention(const fs::path& checkpoint, const std::vector<std::string>& extras,
                         const std::string& pairs_path, const std::string& id, const fs::path& out) {
  Checkpoint<S> c = load_checkpoint<S>(checkpoint);
  apply_extras(c.config, extras);
  const auto pairs = load_pairs_jsonl(pairs_path);
  if (pairs.empty()) throw Error("'" + pairs_path + "' has no pairs");
  auto it = std::find_if(pairs.begin(), pairs.end(), [&](const ParallelExample& p) { return id.empty() || p.id == id; });
  if (it == pairs.end()) throw Error("pair '" + id + "' not found in '" + pairs_path + "'");
  const auto encoded = encode_pairs({*it}, c.vocab);
  write_attention_csv(out, attention_maps(c.model, c.config, encoded.front()));
  std::cout << json{{"pair", it->id}, {"files", {(out / "gdks_attention.csv").string(), (out / "eca_attention.csv").string()}}}
                   .dump()
            << "\n";
  return 0;
}

template <typename S>
int run_export_repr(const fs::path& checkpoint, const std::vector<std::string>& extras, const std::string& pairs_path,
                    const std::string& mode, const fs::path& out) {
  Checkpoint<S> c = load_checkpoint<S>(checkpoint);
  apply_extras(c.config, extras);
  const auto pairs = encode_pairs(load_pairs_jsonl(pairs_path), c.vocab);
  const ReprMode m = mode == "normalized" ? ReprMode::Normalized : ReprMode::Raw;
  const auto rows = export_representations(c.model, c.config, pairs, m);
  const fs::path file = out / ("repr_" + mode + ".csv");
  write_repr_csv(file, rows);
  std::cout << json{{"file", file.string()}, {"rows", rows.size()}}.dump() << "\n";
  return 0;
}

SweepGrid parse_grid(const std::string& text) {
  SweepGrid grid;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(';', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("grid item '" + item + "' must look like key=v1,v2");
    std::vector<std::string> values;
    std::size_t p = eq + 1;
    while (p <= item.size()) {
      const std::size_t e = std::min(item.find(',', p), item.size());
      values.push_back(item.substr(p, e - p));
      p = e + 1;
    }
    grid.emplace_back(item.substr(0, eq), values);
  }
  if (grid.empty()) throw Error("empty sweep grid");
  return grid;
}

template <typename S>
int run_sweep(const TrainConfig& config, const std::string& grid_text, const std::string& train_path,
              const std::string& valid_path, const std::string& eval_path, const std::string& vocab_path,
              const fs::path& out) {
  const auto train_pairs = load_pairs_jsonl(train_path);
  const Vocab vocab = vocab_for(vocab_path, train_pairs);
  const auto valid = valid_path.empty() ? std::vector<EncodedPair>{} : encode_pairs(load_pairs_jsonl(valid_path), vocab);
  const auto table = sweep<S>(config, parse_grid(grid_text), vocab, encode_pairs(train_pairs, vocab), valid,
                              encode_pairs(load_pairs_jsonl(eval_path), vocab));
  write_jsonl(out / "sweep.jsonl", table);
  for (const auto& row : table) std::cout << row.dump() << "\n";
  return 0;
}

int gen_data(const Globals& g, SynthConfig synth, int num_train, int num_valid, int num_eval) {
  const fs::path out = g.out_dir;
  if (g.seed) synth.seed = *g.seed;
  auto split = [&](int count, std::uint64_t offset, const std::string& prefix, double self_fraction) {
    SynthConfig c = synth;
    c.seed = synth.seed + offset;
    c.num_examples = count;
    c.id_prefix = prefix;
    c.self_pair_fraction = self_fraction;
    return synth_corpus(c);
  };
  const auto train_pairs = split(num_train, 0, "train", synth.self_pair_fraction);
  const auto valid_pairs = split(num_valid, 1, "valid", synth.self_pair_fraction);
  const auto eval_pairs = split(num_eval, 2, "eval", 0.0);
  save_pairs_jsonl(out / "train.jsonl", train_pairs);
  save_pairs_jsonl(out / "valid.jsonl", valid_pairs);
  save_pairs_jsonl(out / "eval.jsonl", eval_pairs);
  save_pairs_jsonl(out / "eval_source.jsonl", source_self_pairs(eval_pairs));
  save_pairs_jsonl(out / "eval_target_self.jsonl", target_self_pairs(eval_pairs));
  save_pairs_jsonl(out / "train_source.jsonl", source_self_pairs(train_pairs));
  save_pairs_jsonl(out / "valid_source.jsonl", source_self_pairs(valid_pairs));
  Vocab::build(train_pairs).save(out / "vocab.txt");
  std::cout << json{{"out_dir", out.string()}, {"train", train_pairs.size()}, {"valid", valid_pairs.size()},
                    {"eval", eval_pairs.size()}}
                   .dump()
            << "\n";
  return 0;
}

template <typename F>
int dispatch(const std::string& precision, F&& f) {
  if (precision == "f32") return f(float{});
  if (precision == "f64") return f(double{});
  throw Error("unknown precision '" + precision + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual reading comprehension trainer"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (flat TrainConfig keys)");
  app.add_option("--seed", g.seed, "Overrides the config seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  SynthConfig synth;
  int num_train = 2000, num_valid = 200, num_eval = 500;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic parallel corpus");
  gen->add_option("--num-train", num_train);
  gen->add_option("--num-valid", num_valid);
  gen->add_option("--num-eval", num_eval);
  gen->add_option("--vocab-size", synth.vocab_size);
  gen->add_option("--shift-strength", synth.shift_strength);
  gen->add_option("--lexicon-seed", synth.lexicon_seed);
  gen->add_option("--self-pair-fraction", synth.self_pair_fraction);
  gen->add_option("--min-clauses", synth.min_clauses);
  gen->add_option("--max-clauses", synth.max_clauses);
  gen->add_option("--two-token-value-prob", synth.two_token_value_prob);

  std::string train_path, valid_path, vocab_path, eval_path, checkpoint, pairs_path, id, mode = "raw", grid;
  bool calibrate = false, no_calibrate = false;

  CLI::App* train_cmd = app.add_subcommand("train", "Train and keep the best validation checkpoint");
  train_cmd->add_option("--train", train_path)->required();
  train_cmd->add_option("--valid", valid_path);
  train_cmd->add_option("--vocab", vocab_path);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a pair file");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--pairs", pairs_path)->required();
  eval_cmd->add_flag("--calibrate", calibrate, "Force calibrated decoding");
  eval_cmd->add_flag("--no-calibrate", no_calibrate, "Decode from the target head only");

  CLI::App* att = app.add_subcommand("export-attention", "Write attention matrices of one pair as CSV");
  att->add_option("--checkpoint", checkpoint)->required();
  att->add_option("--pairs", pairs_path)->required();
  att->add_option("--id", id, "Pair id (default: first pair)");

  CLI::App* repr = app.add_subcommand("export-repr", "Write sentence representations as CSV");
  repr->add_option("--checkpoint", checkpoint)->required();
  repr->add_option("--pairs", pairs_path)->required();
  repr->add_option("--mode", mode)->check(CLI::IsMember({"raw", "normalized"}));

  CLI::App* sw = app.add_subcommand("sweep", "Train and evaluate every cell of a grid");
  sw->add_option("--grid", grid, "key=v1,v2;key2=v3")->required();
  sw->add_option("--train", train_path)->required();
  sw->add_option("--valid", valid_path);
  sw->add_option("--eval", eval_path)->required();
  sw->add_option("--vocab", vocab_path);

  for (CLI::App* sub : {train_cmd, eval_cmd, att, repr, sw}) sub->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << "\n";
    return 2;
  }

  try {
    const fs::path out = g.out_dir;
    fs::create_directories(out);
    if (gen->parsed()) return gen_data(g, synth, num_train, num_valid, num_eval);
    if (train_cmd->parsed()) {
      const TrainConfig c = base_config(g, train_cmd->remaining());
      write_text(out / "config.json", to_json(c).dump(1) + "\n");
      return dispatch(c.precision, [&](auto s) {
        return run_train<decltype(s)>(c, train_path, valid_path, vocab_path, out);
      });
    }
    if (sw->parsed()) {
      const TrainConfig c = base_config(g, sw->remaining());
      return dispatch(c.precision, [&](auto s) {
        return run_sweep<decltype(s)>(c, grid, train_path, valid_path, eval_path, vocab_path, out);
      });
    }
    const std::string precision = checkpoint_precision(checkpoint);
    if (eval_cmd->parsed()) {
      if (calibrate && no_calibrate) throw Error("--calibrate and --no-calibrate are exclusive");
      std::optional<bool> cal;
      if (calibrate) cal = true;
      if (no_calibrate) cal = false;
      return dispatch(precision, [&](auto s) {
        return run_eval<decltype(s)>(checkpoint, eval_cmd->remaining(), pairs_path, cal, out);
      });
    }
    if (att->parsed()) {
      return dispatch(precision, [&](auto s) {
        return run_export_attention<decltype(s)>(checkpoint, att->remaining(), pairs_path, id, out);
      });
    }
    return dispatch(precision, [&](auto s) {
      return run_export_repr<decltype(s)>(checkpoint, repr->remaining(), pairs_path, mode, out);
    });
  } catch (const NumericError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "numeric"}}.dump() << "\n";
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "error"}}.dump() << "\n";
  }
  return 1;
}
