#pragma once

// Optimizer, training loop with best-checkpoint selection, evaluation,
// checkpoints, exports and hyperparameter sweeps.

#include "xmrc/model.hpp"
#include "xmrc/tensor_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace xmrc {

/// lr * min(step / warmup, 1 - (step - warmup) / (total - warmup)), clamped at 0.
double scheduled_lr(double lr, std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps);

template <typename S>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix<S>> m;
  std::vector<Matrix<S>> v;
};

/// One bias-corrected Adam update from each parameter's `grad`. Throws
/// NumericError naming the parameter when a gradient is not finite.
template <typename S>
void adam_step(const std::vector<Parameter<S>*>& params, AdamState<S>& state, double lr);

template <typename S>
struct Checkpoint {
  TrainConfig config;
  Model<S> model;
  Vocab vocab;
  std::int64_t step = 0;
  double best_score = 0.0;
};

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<S>& checkpoint);
template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path);
/// "f32" or "f64", read from the checkpoint header.
std::string checkpoint_precision(const std::filesystem::path& path);

struct LanguageScore {
  std::string language;
  double em = 0.0;  ///< percent
  double f1 = 0.0;  ///< percent
  std::size_t count = 0;
};

struct ExamplePrediction {
  std::string id;
  std::string language;
  std::string text;
  Index start = 0;
  Index end = 0;
  MatchScore score;
};

struct EvalResult {
  std::vector<LanguageScore> languages;  ///< sorted by language tag
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  std::vector<ExamplePrediction> examples;  ///< in input order

  nlohmann::json predictions_json() const;
  nlohmann::json metrics_json() const;
  std::string table() const;
};

/// Scores the target side of each pair. With `calibrate` the decoded
/// distribution is the average of the target head and the transferred
/// source distribution.
template <typename S>
EvalResult evaluate(Model<S>& model, const TrainConfig& config, const std::vector<EncodedPair>& pairs, bool calibrate);

template <typename S>
struct TrainResult {
  Checkpoint<S> checkpoint;            ///< best validation checkpoint (the initial model when epochs = 0)
  std::vector<nlohmann::json> log;     ///< one record per logged step and per epoch
  bool aborted = false;
  std::string abort_reason;
};

/// Adam with linear warmup/decay; after every epoch the validation set is
/// scored and the checkpoint with the best mean F1 over languages is kept.
/// A numeric failure stops training and returns the last good checkpoint.
template <typename S>
TrainResult<S> train(const TrainConfig& config, const Vocab& vocab, const std::vector<EncodedPair>& train_pairs,
                     const std::vector<EncodedPair>& valid_pairs);

/// Head-averaged fusion cross-attention and entropy-penalty attention of one pair.
template <typename S>
struct AttentionMaps {
  std::vector<std::string> target_tokens;
  std::vector<std::string> source_tokens;
  Matrix<S> sharing;  ///< N_T x N_S
  Matrix<S> eca;      ///< N_T x N_S
};

template <typename S>
AttentionMaps<S> attention_maps(Model<S>& model, const TrainConfig& config, const EncodedPair& pair);

/// Writes `<dir>/gdks_attention.csv` and `<dir>/eca_attention.csv`.
template <typename S>
void write_attention_csv(const std::filesystem::path& dir, const AttentionMaps<S>& maps);

/// Reads a matrix written by write_attention_csv (headers dropped).
Matrix<double> read_attention_csv(const std::filesystem::path& path, std::vector<std::string>* row_tokens = nullptr,
                                  std::vector<std::string>* col_tokens = nullptr);

enum class ReprMode { Raw, Normalized };

struct ReprRow {
  std::string id;
  std::string language;
  std::vector<double> values;
  Index tokens = 0;
};

/// One sentence representation per distinct example (source sides first
/// seen, then targets). Normalized mode standardizes token states with the
/// statistics of all exported tokens before pooling.
template <typename S>
std::vector<ReprRow> export_representations(Model<S>& model, const TrainConfig& config,
                                            const std::vector<EncodedPair>& pairs, ReprMode mode);

void write_repr_csv(const std::filesystem::path& path, const std::vector<ReprRow>& rows);

using SweepGrid = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Cartesian product of the grid, first key varying slowest. Cell k trains
/// with seed base.seed + k; failures are recorded and the sweep continues.
template <typename S>
std::vector<nlohmann::json> sweep(const TrainConfig& base, const SweepGrid& grid, const Vocab& vocab,
                                  const std::vector<EncodedPair>& train_pairs,
                                  const std::vector<EncodedPair>& valid_pairs,
                                  const std::vector<EncodedPair>& eval_pairs);

}  // namespace xmrc
