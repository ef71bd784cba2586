#pragma once

#include "xmrc/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace xmrc {

/// Where the knowledge-sharing fusion output goes inside its layer.
enum class SharingPlacement {
  AttentionSublayer,  ///< replaces the self-attention sublayer; residual, norm and FFN still apply
  ReplaceLayer,       ///< the fused mixture is the layer output
};

/// Inputs of the trainable correction applied to detached source states.
enum class CorrectionInput {
  SourceAndTarget,  ///< [source row | mean of target rows], 2n -> n
  SourceOnly,       ///< source row, n -> n
};

struct ModelConfig {
  int num_layers = 4;
  int hidden_size = 64;
  int num_heads = 4;
  int ffn_size = 128;
  int vocab_size = 200;
  int max_seq_len = 64;
  double dropout_rate = 0.1;
  int gdks_layer = 2;
  double layer_norm_eps = 1e-5;
  /// Transfer-attention heads; 0 means num_heads.
  int calib_heads = 0;
  SharingPlacement placement = SharingPlacement::AttentionSublayer;
  CorrectionInput correction_input = CorrectionInput::SourceAndTarget;

  int transfer_heads() const { return calib_heads > 0 ? calib_heads : num_heads; }
  /// Throws Error when an invariant is violated.
  void validate() const;
};

enum class NegativesScope { SourceSide, BothSides };

/// Inputs of the token-level entropy penalty.
enum class EcaSource {
  HiddenStates,         ///< unprojected single-head attention between the fusion-layer inputs
  SharingAttention,     ///< head-averaged cross-attention of the fusion block
};

enum class TransferKeys { AllTokens, ContextOnly };

struct AlignmentConfig {
  double tau = 0.05;
  double sigma_s = 0.05;
  double eta_t = 0.05;
  NegativesScope negatives_scope = NegativesScope::SourceSide;
};

/// Ablation switches. A disabled term builds no graph.
struct Ablations {
  bool no_gdks = false;             ///< plain cross-attention: no stop-gradient, no correction
  bool no_atgc = false;             ///< no normalization, transfer, teacher loss or inference averaging
  bool no_atgc_inference = false;   ///< teacher loss kept, inference averaging off
  bool no_norm = false;             ///< transfer attention reads raw final states
  bool no_align_s = false;
  bool no_align_t = false;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 3e-5;
  int batch_size = 32;
  double warmup_fraction = 0.1;
  int epochs = 10;
  std::uint64_t seed = 7;
  double alpha = 0.2;
  double gamma = 0.1;
  double sigma_s = 0.05;
  double eta_t = 0.05;
  double tau = 0.05;
  double lambda0 = 0.3;
  double epsilon = 1e-8;
  double norm_momentum = 0.99;
  int max_answer_len = 30;
  NegativesScope negatives_scope = NegativesScope::SourceSide;
  EcaSource eca_source = EcaSource::HiddenStates;
  TransferKeys transfer_keys = TransferKeys::AllTokens;
  bool renormalize_transfer = false;
  Ablations ablations;
  /// "f64" or "f32".
  std::string precision = "f64";
  int log_every = 1;

  AlignmentConfig alignment() const { return {tau, sigma_s, eta_t, negatives_scope}; }
  bool use_transfer() const { return !ablations.no_atgc; }
  bool calibrate_at_inference() const { return !ablations.no_atgc && !ablations.no_atgc_inference; }
  void validate() const;
};

/// Flat key/value form: model fields and train fields share one namespace.
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

TrainConfig load_train_config(const std::filesystem::path& path);
/// Sets one flat key from its command-line text. Throws Error on unknown keys or bad values.
void apply_override(TrainConfig& config, const std::string& key, const std::string& value);

}  // namespace xmrc
