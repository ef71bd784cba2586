#include "xmrc/config.hpp"

#include <fstream>

namespace xmrc {

using nlohmann::json;

namespace {

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<SharingPlacement> kPlacement[] = {{SharingPlacement::AttentionSublayer, "attention_sublayer"},
                                                     {SharingPlacement::ReplaceLayer, "replace_layer"}};
constexpr EnumName<CorrectionInput> kCorrection[] = {{CorrectionInput::SourceAndTarget, "source_and_target"},
                                                     {CorrectionInput::SourceOnly, "source_only"}};
constexpr EnumName<NegativesScope> kScope[] = {{NegativesScope::SourceSide, "source"},
                                               {NegativesScope::BothSides, "both"}};
constexpr EnumName<EcaSource> kEca[] = {{EcaSource::HiddenStates, "hidden"},
                                        {EcaSource::SharingAttention, "gdks_attention"}};
constexpr EnumName<TransferKeys> kKeys[] = {{TransferKeys::AllTokens, "all"}, {TransferKeys::ContextOnly, "context"}};

template <typename Enum, std::size_t N>
const char* enum_to_string(const EnumName<Enum> (&table)[N], Enum v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

template <typename Enum, std::size_t N>
Enum enum_from_string(const EnumName<Enum> (&table)[N], const std::string& key, const std::string& s) {
  std::string allowed;
  for (const auto& e : table) {
    if (s == e.name) return e.value;
    allowed += std::string(allowed.empty() ? "" : "|") + e.name;
  }
  throw Error("config: '" + key + "' must be one of " + allowed + ", got '" + s + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

template <typename Enum, std::size_t N>
void read_enum(const json& j, const char* key, const EnumName<Enum> (&table)[N], Enum& out) {
  std::string s;
  read(j, key, s);
  if (!s.empty()) out = enum_from_string(table, key, s);
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers <= 0) throw Error("config: num_layers must be positive");
  if (hidden_size <= 0 || num_heads <= 0 || hidden_size % num_heads != 0) {
    throw Error("config: hidden_size must be a positive multiple of num_heads");
  }
  if (transfer_heads() <= 0 || hidden_size % transfer_heads() != 0) {
    throw Error("config: hidden_size must be divisible by calib_heads");
  }
  if (gdks_layer < 0 || gdks_layer >= num_layers) throw Error("config: gdks_layer must be in [0, num_layers)");
  if (ffn_size <= 0 || vocab_size <= 0 || max_seq_len <= 0) throw Error("config: sizes must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw Error("config: dropout_rate must be in [0, 1)");
}

void TrainConfig::validate() const {
  model.validate();
  if (alpha < 0.0 || alpha > 1.0) throw Error("config: alpha must be in [0, 1]");
  if (gamma < 0.0 || sigma_s < 0.0 || eta_t < 0.0) throw Error("config: loss coefficients must be >= 0");
  if (tau <= 0.0) throw Error("config: tau must be > 0");
  if (epsilon <= 0.0) throw Error("config: epsilon must be > 0");
  if (batch_size <= 0) throw Error("config: batch_size must be positive");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (lr < 0.0) throw Error("config: lr must be >= 0");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw Error("config: warmup_fraction must be in [0, 1]");
  if (norm_momentum < 0.0 || norm_momentum > 1.0) throw Error("config: norm_momentum must be in [0, 1]");
  if (max_answer_len <= 0) throw Error("config: max_answer_len must be positive");
  if (precision != "f64" && precision != "f32") throw Error("config: precision must be f64|f32");
  if (log_every <= 0) throw Error("config: log_every must be positive");
}

json to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"hidden_size", c.hidden_size},
              {"num_heads", c.num_heads},
              {"ffn_size", c.ffn_size},
              {"vocab_size", c.vocab_size},
              {"max_seq_len", c.max_seq_len},
              {"dropout_rate", c.dropout_rate},
              {"gdks_layer", c.gdks_layer},
              {"layer_norm_eps", c.layer_norm_eps},
              {"calib_heads", c.calib_heads},
              {"gdks_placement", enum_to_string(kPlacement, c.placement)},
              {"correction_input", enum_to_string(kCorrection, c.correction_input)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read(j, "num_layers", c.num_layers);
  read(j, "hidden_size", c.hidden_size);
  read(j, "num_heads", c.num_heads);
  read(j, "ffn_size", c.ffn_size);
  read(j, "vocab_size", c.vocab_size);
  read(j, "max_seq_len", c.max_seq_len);
  read(j, "dropout_rate", c.dropout_rate);
  read(j, "gdks_layer", c.gdks_layer);
  read(j, "layer_norm_eps", c.layer_norm_eps);
  read(j, "calib_heads", c.calib_heads);
  read_enum(j, "gdks_placement", kPlacement, c.placement);
  read_enum(j, "correction_input", kCorrection, c.correction_input);
  return c;
}

json to_json(const TrainConfig& c) {
  json j = to_json(c.model);
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["warmup_fraction"] = c.warmup_fraction;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["sigma_s"] = c.sigma_s;
  j["eta_t"] = c.eta_t;
  j["tau"] = c.tau;
  j["lambda0"] = c.lambda0;
  j["epsilon"] = c.epsilon;
  j["norm_momentum"] = c.norm_momentum;
  j["max_answer_len"] = c.max_answer_len;
  j["negatives_scope"] = enum_to_string(kScope, c.negatives_scope);
  j["eca_source"] = enum_to_string(kEca, c.eca_source);
  j["transfer_keys"] = enum_to_string(kKeys, c.transfer_keys);
  j["renormalize_transfer"] = c.renormalize_transfer;
  j["no_gdks"] = c.ablations.no_gdks;
  j["no_atgc"] = c.ablations.no_atgc;
  j["no_atgc_inference"] = c.ablations.no_atgc_inference;
  j["no_norm"] = c.ablations.no_norm;
  j["no_align_s"] = c.ablations.no_align_s;
  j["no_align_t"] = c.ablations.no_align_t;
  j["precision"] = c.precision;
  j["log_every"] = c.log_every;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  const json known = to_json(TrainConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error("config: unknown key '" + key + "'");
  }
  TrainConfig c;
  c.model = model_config_from_json(j);
  read(j, "lr", c.lr);
  read(j, "batch_size", c.batch_size);
  read(j, "warmup_fraction", c.warmup_fraction);
  read(j, "epochs", c.epochs);
  read(j, "seed", c.seed);
  read(j, "alpha", c.alpha);
  read(j, "gamma", c.gamma);
  read(j, "sigma_s", c.sigma_s);
  read(j, "eta_t", c.eta_t);
  read(j, "tau", c.tau);
  read(j, "lambda0", c.lambda0);
  read(j, "epsilon", c.epsilon);
  read(j, "norm_momentum", c.norm_momentum);
  read(j, "max_answer_len", c.max_answer_len);
  read_enum(j, "negatives_scope", kScope, c.negatives_scope);
  read_enum(j, "eca_source", kEca, c.eca_source);
  read_enum(j, "transfer_keys", kKeys, c.transfer_keys);
  read(j, "renormalize_transfer", c.renormalize_transfer);
  read(j, "no_gdks", c.ablations.no_gdks);
  read(j, "no_atgc", c.ablations.no_atgc);
  read(j, "no_atgc_inference", c.ablations.no_atgc_inference);
  read(j, "no_norm", c.ablations.no_norm);
  read(j, "no_align_s", c.ablations.no_align_s);
  read(j, "no_align_t", c.ablations.no_align_t);
  read(j, "precision", c.precision);
  read(j, "log_every", c.log_every);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return train_config_from_json(j);
}

void apply_override(TrainConfig& config, const std::string& key, const std::string& value) {
  json j = to_json(config);
  auto it = j.find(key);
  if (it == j.end()) throw Error("config: unknown key '" + key + "'");
  try {
    if (it->is_string()) {
      *it = value;
    } else if (it->is_boolean()) {
      if (value == "true" || value == "1") {
        *it = true;
      } else if (value == "false" || value == "0") {
        *it = false;
      } else {
        throw Error("config: '" + key + "' expects true|false, got '" + value + "'");
      }
    } else if (it->is_number_unsigned()) {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      *it = v;
    } else if (it->is_number_integer()) {
      std::size_t pos = 0;
      const long long v = std::stoll(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      *it = v;
    } else {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      *it = v;
    }
  } catch (const std::logic_error&) {
    throw Error("config: cannot parse '" + value + "' for '" + key + "'");
  }
  config = train_config_from_json(j);
}

}  // namespace xmrc
