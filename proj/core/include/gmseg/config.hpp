#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gmseg/augment.hpp"
#include "gmseg/model.hpp"
#include "gmseg/preprocess.hpp"
#include "gmseg/tensor.hpp"

namespace gmseg {

// ---- TOML-style documents ----

/// Scalar or array value of a config key.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<std::string, double, bool, Array> value;
  std::string raw;  // source token, kept for exact integer parsing
  int line = 0;
};

/// Flat map from dotted key ("section.key") to value. Supports `[section]`
/// headers, `key = value`, double-quoted strings, numbers, true/false, flat
/// arrays and `#` comments.
struct ConfigDocument {
  std::map<std::string, ConfigValue> entries;
  std::string source;  // file name for messages
};

ConfigDocument parse_config_text(std::string_view text, const std::string& source = "<config>");
ConfigDocument parse_config_file(const std::filesystem::path& path);

// ---- training configuration ----

enum class SplitScheme { None, PerSubject, EvenlySpaced };

struct SplitConfig {
  SplitScheme scheme = SplitScheme::PerSubject;
  std::size_t holdout_per_site = 2;
  std::size_t train_count = 15;
  std::size_t validation_count = 7;
  std::size_t test_count = 8;
};

/// Defaults reproduce the SCGM protocol; profile "exvivo" switches epochs
/// and the split scheme.
struct TrainConfig {
  std::string profile = "scgm";
  ModelConfig model = AsppConfig{};

  std::size_t batch_size = 11;
  double eta0 = 1e-3;
  std::size_t epochs = 1000;
  std::size_t batches_per_epoch = 32;
  double power = 0.9;
  double dropout = 0.4;
  double bn_momentum = 0.1;
  double dice_epsilon = 1.0;
  double tau = 0.999;
  std::uint64_t seed = 0;
  Precision precision = Precision::Float32;

  AugmentConfig augment;
  PreprocessConfig preprocess;
  SplitConfig split;

  /// Volume paths (PGM stack directories or NIfTI files).
  std::vector<std::filesystem::path> volumes;
  std::filesystem::path output_dir = "run";

  /// Keys set explicitly (file or environment), as canonical `key = value`.
  std::vector<std::string> overrides;

  void validate() const;
};

TrainConfig default_train_config(std::string_view profile = "scgm");

/// Builds a config from a document. Relative paths resolve against
/// `base_dir`. Unknown keys throw InvalidConfigError naming the key.
TrainConfig train_config_from_document(const ConfigDocument& doc,
                                       const std::filesystem::path& base_dir = {});
TrainConfig load_train_config(const std::filesystem::path& path);

/// Applies GMDL_SEED when set. Returns true if the seed changed.
bool apply_seed_override(TrainConfig& config, const char* env_value);

/// Canonical text listing every field; parsing it yields the same config.
std::string train_config_to_text(const TrainConfig& config);
/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const TrainConfig& config);
std::string fnv1a_hex(std::string_view text);

/// Model config with dropout and BN momentum taken from the train config.
ModelConfig effective_model_config(const TrainConfig& config);

std::string split_scheme_name(SplitScheme scheme);

}  // namespace gmseg
