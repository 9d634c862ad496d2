#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "srvp/model.hpp"

namespace srvp {

/// Raised for unknown keys or unparsable values; the message names the key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::size_t glyphs = 1;
  std::size_t train_sequences = 400;
  std::size_t test_sequences = 100;
  std::uint64_t seed = 1;
  double min_speed = 1.0;
  double max_speed = 2.5;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 8;
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  double clip = 1.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool teacher_forcing = false;
  /// Fraction of the training file held out for validation when no
  /// separate validation file is given.
  double val_fraction = 0.1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything a run needs, read from a key=value file.
struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses `key = value` lines; `#` starts a comment. Keys not listed in
/// config_keys() are rejected. Missing keys keep their defaults.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical text with every key, in a fixed order.
std::string to_config_text(const RunConfig& config);

/// Applies a single key=value assignment.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

}  // namespace srvp
