#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tis/encoder.hpp"
#include "tis/interaction.hpp"
#include "tis/refiner.hpp"
#include "tis/synthetic.hpp"
#include "tis/training.hpp"

namespace tis {

/// Every tunable of the pipeline. The defaults below are the complete table;
/// configs/default.cfg lists the same values.
struct ProjectConfig {
  SyntheticSpec synthetic;
  std::size_t train_cases = 50;
  std::size_t eval_cases = 13;
  std::string data_dir = "data";

  EncoderConfig encoder;
  RefinerConfig refiner;
  TrainConfig train;
  SimulatorConfig simulator;
  int eval_clicks = 10;

  /// Keeps shared values (classes, feature width) consistent across sections.
  void sync();
};

/// Parses "key = value" lines; '#' starts a comment. Unknown keys and
/// malformed values raise ConfigError.
ProjectConfig parse_config(const std::string& text);
ProjectConfig load_config(const std::filesystem::path& path);
/// Applies one "key=value" override.
void apply_override(ProjectConfig& cfg, const std::string& key, const std::string& value);
/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const ProjectConfig& cfg);

}  // namespace tis
