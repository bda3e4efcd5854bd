// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dietweight/evaluation.hpp"
#include "dietweight/synth.hpp"

namespace dietweight {

/// Declarative `key = value` run description. Lines starting with '#' are
/// comments. Unknown keys and malformed values throw ConfigError naming the line.
struct RunConfig {
  std::string diary;
  std::string canonical_map;
  PipelineConfig pipeline;
  SynthConfig synth;
  std::vector<double> lambdas = default_lambda_sweep();

  static RunConfig parse(std::istream& in, const std::string& base_dir = "");
  /// Relative paths are resolved against the config file's directory.
  static RunConfig load(const std::string& path);

  /// Every key with its effective value, one per line, in a fixed order.
  void write_resolved(std::ostream& out) const;
};

/// "text:hashed_bag:128" or "image:table:<path>".
ItemEncoderConfig parse_encoder_config(const std::string& text);

/// "B+L+S", "B+S", "none", ...
std::array<bool, kMealChannelCount> parse_meal_subset(const std::string& text);

}  // namespace dietweight
