#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "melody/selector.hpp"
#include "melody/ssl.hpp"

namespace melody {

// Run configuration, read from line-oriented `key = value` text with
// `[section]` headers and `#` comments:
//
//   [corpus]  root
//   [output]  dir
//   [model]   preset (desk | large)
//   [train]   epochs, batch, learning_rate, pitch_shifts, seeds
//   [ssl]     mode, schedule, iterations, form, mix (L:U), warm_start
//   [select]  enabled, detector (heuristic | model), threshold
//   [run]     threads
//
// Unknown sections or keys are rejected; relative paths are resolved
// against the directory of the config file.
struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path output;
  std::string preset = "desk";
  SslConfig ssl;
  std::vector<int> pitch_shifts = {-2, -1, 1, 2};
  std::vector<std::uint64_t> seeds = {1};
  bool select = false;
  DetectorKind detector = DetectorKind::kModel;
  double threshold = kDefaultVocalThreshold;
  int threads = 1;
};

ModelConfig model_preset(const std::string& name);

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Canonical `key = value` rendering; equal configs render identically.
std::string canonical_text(const RunConfig& config);

// 16 hex digits identifying `canonical_text(config)` plus `extra`.
std::string config_hash(const RunConfig& config, const std::string& extra = {});

}  // namespace melody
