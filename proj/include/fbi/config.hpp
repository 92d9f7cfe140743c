#pragma once

#include <string>

#include "fbi/noise.hpp"
#include "fbi/types.hpp"

namespace fbi {

/// Plain-text key=value run settings. Unknown keys are rejected so a typo
/// cannot silently fall back to a default. epochs = 0 means "use the
/// command's default" (PGE and denoiser training differ).
struct RunConfig {
  std::uint64_t seed = 1;
  SynthesisMode mode = SynthesisMode::MeanPreserving;
  Scalar alpha = 0.05;
  Scalar sigma = 0.02;
  MixtureRanges ranges;
  Index epochs = 0;
  Index batch = 4;
  Scalar lr = 1e-3;
  Index patch = 64;
  std::string net_config;
  std::string data;
  std::string out;
};

RunConfig parse_run_config(const std::string& text);
RunConfig read_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

std::string mode_name(SynthesisMode mode);
SynthesisMode mode_from_name(const std::string& name);

}  // namespace fbi
