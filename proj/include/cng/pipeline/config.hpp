#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cng/causal/causal.hpp"
#include "cng/hgt/model.hpp"
#include "cng/pipeline/synth.hpp"

namespace cng {

// Everything a run needs. Defaults are the reference hyperparameters;
// the remaining keys cover the causal stage, splitting and the synthetic
// corpus.
struct PipelineConfig {
  ModelConfig model;
  TrainConfig train;
  EstimatorConfig estimator;
  CausalTrainConfig causal;
  DistillDirection distill_direction = DistillDirection::remove;
  SynthSpec synth;
  double held_out_fraction = 0.1;
  std::uint64_t seed = 0;
  bool ablation_enricher = false;  // also train with the enricher disabled
  bool report_csv = false;
  bool distill_all = false;  // distill every document, not only the held-out split

  PipelineConfig();
  // Propagates the run seed into every stage.
  void set_seed(std::uint64_t s);
};

// Flat `key = value` text, `#` comments, blank lines ignored. Unknown or
// repeated keys and unparsable values raise ConfigError naming the key.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);
void apply_override(PipelineConfig& config, std::string_view assignment);

// All keys in file order with their current values, as text and as JSON.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& config);
std::string format_config(const PipelineConfig& config);
nlohmann::json to_json(const PipelineConfig& config);

}  // namespace cng
