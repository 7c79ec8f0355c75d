#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "tigflow/annotations.hpp"
#include "tigflow/encoder.hpp"
#include "tigflow/flow.hpp"
#include "tigflow/grpo.hpp"
#include "tigflow/metrics.hpp"
#include "tigflow/model.hpp"
#include "tigflow/reward.hpp"
#include "tigflow/sde.hpp"
#include "tigflow/synthetic.hpp"

namespace tigflow {

struct DataConfig {
  std::string source = "synth";  // "synth" or "files"
  SynthConfig synth;
  int eval_windows = 50;         // held-out synthetic episodes after the training ones
  std::vector<std::string> train_files;
  std::vector<std::string> eval_files;
  std::string map_pgm;           // optional occupancy map for file data
  std::string map_sidecar;
  WindowOptions window;
  int eval_stride = 0;           // 0 = history_len + future_len

  void validate() const;
};

struct RunConfig {
  DataConfig data;
  EncoderConfig encoder;
  FlowConfig flow;
  TrainConfig train;
  SdeSchedule sde;
  GrpoConfig grpo;
  RewardConfig reward;
  MetricsConfig metrics;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string precision = "float64";

  // Cross-section checks plus every section's own invariants.
  void validate() const;
};

// Strict parsing: unknown keys and wrong types raise ConfigError naming the
// offending path. Missing keys keep their defaults.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& j);
[[nodiscard]] RunConfig load_run_config(const std::string& path);
[[nodiscard]] nlohmann::json to_json(const RunConfig& cfg);

[[nodiscard]] nlohmann::json to_json(const EncoderConfig& cfg);
[[nodiscard]] nlohmann::json to_json(const FlowConfig& cfg);
[[nodiscard]] EncoderConfig encoder_config_from_json(const nlohmann::json& j);
[[nodiscard]] FlowConfig flow_config_from_json(const nlohmann::json& j);

struct ConfigKeyDoc {
  std::string key;  // dotted path
  std::string unit;
  std::string description;
};

// Every accepted key; defaults come from to_json(RunConfig{}).
[[nodiscard]] const std::vector<ConfigKeyDoc>& config_key_docs();
[[nodiscard]] std::string config_help_text();

}  // namespace tigflow
