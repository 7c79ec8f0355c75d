#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tigflow/config.hpp"
#include "tigflow/metrics.hpp"
#include "tigflow/scene_map.hpp"
#include "tigflow/trajectory.hpp"

namespace tigflow {

struct Dataset {
  std::vector<TrajectoryWindow> train;
  std::vector<TrajectoryWindow> eval;
  std::optional<SceneMap> map;

  [[nodiscard]] const SceneMap* map_ptr() const noexcept { return map ? &*map : nullptr; }
};

// Synthetic: training episodes [first, first + n_windows), evaluation episodes
// right after them. Files: windows at the training stride for train_files and
// at the evaluation stride for eval_files (train_files when none are given).
[[nodiscard]] Dataset load_dataset(const RunConfig& cfg);

// SHA-1 over "blob <size>\0<content>", hex encoded.
[[nodiscard]] std::string git_blob_hash(std::string_view content);
[[nodiscard]] std::string file_hash(const std::string& path);
[[nodiscard]] std::string windows_hash(const std::vector<TrajectoryWindow>& windows);

// Each command writes into out_dir (created when missing) and throws
// ConfigError / DataError / NumericError on failure.

// train.txt, eval.txt, manifest.json, plus map.pgm / map.json for map scenes.
void cmd_gen_synth(const RunConfig& cfg, const std::string& out_dir);

// flow.{json,bin} and loss.jsonl. With `resume`, continues from that
// checkpoint's optimizer step. stop_at < 0 runs to train.steps.
void cmd_train_flow(const RunConfig& cfg, const std::string& out_dir, const std::string& resume = "",
                    std::int64_t stop_at = -1);

// grpo.{json,bin} and grpo_log.jsonl; the input checkpoint is the frozen
// reference.
void cmd_posttrain(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir);

// report.json, report.csv, predictions.json.
MetricsReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir);

// scores.csv (scene_id, agent_id, g, r_sv, r_map, r_acc, r_sm, total) and
// score_manifest.json for a predictions file in the eval dump format.
void cmd_score(const RunConfig& cfg, const std::string& trajectories, const std::string& out_dir);

}  // namespace tigflow
