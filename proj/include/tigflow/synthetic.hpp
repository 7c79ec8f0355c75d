#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tigflow/scene_map.hpp"
#include "tigflow/trajectory.hpp"

namespace tigflow {

enum class Scenario { crossing_flows, corridor, obstacle_field };

[[nodiscard]] const char* to_string(Scenario s) noexcept;
[[nodiscard]] Scenario scenario_from_string(const std::string& s);

struct SynthConfig {
  int n_agents = 8;
  Scenario scenario = Scenario::crossing_flows;
  double noise_std = 0.05;  // meters, observation noise per recorded position
  std::uint64_t seed = 0;
  int n_windows = 100;
  int history_len = 8;
  int future_len = 12;
  double dt = 0.4;
  int first_window = 0;  // index offset, lets train/test splits share one seed

  void validate() const;
};

struct SynthDataset {
  std::vector<TrajectoryWindow> windows;
  std::optional<SceneMap> map;  // obstacle_field only
};

// Goal-directed social-force crowd integrator (0.1 s substeps) sampled at dt.
//  corridor        parallel lanes with alternating directions
//  crossing_flows  two opposing streams sharing one band
//  obstacle_field  opposing streams routed around a central rectangle
// Each window is an independent episode seeded from (seed, window index).
[[nodiscard]] SynthDataset generate_synthetic(const SynthConfig& cfg);

// Geometry shared by the obstacle_field scenes and their map.
struct ObstacleRect {
  double x_min = -1.0, x_max = 1.0, y_min = -1.5, y_max = 1.5;
};
[[nodiscard]] ObstacleRect obstacle_field_rect() noexcept;
[[nodiscard]] SceneMap obstacle_field_map();

}  // namespace tigflow
