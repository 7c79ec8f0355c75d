#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tigflow/scene_map.hpp"
#include "tigflow/trajectory.hpp"

namespace tigflow {

struct MetricsConfig {
  int k = 20;
  double collision_threshold = 0.2;  // meters
  std::vector<int> horizons{3, 6, 9, 12};
  bool count_single_agent = false;   // single-agent windows in the collision denominator
  double delta_map = 2.0;            // map cells, for the violation rate
  std::vector<int> obs_indices;      // history frames forming the map baseline; empty = all

  void validate(int future_len) const;
};

struct AdeFde {
  double ade_min = 0.0;
  double fde_min = 0.0;
  double ade_avg = 0.0;
  double fde_avg = 0.0;
};

// samples and gt in the same frame; horizon in steps (1..T_f).
[[nodiscard]] AdeFde ade_fde(const std::vector<Track>& samples, const Track& gt, int horizon);

struct CollisionCount {
  std::int64_t colliding = 0;
  std::int64_t total = 0;
  [[nodiscard]] double rate() const noexcept { return total ? 100.0 * colliding / static_cast<double>(total) : 0.0; }
};

// samples[k][agent], absolute, co-sampled. One instance per (agent, k).
[[nodiscard]] CollisionCount collision_count(const std::vector<std::vector<Track>>& samples, double threshold,
                                             int horizon);
[[nodiscard]] double collision_rate(const std::vector<std::vector<Track>>& samples, double threshold, int horizon);

struct ViolationCount {
  std::int64_t violating = 0;
  std::int64_t total = 0;
  [[nodiscard]] double rate() const noexcept { return total ? 100.0 * violating / static_cast<double>(total) : 0.0; }
};

// A predicted point violates when its hinge risk [delta - d]_+^2 exceeds the
// agent's history baseline risk, i.e. it is closer to obstacles than the
// observed motion already was.
[[nodiscard]] ViolationCount map_violations(const std::vector<std::vector<Track>>& samples,
                                            const std::vector<Track>& histories, const SceneMap& map,
                                            double delta_map, const std::vector<int>& obs_indices, int horizon);

struct HorizonMetrics {
  int horizon = 0;
  double seconds = 0.0;
  double ade_min = 0.0, fde_min = 0.0, ade_avg = 0.0, fde_avg = 0.0;
  double col_rate = 0.0;            // percent
  double map_violation_rate = 0.0;  // percent; 0 without a map
};

struct MetricsReport {
  MetricsConfig config;
  std::vector<HorizonMetrics> horizons;
  std::int64_t windows = 0;
  std::int64_t agents = 0;
  std::int64_t collision_instances = 0;
  bool map_present = false;
  std::string units = "meters";
  std::uint64_t seed = 0;

  [[nodiscard]] const HorizonMetrics& at_horizon(int steps) const;
};

// predictions[w] holds window w's samples, absolute, samples[k][agent].
[[nodiscard]] MetricsReport evaluate_predictions(const std::vector<TrajectoryWindow>& windows,
                                                 const std::vector<std::vector<std::vector<Track>>>& predictions,
                                                 const SceneMap* map, const MetricsConfig& cfg);

// One constant-velocity extrapolation sample per window (last observed step).
[[nodiscard]] std::vector<std::vector<Track>> constant_velocity_prediction(const TrajectoryWindow& window);

[[nodiscard]] nlohmann::json report_to_json(const MetricsReport& r);
void write_report_csv(std::ostream& out, const MetricsReport& r);

}  // namespace tigflow
