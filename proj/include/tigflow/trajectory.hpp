#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tigflow {

using Vec2 = Eigen::Vector2d;
using Track = std::vector<Vec2>;

enum class Units { meters, pixels };

[[nodiscard]] const char* to_string(Units u) noexcept;
[[nodiscard]] Units units_from_string(const std::string& s);

// One forecasting instance. Positions are in the world frame; history[a].back()
// is the agent's anchor (origin[a]).
struct TrajectoryWindow {
  std::string scene_id;
  std::vector<std::int64_t> agent_ids;
  std::vector<Track> history;    // [agent][T_h]
  std::vector<Track> future_gt;  // [agent][T_f]
  std::vector<Vec2> origin;      // last observed position per agent
  double dt = 0.4;               // seconds per step (2.5 Hz)
  Units units = Units::meters;

  [[nodiscard]] int num_agents() const noexcept { return static_cast<int>(agent_ids.size()); }
  [[nodiscard]] int history_len() const noexcept {
    return history.empty() ? 0 : static_cast<int>(history.front().size());
  }
  [[nodiscard]] int future_len() const noexcept {
    return future_gt.empty() ? 0 : static_cast<int>(future_gt.front().size());
  }

  // Throws DataError when an invariant is broken.
  void validate() const;
};

// Builds a window from history/future tracks, deriving origin from the last
// history frame, and validates it.
[[nodiscard]] TrajectoryWindow make_window(std::string scene_id, std::vector<std::int64_t> agent_ids,
                                           std::vector<Track> history, std::vector<Track> future_gt,
                                           double dt = 0.4, Units units = Units::meters);

enum class Frame { relative, absolute };

// samples[k][agent] is one predicted future of T_f positions.
struct PredictionSet {
  std::vector<std::vector<Track>> samples;
  Frame frame = Frame::relative;

  [[nodiscard]] int num_samples() const noexcept { return static_cast<int>(samples.size()); }
  [[nodiscard]] int num_agents() const noexcept {
    return samples.empty() ? 0 : static_cast<int>(samples.front().size());
  }
};

// Shifts every sample by its agent's origin. Throws on agent-count or horizon
// mismatch and when the input is already absolute.
[[nodiscard]] PredictionSet to_absolute(const PredictionSet& pred, const TrajectoryWindow& window);

// out[t] = traj[t+1] - traj[t]. Requires at least two positions.
[[nodiscard]] Track finite_differences(std::span<const Vec2> traj);

}  // namespace tigflow
