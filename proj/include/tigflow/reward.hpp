#pragma once

#include <optional>
#include <vector>

#include "tigflow/scene_map.hpp"
#include "tigflow/trajectory.hpp"

namespace tigflow {

struct SocialRewardConfig {
  double radius = 3.0;    // R, meters
  double phi_s = 60.0;    // degrees
  double phi_w = 120.0;   // degrees
  double delta_s = 0.6;   // meters
  double delta_w = 0.3;   // meters
  double m_w = 0.3;       // meters per step
  double m_r = 0.5;       // meters per step
  double w_s = 1.0;
  double w_wc = 0.5;
  double w_wo = 0.1;
  double w_r = 0.05;
  double eps = 1e-6;
  bool average_valid_only = true;  // Avg over valid (j, t) pairs; false uses all (A-1) * T_f

  void validate() const;
};

struct MapRewardConfig {
  double delta_map = 2.0;        // map cells
  std::vector<int> obs_indices;  // history frames forming the baseline; empty = all

  void validate() const;
};

struct RewardWeights {
  double w_sv = 1.0;
  double w_map = 1.0;
  double w_acc = 1.0;
  double w_sm = 0.1;

  void validate() const;
};

struct RewardConfig {
  SocialRewardConfig social;
  MapRewardConfig map;
  RewardWeights weights;

  void validate() const;
};

struct RewardBreakdown {
  double r_sv = 0.0;
  double r_map = 0.0;
  double r_acc = 0.0;
  double r_sm = 0.0;
  double total = 0.0;
  bool map_present = false;
};

// h^1 = y^1 - x^0, h^t = y^t - y^(t-1).
[[nodiscard]] Track headings(const Track& pred_abs, const Vec2& origin);

enum class ViewRegion { strong, weak, rear, invalid };

// Region of neighbour offset r seen from heading h.
[[nodiscard]] ViewRegion view_decompose(const Vec2& h, const Vec2& r, const SocialRewardConfig& cfg);

// r_sv for every agent, using co-sampled absolute futures preds_abs[agent] and
// the last observed positions.
[[nodiscard]] std::vector<double> social_reward(const std::vector<Track>& preds_abs, const std::vector<Vec2>& origins,
                                                const SocialRewardConfig& cfg);

// Average hinge^2 risk [delta_map - d]_+^2 over the given world points.
[[nodiscard]] double map_risk(const Track& points_abs, const SceneMap& map, double delta_map);

// Baseline risk q_obs from the observed history.
[[nodiscard]] double history_map_risk(const Track& history, const SceneMap& map, const MapRewardConfig& cfg);

// r_map = -[avg_t hinge^2(pred) - q_obs]_+.
[[nodiscard]] double map_reward(const Track& pred_abs, const Track& history, const SceneMap& map,
                                const MapRewardConfig& cfg);

// -(1/T_f) sum ||y_hat - y||.
[[nodiscard]] double acc_reward(const Track& pred, const Track& gt);

// -(1/(T_f - 1)) sum ||a^t||^2, second differences of [x^0, y^1 .. y^T_f].
[[nodiscard]] double smooth_reward(const Track& pred_abs, const Vec2& origin);

[[nodiscard]] RewardBreakdown composite_reward(double r_sv, double r_map, double r_acc, double r_sm,
                                               const RewardWeights& w);

// Breakdowns for every agent of one co-sampled future of a window.
[[nodiscard]] std::vector<RewardBreakdown> score_window(const TrajectoryWindow& window,
                                                        const std::vector<Track>& preds_abs, const SceneMap* map,
                                                        const RewardConfig& cfg);

}  // namespace tigflow
