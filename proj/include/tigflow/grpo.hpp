#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tigflow/model.hpp"
#include "tigflow/reward.hpp"
#include "tigflow/sde.hpp"

namespace tigflow {

struct GrpoConfig {
  int group_size = 4;      // G
  double eps_clip = 0.2;
  double beta = 0.01;
  double eps_adv = 1e-8;
  int inner_epochs = 1;    // gradient updates per collected batch
  int updates = 100;
  int conditions_per_update = 1;
  bool train_encoder = false;
  double collision_threshold = 0.2;  // meters, for the logged collision count
  int checkpoint_every = 0;
  AdamWConfig optim;

  void validate() const;
};

// A_g = (R_g - mean) / (std + eps_adv), population std.
[[nodiscard]] std::vector<double> advantages(const std::vector<double>& rewards, double eps_adv);

// Same-variance Gaussian KL: ||mu_a - mu_b||^2 / (2 sigma^2), per row.
[[nodiscard]] Eigen::VectorXd gaussian_kl_same_variance(const Matrix& mu_a, const Matrix& mu_b, double sigma);

struct Rollout {
  std::vector<SdeStepRecord> steps;      // rows = agents of the window
  std::vector<Track> preds_abs;          // [agent]
  std::vector<RewardBreakdown> rewards;  // [agent]
};

// G joint rollouts of every agent in one window from a shared prior draw.
struct RolloutGroup {
  const TrajectoryWindow* window = nullptr;
  const SceneMap* map = nullptr;
  Matrix context;  // agents x D at collection time
  Matrix xi;       // agents x latent, shared by all rollouts
  std::vector<Rollout> rollouts;
  Matrix advantages;                   // G x agents (each agent is its own condition)
  std::vector<Matrix> old_log_probs;   // [g] steps x agents, frozen at sampling
  std::vector<std::vector<Matrix>> ref_means;  // [g][step] agents x latent, frozen reference

  [[nodiscard]] int group_size() const noexcept { return static_cast<int>(rollouts.size()); }
};

// Rollout g draws its transition noise from noise_streams[g].
[[nodiscard]] RolloutGroup collect_group(const Model& policy, const Model& reference, const TrajectoryWindow& window,
                                         const SceneMap* map, const SdeSchedule& schedule, const RewardConfig& reward,
                                         const GrpoConfig& cfg, Rng& prior, std::span<Rng> noise_streams);

struct GrpoLossResult {
  double loss = 0.0;
  double surrogate = 0.0;  // mean of -min(rA, clip(r)A)
  double kl_pen = 0.0;     // mean of ||mu - mu_ref||^2 / (2 sigma^2), before beta
  double max_ratio_dev = 0.0;  // max |r - 1|
  std::vector<Matrix> ratios;  // [group] (G * steps) x agents, row = g * steps + k
  ParamSet flow_grads;
  ParamSet encoder_grads;  // zero unless cfg.train_encoder
};

// Mean over every (group, g, agent, step) of the clipped surrogate plus the
// beta-weighted reference penalty, with gradients.
[[nodiscard]] GrpoLossResult grpo_loss(const Model& policy, std::span<const RolloutGroup> groups,
                                       const GrpoConfig& cfg, const SdeSchedule& schedule);

struct GrpoLogEntry {
  std::int64_t update = 0;
  double mean_reward = 0.0;
  double mean_r_sv = 0.0;
  double mean_r_map = 0.0;
  double mean_r_acc = 0.0;
  double mean_r_sm = 0.0;
  double mean_collisions = 0.0;  // colliding agents per rollout
  double kl_pen = 0.0;
  double grad_norm = 0.0;
  double loss = 0.0;
};

struct GrpoState {
  AdamWState encoder;
  AdamWState flow;
  std::int64_t update = 0;

  static GrpoState init(const Model& model);
};

// Runs updates [state.update, state.update + n_updates). Update u visits a
// per-epoch shuffle of the windows and seeds its draws from (seed, u), so
// resuming continues bit-identically. Throws NumericError on divergence
// before touching the parameters.
std::vector<GrpoLogEntry> posttrain(Model& policy, const Model& reference, GrpoState& state,
                                    const std::vector<TrajectoryWindow>& windows, const SceneMap* map,
                                    const SdeSchedule& schedule, const RewardConfig& reward, const GrpoConfig& cfg,
                                    std::uint64_t seed, std::int64_t n_updates,
                                    const std::function<void(const GrpoLogEntry&)>& on_update = {});

}  // namespace tigflow
