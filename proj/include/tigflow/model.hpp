#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tigflow/encoder.hpp"
#include "tigflow/flow.hpp"
#include "tigflow/metrics.hpp"
#include "tigflow/optim.hpp"
#include "tigflow/scene_map.hpp"
#include "tigflow/trajectory.hpp"

namespace tigflow {

// Encoder plus conditional flow network.
struct Model {
  EncoderParams encoder;
  FlowNetParams flow;

  static Model init(const EncoderConfig& enc, const FlowConfig& flow, int history_len, std::uint64_t seed);
  [[nodiscard]] int future_len() const noexcept { return flow.config.future_len; }
  [[nodiscard]] double latent_scale() const noexcept { return flow.config.latent_scale; }
};

// Relative future flattened per agent as [x1, y1, x2, y2, ...] / scale.
[[nodiscard]] Matrix future_latent(const TrajectoryWindow& window, double scale);

// Inverse of future_latent for a block of agent rows, shifted by the origins.
[[nodiscard]] std::vector<Track> latent_to_absolute(const Matrix& latent, const std::vector<Vec2>& origins,
                                                    double scale);

[[nodiscard]] Matrix context_tokens(const Model& model, const TrajectoryWindow& window);

// K co-sampled futures per window by deterministic ODE rollout from K prior
// draws. Result: [k][agent], absolute.
[[nodiscard]] std::vector<std::vector<Track>> sample_futures(const Model& model, const TrajectoryWindow& window,
                                                             int k, Rng& prior, int n_steps);

// Prior draws come from stream(seed, "prior", window index).
[[nodiscard]] MetricsReport evaluate(const Model& model, const std::vector<TrajectoryWindow>& windows,
                                     const SceneMap* map, const MetricsConfig& cfg, std::uint64_t seed);

[[nodiscard]] MetricsReport evaluate_constant_velocity(const std::vector<TrajectoryWindow>& windows,
                                                       const SceneMap* map, const MetricsConfig& cfg);

// ---- pretraining ------------------------------------------------------------

struct TrainConfig {
  AdamWConfig optim;       // learning_rate 1e-4 by default
  int batch_size = 8;      // windows per step
  int steps = 2000;
  int draws_per_agent = 4; // (t, xi) draws per agent per step
  bool train_encoder = true;
  int checkpoint_every = 0;

  void validate() const;
};

struct TrainState {
  AdamWState encoder;
  AdamWState flow;
  std::int64_t step = 0;

  static TrainState init(const Model& model);
};

struct CfmResult {
  double loss = 0.0;
  ParamSet encoder_grads;
  ParamSet flow_grads;
};

// Joint CFM loss over a batch of windows with gradients for both networks
// (encoder grads stay zero when train_encoder is false).
[[nodiscard]] CfmResult cfm_batch_loss(const Model& model, std::span<const TrajectoryWindow* const> batch, Rng& rng,
                                       int draws, bool train_encoder);

struct TrainLogEntry {
  std::int64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

// Runs steps [state.step, state.step + n_steps). Step s draws its batch from
// stream(seed, "batch", s) and its CFM noise from stream(seed, "prior", s), so
// resuming from a saved state continues bit-identically.
std::vector<TrainLogEntry> pretrain(Model& model, TrainState& state, const std::vector<TrajectoryWindow>& windows,
                                    const TrainConfig& cfg, std::uint64_t seed, std::int64_t n_steps,
                                    const std::function<void(const TrainLogEntry&)>& on_step = {});

// ---- checkpoints --------------------------------------------------------------
// <prefix>.bin holds float64 blocks, <prefix>.json the manifest plus a config
// echo. Optimizer moments are stored as extra blocks when present.

struct Checkpoint {
  Model model;
  std::optional<TrainState> state;
  nlohmann::json meta;  // free-form: stage, seed, step, run config echo
};

void save_checkpoint(const std::string& prefix, const Model& model, const TrainState* state,
                     const nlohmann::json& meta);
[[nodiscard]] Checkpoint load_checkpoint(const std::string& prefix);

}  // namespace tigflow
