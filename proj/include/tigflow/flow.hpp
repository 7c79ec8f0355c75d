#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "tigflow/autodiff.hpp"
#include "tigflow/params.hpp"
#include "tigflow/rng.hpp"

namespace tigflow {

struct FlowConfig {
  int future_len = 12;
  int time_embed_dim = 16;  // even; sin/cos pairs
  int context_proj_dim = 64;
  int hidden = 128;
  int depth = 3;              // hidden layers in the trunk
  double latent_scale = 1.0;  // latent = relative future / latent_scale
  int ode_steps = 10;

  void validate() const;
  [[nodiscard]] int latent_dim() const noexcept { return 2 * future_len; }
};

// v_theta(y_t, t, c): trunk MLP over [y | time embedding | projected context].
struct FlowNetParams {
  FlowConfig config;
  int context_dim = 64;
  ParamSet params;

  Linear context_proj;
  std::vector<Linear> trunk;
  Linear out;

  static FlowNetParams init(const FlowConfig& cfg, int context_dim, std::uint64_t seed);
};

// Sinusoidal embedding: [sin(w_k t), cos(w_k t)] with w_k = pi * 2^k.
[[nodiscard]] Matrix time_embedding(const Eigen::VectorXd& t, int dim);

// Rows of y, t and ctx line up; returns rows x latent_dim.
[[nodiscard]] ad::Var flow_velocity(ParamBinding& b, const FlowNetParams& p, const ad::Var& y,
                                    const Eigen::VectorXd& t, const ad::Var& ctx);

// Constant-parameter evaluation, one shared time for every row.
[[nodiscard]] Matrix flow_velocity(const FlowNetParams& p, const Matrix& y, double t, const Matrix& ctx);

struct CfmSample {
  Matrix y_t;
  Matrix target;  // y1 - xi
};

// y_t = t * y1 + (1 - t) * xi, row-wise; t has one entry per row.
[[nodiscard]] CfmSample cfm_path(const Matrix& y1, const Matrix& xi, const Eigen::VectorXd& t);
[[nodiscard]] CfmSample cfm_path(const Matrix& y1, const Matrix& xi, double t);

// Mean over elements of (v_theta(y_t, t, c) - (y1 - xi))^2 with t ~ U(0, 1) and
// xi ~ N(0, I) drawn from rng, `draws` per context row.
[[nodiscard]] ad::Var cfm_loss(ParamBinding& b, const FlowNetParams& p, const ad::Var& ctx, const Matrix& y1,
                               Rng& rng, int draws = 1);

// Velocity as a function of (state rows, time); lets the integrators run on
// stubbed fields.
using VelocityFn = std::function<Matrix(const Matrix& y, double t)>;

[[nodiscard]] VelocityFn bind_velocity(const FlowNetParams& p, const Matrix& ctx);

// Explicit Euler from t = 0 to 1 with dt = 1 / n_steps. With time_clip set, the
// field is evaluated at clip(t, tau, 1 - tau), which matches the SDE grid.
[[nodiscard]] Matrix euler_integrate(const VelocityFn& v, const Matrix& xi, int n_steps,
                                     std::optional<double> time_clip = std::nullopt);

[[nodiscard]] Matrix ode_rollout(const FlowNetParams& p, const Matrix& ctx, const Matrix& xi, int n_steps,
                                 std::optional<double> time_clip = std::nullopt);

}  // namespace tigflow
