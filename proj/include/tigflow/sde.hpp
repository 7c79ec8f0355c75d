#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <vector>

#include "tigflow/autodiff.hpp"
#include "tigflow/flow.hpp"
#include "tigflow/params.hpp"
#include "tigflow/rng.hpp"

namespace tigflow {

struct SdeSchedule {
  double eta = 0.7;
  double tau_min = 0.05;
  int n_steps = 10;

  void validate() const;
  [[nodiscard]] double dt() const noexcept { return 1.0 / n_steps; }
  [[nodiscard]] double time(int k) const noexcept { return k * dt(); }
};

[[nodiscard]] double clip_time(double t, const SdeSchedule& s);

// s = (t_bar * v - y) / (1 - t_bar). Throws when t_bar >= 1 - 1e-12.
[[nodiscard]] Matrix recover_score(const Matrix& y, const Matrix& v, double t_bar);

// g = eta * sqrt((1 - t_bar) / t_bar). Throws when t_bar <= 0.
[[nodiscard]] double diffusion_coeff(double t_bar, const SdeSchedule& s);

// sigma_t = g(t_bar) * sqrt(dt) for the step starting at t.
[[nodiscard]] double step_sigma(double t, const SdeSchedule& s);

// mu = y + [v + g^2 s / 2] dt with v already evaluated at (y, t_bar).
[[nodiscard]] Matrix transition_mean(const Matrix& y, const Matrix& v, double t, const SdeSchedule& s);

// Row-wise log N(x; mean, sigma^2 I).
[[nodiscard]] Eigen::VectorXd gaussian_log_prob(const Matrix& x, const Matrix& mean, double sigma);

// One transition for a batch of independent rows (each row its own policy).
// Every row shares t and sigma.
struct SdeStepRecord {
  double t = 0.0;
  Matrix y_in;
  Matrix mean;
  double sigma = 0.0;
  Matrix y_out;
  Matrix noise;
  Eigen::VectorXd log_prob;  // per row; NaN when degenerate
  bool degenerate = false;   // sigma == 0
};

// Evaluates v once at (y, t_bar), samples eps ~ N(0, I) row-major from rng.
[[nodiscard]] SdeStepRecord sde_step(const Matrix& y, double t, const VelocityFn& v, const SdeSchedule& s, Rng& rng);

struct SdeRollout {
  Matrix final_state;
  std::vector<SdeStepRecord> steps;
};

// Iterates sde_step from the caller-supplied prior draw xi over the uniform grid.
[[nodiscard]] SdeRollout sde_rollout(const VelocityFn& v, const Matrix& xi, const SdeSchedule& s, Rng& rng);

// Log-densities of the recorded y_out under the mean recomputed from `v`.
// Rejects records whose sigma disagrees with the schedule or is zero.
// Result: steps x rows.
[[nodiscard]] Matrix log_prob_under(const VelocityFn& v, const std::vector<SdeStepRecord>& steps,
                                    const SdeSchedule& s);

// Differentiable transition mean for the network's rows at the recorded state.
[[nodiscard]] ad::Var transition_mean(ParamBinding& b, const FlowNetParams& p, const Matrix& y_in, double t,
                                      const ad::Var& ctx, const SdeSchedule& s);

// Differentiable row-wise Gaussian log-density (rows x 1) of constant x.
[[nodiscard]] ad::Var gaussian_log_prob(const ad::Var& mean, const Matrix& x, double sigma);

// One JSON object per step: {"t","sigma","degenerate","y_in","mean","y_out","noise","log_prob"}.
void write_trace_jsonl(std::ostream& out, const std::vector<SdeStepRecord>& steps);

}  // namespace tigflow
