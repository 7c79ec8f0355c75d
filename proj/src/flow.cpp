#include "tigflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tigflow/error.hpp"

namespace tigflow {

void FlowConfig::validate() const {
  if (future_len < 1) throw ConfigError("flow.future_len must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw ConfigError("flow.time_embed_dim must be even and >= 2");
  if (context_proj_dim < 1 || hidden < 1) throw ConfigError("flow widths must be >= 1");
  if (depth < 1) throw ConfigError("flow.depth must be >= 1");
  if (!(latent_scale > 0.0)) throw ConfigError("flow.latent_scale must be > 0");
  if (ode_steps < 1) throw ConfigError("flow.ode_steps must be >= 1");
}

FlowNetParams FlowNetParams::init(const FlowConfig& cfg, int context_dim, std::uint64_t seed) {
  cfg.validate();
  if (context_dim < 1) throw ConfigError("flow: context dimension must be >= 1");
  FlowNetParams p;
  p.config = cfg;
  p.context_dim = context_dim;
  Rng rng = stream(seed, "init", 2);
  p.context_proj = add_linear(p.params, "context_proj", context_dim, cfg.context_proj_dim, rng);
  int in = cfg.latent_dim() + cfg.time_embed_dim + cfg.context_proj_dim;
  for (int l = 0; l < cfg.depth; ++l) {
    p.trunk.push_back(add_linear(p.params, "trunk." + std::to_string(l), in, cfg.hidden, rng));
    in = cfg.hidden;
  }
  p.out = add_linear(p.params, "out", in, cfg.latent_dim(), rng);
  return p;
}

Matrix time_embedding(const Eigen::VectorXd& t, int dim) {
  const int half = dim / 2;
  Matrix e(t.size(), dim);
  for (Eigen::Index r = 0; r < t.size(); ++r) {
    for (int k = 0; k < half; ++k) {
      const double w = std::numbers::pi * std::ldexp(1.0, k);
      e(r, 2 * k) = std::sin(w * t[r]);
      e(r, 2 * k + 1) = std::cos(w * t[r]);
    }
  }
  return e;
}

ad::Var flow_velocity(ParamBinding& b, const FlowNetParams& p, const ad::Var& y, const Eigen::VectorXd& t,
                      const ad::Var& ctx) {
  if (y.cols() != p.config.latent_dim() || ctx.cols() != p.context_dim || y.rows() != ctx.rows() ||
      y.rows() != t.size()) {
    throw std::invalid_argument("flow_velocity: shape mismatch");
  }
  ad::Tape& tape = b.tape();
  const ad::Var temb = tape.constant(time_embedding(t, p.config.time_embed_dim));
  ad::Var h = ad::concat_cols({y, temb, apply(b, p.context_proj, ctx)});
  for (const auto& layer : p.trunk) h = ad::tanh(apply(b, layer, h));
  return apply(b, p.out, h);
}

Matrix flow_velocity(const FlowNetParams& p, const Matrix& y, double t, const Matrix& ctx) {
  ad::Tape tape;
  ParamBinding b(tape, p.params, false);
  return flow_velocity(b, p, tape.constant(y), Eigen::VectorXd::Constant(y.rows(), t), tape.constant(ctx)).value();
}

CfmSample cfm_path(const Matrix& y1, const Matrix& xi, const Eigen::VectorXd& t) {
  if (y1.rows() != xi.rows() || y1.cols() != xi.cols() || t.size() != y1.rows()) {
    throw std::invalid_argument("cfm_path: shape mismatch");
  }
  CfmSample s;
  s.y_t = (y1.array().colwise() * t.array() + xi.array().colwise() * (1.0 - t.array())).matrix();
  s.target = y1 - xi;
  return s;
}

CfmSample cfm_path(const Matrix& y1, const Matrix& xi, double t) {
  return cfm_path(y1, xi, Eigen::VectorXd::Constant(y1.rows(), t));
}

ad::Var cfm_loss(ParamBinding& b, const FlowNetParams& p, const ad::Var& ctx, const Matrix& y1, Rng& rng, int draws) {
  if (draws < 1) throw std::invalid_argument("cfm_loss: draws must be >= 1");
  if (ctx.rows() != y1.rows() || y1.cols() != p.config.latent_dim()) throw std::invalid_argument("cfm_loss: shape mismatch");
  const Eigen::Index n = y1.rows();
  const Eigen::Index rows = n * draws;
  std::vector<int> src(static_cast<std::size_t>(rows));
  Matrix target_rows(rows, y1.cols());
  Matrix xi(rows, y1.cols());
  Eigen::VectorXd t(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index i = r % n;
    src[static_cast<std::size_t>(r)] = static_cast<int>(i);
    target_rows.row(r) = y1.row(i);
    t[r] = rng.uniform();
    for (Eigen::Index c = 0; c < xi.cols(); ++c) xi(r, c) = rng.normal();
  }
  const CfmSample s = cfm_path(target_rows, xi, t);
  ad::Tape& tape = b.tape();
  const ad::Var ctx_rows = draws == 1 ? ctx : ad::gather_rows(ctx, std::move(src));
  const ad::Var v = flow_velocity(b, p, tape.constant(s.y_t), t, ctx_rows);
  const ad::Var loss = ad::mean(ad::square(v - tape.constant(s.target)));
  if (!std::isfinite(loss.scalar())) throw NumericError("cfm_loss: non-finite loss");
  return loss;
}

VelocityFn bind_velocity(const FlowNetParams& p, const Matrix& ctx) {
  return [&p, ctx](const Matrix& y, double t) { return flow_velocity(p, y, t, ctx); };
}

Matrix euler_integrate(const VelocityFn& v, const Matrix& xi, int n_steps, std::optional<double> time_clip) {
  if (n_steps < 1) throw std::invalid_argument("euler_integrate: n_steps must be >= 1");
  const double dt = 1.0 / n_steps;
  Matrix y = xi;
  for (int k = 0; k < n_steps; ++k) {
    double t = k * dt;
    if (time_clip) t = std::clamp(t, *time_clip, 1.0 - *time_clip);
    y += v(y, t) * dt;
    if (!y.allFinite()) throw NumericError("ode_rollout: non-finite state at step " + std::to_string(k));
  }
  return y;
}

Matrix ode_rollout(const FlowNetParams& p, const Matrix& ctx, const Matrix& xi, int n_steps,
                   std::optional<double> time_clip) {
  return euler_integrate(bind_velocity(p, ctx), xi, n_steps, time_clip);
}

}  // namespace tigflow
