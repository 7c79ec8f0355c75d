#include "tigflow/optim.hpp"

#include <cmath>

#include "tigflow/error.hpp"

namespace tigflow {

void AdamWConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
}

AdamWState AdamWState::init(const ParamSet& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

double global_norm(const ParamSet& grads) { return std::sqrt(grads.squared_norm()); }

double adamw_step(ParamSet& params, const ParamSet& grads, AdamWState& state, const AdamWConfig& cfg) {
  if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v)) {
    throw std::invalid_argument("adamw_step: parameter/gradient/state layout mismatch");
  }
  const double norm = global_norm(grads);
  const double scale = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix g = grads[i] * scale;
    if (cfg.weight_decay > 0.0) p *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
  return norm;
}

}  // namespace tigflow
