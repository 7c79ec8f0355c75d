#pragma once

// Small model and scene shared by the gradient and GRPO checks.

#include "tigflow/model.hpp"
#include "tigflow/rng.hpp"

namespace toy {

inline tigflow::Model model(std::uint64_t seed) {
  tigflow::EncoderConfig e;
  e.dim = 6;
  tigflow::FlowConfig f;
  f.future_len = 2;
  f.time_embed_dim = 4;
  f.context_proj_dim = 4;
  f.hidden = 8;
  f.depth = 2;
  return tigflow::Model::init(e, f, 8, seed);
}

// Agents walk roughly toward each other so the interaction graph is non-empty.
inline tigflow::TrajectoryWindow window(tigflow::Rng& rng, int agents, int future_len = 2) {
  using tigflow::Vec2;
  std::vector<tigflow::Track> h(agents), f(agents);
  std::vector<std::int64_t> ids;
  for (int a = 0; a < agents; ++a) {
    ids.push_back(a);
    const double side = a % 2 == 0 ? -1.0 : 1.0;
    Vec2 p(side * rng.uniform(1.0, 2.5), rng.uniform(-1.0, 1.0));
    const Vec2 v(-side * rng.uniform(0.2, 0.4), 0.05 * rng.normal());
    for (int t = 0; t < 8; ++t) {
      h[a].push_back(p);
      p += v + Vec2(0.01 * rng.normal(), 0.01 * rng.normal());
    }
    for (int t = 0; t < future_len; ++t) f[a].push_back(p + v * (t + 1));
  }
  return tigflow::make_window("toy", ids, h, f);
}

inline void perturb(tigflow::ParamSet& p, tigflow::Rng& rng, double scale) {
  for (std::size_t b = 0; b < p.size(); ++b) {
    for (Eigen::Index i = 0; i < p[b].size(); ++i) p[b].data()[i] += scale * rng.normal();
  }
}

}  // namespace toy
