#include "tigflow/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tigflow/error.hpp"

namespace tigflow {

void FovConfig::validate() const {
  if (!(theta_fov_deg > 0.0 && theta_fov_deg <= 180.0)) throw ConfigError("fov.theta_fov must be in (0, 180]");
  if (top_k < 1) throw ConfigError("fov.top_k must be >= 1");
  if (window < 1) throw ConfigError("fov.window must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("fov.eps must be > 0");
}

void EncoderConfig::validate() const {
  fov.validate();
  if (dim < 1) throw ConfigError("encoder.dim must be >= 1");
  if (!(input_scale > 0.0)) throw ConfigError("encoder.input_scale must be > 0");
}

int visibility_mask(const Vec2& velocity, const Vec2& rel_pos, const FovConfig& cfg) {
  const double speed = velocity.norm();
  if (!(speed > cfg.eps)) return 0;
  const double dist = rel_pos.norm();
  if (dist <= 0.0) return 1;
  const double c = std::clamp(velocity.dot(rel_pos) / (speed * dist), -1.0, 1.0);
  const double angle_deg = std::acos(c) * 180.0 / std::numbers::pi;
  return angle_deg <= cfg.theta_fov_deg ? 1 : 0;
}

EdgeRaw edge_features(const Vec2& pos_i, const Vec2& vel_i, const Vec2& pos_j, const Vec2& vel_j, double eps) {
  const Vec2 dp = pos_j - pos_i;
  const Vec2 dv = vel_j - vel_i;
  const double dist = dp.norm();
  const double speed = vel_i.norm();
  const double cosine = (speed > eps && dist > eps) ? vel_i.dot(dp) / (speed * dist) : 0.0;
  return {dp.x(), dp.y(), dv.x(), dv.y(), dist, cosine};
}

std::vector<Track> history_velocities(const TrajectoryWindow& window) {
  std::vector<Track> out(window.num_agents());
  const int th = window.history_len();
  for (int a = 0; a < window.num_agents(); ++a) {
    auto& v = out[a];
    v.resize(th, Vec2::Zero());
    for (int t = 1; t < th; ++t) v[t] = window.history[a][t] - window.history[a][t - 1];
    if (th >= 2) v[0] = v[1];
  }
  return out;
}

InteractionGraph select_neighbors(const TrajectoryWindow& window, const FovConfig& cfg) {
  cfg.validate();
  const int n = window.num_agents();
  const int th = window.history_len();
  const int w = std::min(cfg.window, th);
  const auto vel = history_velocities(window);

  InteractionGraph g;
  g.first_frame = th - w;
  g.neighbors.assign(n, {});
  g.selection_scores.assign(n, std::vector<double>(n, 0.0));
  g.visibility.assign(w, std::vector<std::vector<std::uint8_t>>(n, std::vector<std::uint8_t>(n, 0)));

  for (int f = 0; f < w; ++f) {
    const int t = g.first_frame + f;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const Vec2 dp = window.history[j][t] - window.history[i][t];
        const int m = visibility_mask(vel[i][t], dp, cfg);
        g.visibility[f][i][j] = static_cast<std::uint8_t>(m);
        if (m) g.selection_scores[i][j] += 1.0 / (dp.norm() + cfg.eps);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    std::vector<int> cand;
    for (int j = 0; j < n; ++j) {
      if (j != i && g.selection_scores[i][j] > 0.0) cand.push_back(j);
    }
    const auto& s = g.selection_scores[i];
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
      if (s[a] != s[b]) return s[a] > s[b];
      return a < b;
    });
    if (static_cast<int>(cand.size()) > cfg.top_k) cand.resize(cfg.top_k);
    g.neighbors[i] = cand;
    for (int j : cand) {
      for (int f = 0; f < w; ++f) {
        const int t = g.first_frame + f;
        g.edges.push_back({i, j, t,
                           edge_features(window.history[i][t], vel[i][t], window.history[j][t], vel[j][t], cfg.eps)});
      }
    }
  }
  return g;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, int history_len, std::uint64_t seed) {
  cfg.validate();
  if (history_len < 1) throw ConfigError("encoder: history length must be >= 1");
  EncoderParams p;
  p.config = cfg;
  p.history_len = history_len;
  Rng rng = stream(seed, "init", 1);
  const int d = cfg.dim;
  auto& ps = p.params;
  p.input = add_linear(ps, "input", p.input_features(), d, rng);
  {
    Matrix e(history_len, d);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = 0.1 * rng.normal();
    p.frame_embedding = ps.add("frame_embedding", std::move(e));
  }
  p.temporal_q = add_linear(ps, "temporal.q", d, d, rng, false);
  p.temporal_k = add_linear(ps, "temporal.k", d, d, rng, false);
  p.temporal_v = add_linear(ps, "temporal.v", d, d, rng, false);
  p.temporal_o = add_linear(ps, "temporal.o", d, d, rng);
  p.temporal_ln = add_layer_norm(ps, "temporal.ln", d);
  p.social_q = add_linear(ps, "social.q", d, d, rng, false);
  p.social_k = add_linear(ps, "social.k", d, d, rng, false);
  p.social_v = add_linear(ps, "social.v", d, d, rng, false);
  p.social_o = add_linear(ps, "social.o", d, d, rng);
  p.social_ln = add_layer_norm(ps, "social.ln", d);
  p.edge_mlp = add_mlp2(ps, "edge_mlp", 6, d, d, rng);
  p.spatial_gate_mlp = add_mlp2(ps, "spatial_gate_mlp", 3 * d, d, d, rng);
  p.value_proj = add_linear(ps, "value_proj", d, d, rng, false);
  p.edge_proj = add_linear(ps, "edge_proj", d, d, rng, false);
  p.temporal_gate = add_linear(ps, "temporal_gate", d, d, rng);
  p.fuse_mlp = add_mlp2(ps, "fuse_mlp", 2 * d + 1, d, d, rng);
  p.phys_ln = add_layer_norm(ps, "phys_ln", d);
  p.phys_proj = add_linear(ps, "phys_proj", d, d, rng, false);
  p.lambda = ps.add("lambda", Matrix::Constant(1, 1, cfg.lambda_init));
  return p;
}

namespace {

struct MessageVars {
  ad::Var messages;  // (agents * W) x D
  ad::Var gates;     // edges x D (invalid when there are no edges)
};

// edges carry global agent indices; node rows are agent * history_len + frame.
MessageVars tape_messages(ParamBinding& b, const EncoderParams& p, const ad::Var& nodes,
                          const std::vector<GraphEdge>& edges, int first_frame, int w, int n_agents) {
  ad::Tape& tape = b.tape();
  const int d = p.config.dim;
  const int th = p.history_len;
  MessageVars out;
  if (edges.empty()) {
    out.messages = tape.constant(Matrix::Zero(static_cast<Eigen::Index>(n_agents) * w, d));
    return out;
  }
  const double inv = 1.0 / p.config.input_scale;
  Matrix raw(static_cast<Eigen::Index>(edges.size()), 6);
  std::vector<int> rows_i, rows_j, target_rows;
  rows_i.reserve(edges.size());
  rows_j.reserve(edges.size());
  target_rows.reserve(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& ed = edges[e];
    for (int c = 0; c < 5; ++c) raw(static_cast<Eigen::Index>(e), c) = ed.raw[c] * inv;
    raw(static_cast<Eigen::Index>(e), 5) = ed.raw[5];
    rows_i.push_back(ed.target * th + ed.frame);
    rows_j.push_back(ed.neighbor * th + ed.frame);
    target_rows.push_back(ed.target * w + (ed.frame - first_frame));
  }
  const ad::Var e_feat = apply(b, p.edge_mlp, tape.constant(std::move(raw)));
  const ad::Var hi = ad::gather_rows(nodes, std::move(rows_i));
  const ad::Var hj = ad::gather_rows(nodes, std::move(rows_j));
  out.gates = ad::sigmoid(apply(b, p.spatial_gate_mlp, ad::concat_cols({hi, hj, e_feat})));
  const ad::Var values = apply(b, p.value_proj, hj) + apply(b, p.edge_proj, e_feat);
  out.messages = ad::segment_sum(ad::mul(out.gates, values), std::move(target_rows), n_agents * w);
  return out;
}

struct PoolVars {
  ad::Var phys;      // agents x D
  ad::Var strength;  // agents x 1
};

PoolVars tape_pool(ParamBinding& b, const EncoderParams& p, const ad::Var& messages, int w, int n_agents,
                   const ad::Var& gates, const std::vector<int>& edge_agent) {
  ad::Tape& tape = b.tape();
  std::vector<int> row_agent(static_cast<std::size_t>(n_agents) * w);
  for (std::size_t r = 0; r < row_agent.size(); ++r) row_agent[r] = static_cast<int>(r) / w;

  const ad::Var act = ad::sigmoid(apply(b, p.temporal_gate, messages));
  const ad::Var denom = ad::segment_sum(act, row_agent, n_agents);
  const ad::Var alpha = ad::div(act, ad::gather_rows(denom, row_agent));
  PoolVars out;
  out.phys = ad::segment_sum(ad::mul(alpha, messages), row_agent, n_agents);

  if (!gates.valid() || edge_agent.empty()) {
    out.strength = tape.constant(Matrix::Zero(n_agents, 1));
    return out;
  }
  std::vector<double> count(n_agents, 0.0);
  for (int a : edge_agent) count[a] += 1.0;
  Matrix inv_count(n_agents, 1);
  for (int a = 0; a < n_agents; ++a) inv_count(a, 0) = count[a] > 0 ? 1.0 / count[a] : 0.0;
  const ad::Var per_agent = ad::segment_sum(ad::row_mean(gates), edge_agent, n_agents);
  out.strength = ad::mul_col(per_agent, tape.constant(std::move(inv_count)));
  return out;
}

ad::Var tape_fuse(ParamBinding& b, const EncoderParams& p, const ad::Var& soc, const ad::Var& phys,
                  const ad::Var& strength) {
  const ad::Var gate = ad::sigmoid(apply(b, p.fuse_mlp, ad::concat_cols({soc, phys, strength})));
  const ad::Var proj = ad::tanh(apply(b, p.phys_proj, apply(b, p.phys_ln, phys)));
  const ad::Var residual = ad::mul_col(ad::mul(gate, proj), strength);
  return soc + ad::mul_scalar(residual, b(p.lambda));
}

}  // namespace

MessageResult gated_message_passing(const InteractionGraph& graph, const Matrix& node_states, int num_agents,
                                    const EncoderParams& params) {
  const int th = params.history_len;
  if (node_states.cols() != params.config.dim || node_states.rows() != static_cast<Eigen::Index>(num_agents) * th) {
    throw std::invalid_argument("gated_message_passing: node_states must be (agents * history_len) x dim");
  }
  const int w = th - graph.first_frame;
  ad::Tape tape;
  ParamBinding b(tape, params.params, false);
  const auto mv = tape_messages(b, params, tape.constant(node_states), graph.edges, graph.first_frame, w, num_agents);
  MessageResult r;
  r.messages = mv.messages.value();
  r.gates = mv.gates.valid() ? mv.gates.value() : Matrix(0, params.config.dim);
  return r;
}

PoolResult temporal_pool_and_strength(const Matrix& frame_messages, const Matrix& edge_gates,
                                      const EncoderParams& params) {
  const int d = params.config.dim;
  if (frame_messages.rows() < 1 || frame_messages.cols() != d) {
    throw std::invalid_argument("temporal_pool_and_strength: need >= 1 frame of width dim");
  }
  if (edge_gates.rows() > 0 && edge_gates.cols() != d) {
    throw std::invalid_argument("temporal_pool_and_strength: gate width mismatch");
  }
  ad::Tape tape;
  ParamBinding b(tape, params.params, false);
  const int w = static_cast<int>(frame_messages.rows());
  ad::Var gates;
  std::vector<int> edge_agent;
  if (edge_gates.rows() > 0) {
    gates = tape.constant(edge_gates);
    edge_agent.assign(static_cast<std::size_t>(edge_gates.rows()), 0);
  }
  const auto pv = tape_pool(b, params, tape.constant(frame_messages), w, 1, gates, edge_agent);
  PoolResult r;
  r.phys_feature = pv.phys.value().row(0).transpose();
  r.strength = pv.strength.value()(0, 0);
  return r;
}

ContextToken fuse_context(const Eigen::VectorXd& soc_context, const Eigen::VectorXd& phys_feature, double strength,
                          const EncoderParams& params) {
  const int d = params.config.dim;
  if (soc_context.size() != d || phys_feature.size() != d) throw std::invalid_argument("fuse_context: dimension mismatch");
  ad::Tape tape;
  ParamBinding b(tape, params.params, false);
  const ad::Var soc = tape.constant(soc_context.transpose());
  const ad::Var phys = tape.constant(phys_feature.transpose());
  const ad::Var s = tape.constant(Matrix::Constant(1, 1, strength));
  const ad::Var c = tape_fuse(b, params, soc, phys, s);
  return {c.value().row(0).transpose(), strength, soc_context, phys_feature};
}

EncodedBatch encode_batch(ParamBinding& b, const EncoderParams& p, std::span<const TrajectoryWindow* const> windows) {
  ad::Tape& tape = b.tape();
  const int th = p.history_len;
  const int w = std::min(p.config.fov.window, th);
  const int first = th - w;
  const double inv = 1.0 / p.config.input_scale;

  EncodedBatch out;
  int n_agents = 0;
  for (const auto* win : windows) {
    if (win->history_len() != th) {
      throw DataError("encoder: window '" + win->scene_id + "' history length differs from the encoder's");
    }
    out.agent_offset.push_back(n_agents);
    n_agents += win->num_agents();
  }
  if (n_agents == 0) throw DataError("encoder: no agents to encode");

  // per-frame inputs and graph edges with global agent indices
  Matrix x(static_cast<Eigen::Index>(n_agents) * th, p.input_features());
  std::vector<int> frame_of_row(static_cast<std::size_t>(n_agents) * th);
  std::vector<GraphEdge> edges;
  std::vector<int> edge_agent;
  std::vector<std::pair<int, int>> temporal_ranges, social_ranges;
  std::vector<int> last_rows;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const auto& win = *windows[wi];
    const int base = out.agent_offset[wi];
    const auto vel = history_velocities(win);
    for (int a = 0; a < win.num_agents(); ++a) {
      const int g = base + a;
      for (int t = 0; t < th; ++t) {
        const Eigen::Index r = static_cast<Eigen::Index>(g) * th + t;
        const Vec2 rel = (win.history[a][t] - win.origin[a]) * inv;
        const Vec2 v = vel[a][t] * inv;
        x(r, 0) = rel.x();
        x(r, 1) = rel.y();
        x(r, 2) = v.x();
        x(r, 3) = v.y();
        if (p.config.use_absolute_position) {
          x(r, 4) = win.history[a][t].x() * inv * p.config.position_scale;
          x(r, 5) = win.history[a][t].y() * inv * p.config.position_scale;
        }
        frame_of_row[static_cast<std::size_t>(r)] = t;
      }
      temporal_ranges.emplace_back(g * th, th);
      last_rows.push_back(g * th + th - 1);
    }
    social_ranges.emplace_back(base, win.num_agents());
    const InteractionGraph graph = select_neighbors(win, p.config.fov);
    for (auto e : graph.edges) {
      e.target += base;
      e.neighbor += base;
      edge_agent.push_back(e.target);
      edges.push_back(e);
    }
  }

  // implicit social context: temporal self-attention, then social self-attention
  const ad::Var emb = apply(b, p.input, tape.constant(std::move(x))) + ad::gather_rows(b(p.frame_embedding), frame_of_row);
  const ad::Var tq = apply(b, p.temporal_q, emb);
  const ad::Var tk = apply(b, p.temporal_k, emb);
  const ad::Var tv = apply(b, p.temporal_v, emb);
  const ad::Var nodes =
      apply(b, p.temporal_ln, emb + apply(b, p.temporal_o, ad::attention(tq, tk, tv, std::move(temporal_ranges))));
  const ad::Var last = ad::gather_rows(nodes, last_rows);
  const ad::Var sq = apply(b, p.social_q, last);
  const ad::Var sk = apply(b, p.social_k, last);
  const ad::Var sv = apply(b, p.social_v, last);
  out.soc = apply(b, p.social_ln, last + apply(b, p.social_o, ad::attention(sq, sk, sv, std::move(social_ranges))));

  // explicit interaction branch
  const auto mv = tape_messages(b, p, nodes, edges, first, w, n_agents);
  const auto pv = tape_pool(b, p, mv.messages, w, n_agents, mv.gates, edge_agent);
  out.phys = pv.phys;
  out.strength = pv.strength;
  out.tokens = tape_fuse(b, p, out.soc, out.phys, out.strength);
  return out;
}

std::vector<ContextToken> encode(const TrajectoryWindow& window, const EncoderParams& params) {
  ad::Tape tape;
  ParamBinding b(tape, params.params, false);
  const TrajectoryWindow* ptr = &window;
  const auto enc = encode_batch(b, params, std::span<const TrajectoryWindow* const>(&ptr, 1));
  std::vector<ContextToken> out(window.num_agents());
  for (int a = 0; a < window.num_agents(); ++a) {
    out[a].token = enc.tokens.value().row(a).transpose();
    out[a].strength = enc.strength.value()(a, 0);
    out[a].soc_context = enc.soc.value().row(a).transpose();
    out[a].phys_feature = enc.phys.value().row(a).transpose();
  }
  return out;
}

Matrix encode_tokens(const TrajectoryWindow& window, const EncoderParams& params) {
  ad::Tape tape;
  ParamBinding b(tape, params.params, false);
  const TrajectoryWindow* ptr = &window;
  return encode_batch(b, params, std::span<const TrajectoryWindow* const>(&ptr, 1)).tokens.value();
}

}  // namespace tigflow
