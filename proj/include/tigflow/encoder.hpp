#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tigflow/autodiff.hpp"
#include "tigflow/params.hpp"
#include "tigflow/rng.hpp"
#include "tigflow/trajectory.hpp"

namespace tigflow {

struct FovConfig {
  double theta_fov_deg = 120.0;  // full threshold on the heading/neighbour angle
  int window = 8;                // history frames accumulated for selection
  int top_k = 4;
  double eps = 1e-6;

  void validate() const;
};

// 1 iff ||velocity|| > eps and angle(velocity, rel_pos) <= theta_fov.
// A coincident neighbour (rel_pos == 0) counts as visible.
[[nodiscard]] int visibility_mask(const Vec2& velocity, const Vec2& rel_pos, const FovConfig& cfg);

// Raw relative kinematics [dp(2), dv(2), |dp|, cos(v_i, dp)] with dp = p_j - p_i
// and dv = v_j - v_i. The cosine is 0 when either vector is shorter than eps.
using EdgeRaw = std::array<double, 6>;
[[nodiscard]] EdgeRaw edge_features(const Vec2& pos_i, const Vec2& vel_i, const Vec2& pos_j, const Vec2& vel_j,
                                    double eps = 1e-6);

// Per-frame velocities of every agent's history; frame 0 reuses frame 1.
[[nodiscard]] std::vector<Track> history_velocities(const TrajectoryWindow& window);

struct GraphEdge {
  int target = 0;    // agent i
  int neighbor = 0;  // agent j
  int frame = 0;     // history index
  EdgeRaw raw{};
};

struct InteractionGraph {
  std::vector<std::vector<int>> neighbors;            // ordered by score, then index
  std::vector<std::vector<double>> selection_scores;  // [i][j]
  // visibility[f][i][j] for the accumulation frames (f = frame - first_frame)
  std::vector<std::vector<std::vector<std::uint8_t>>> visibility;
  int first_frame = 0;
  std::vector<GraphEdge> edges;  // every (i, j in N_i, frame in window), target-major
};

// score(i, j) = sum over the last W frames of m_ij / (|dp_ij| + eps); top-K by
// score with ties broken by ascending index; zero-score agents are never kept.
[[nodiscard]] InteractionGraph select_neighbors(const TrajectoryWindow& window, const FovConfig& cfg);

struct EncoderConfig {
  int dim = 64;
  FovConfig fov;
  bool use_absolute_position = true;  // append world position to per-frame input
  double position_scale = 0.1;        // multiplier on world positions
  double input_scale = 1.0;           // divides positions/velocities (pixels -> ~meters)
  double lambda_init = 1.0;

  void validate() const;
};

// All encoder weights. Block handles index into `params`; init() with the same
// config always produces the same layout, so checkpoints reload into it.
struct EncoderParams {
  EncoderConfig config;
  int history_len = 8;
  ParamSet params;

  Linear input;
  std::size_t frame_embedding = 0;  // history_len x D
  Linear temporal_q, temporal_k, temporal_v, temporal_o;
  LayerNormParams temporal_ln;
  Linear social_q, social_k, social_v, social_o;
  LayerNormParams social_ln;
  Mlp2 edge_mlp;          // 6 -> D
  Mlp2 spatial_gate_mlp;  // 3D -> D
  Linear value_proj;      // W_V
  Linear edge_proj;       // W_E
  Linear temporal_gate;
  Mlp2 fuse_mlp;          // 2D + 1 -> D
  LayerNormParams phys_ln;
  Linear phys_proj;       // W_phy
  std::size_t lambda = 0; // 1 x 1

  [[nodiscard]] int input_features() const noexcept { return config.use_absolute_position ? 6 : 4; }
  static EncoderParams init(const EncoderConfig& cfg, int history_len, std::uint64_t seed);
};

struct ContextToken {
  Eigen::VectorXd token;         // c_i
  double strength = 0.0;         // s_i
  Eigen::VectorXd soc_context;   // z_i^soc
  Eigen::VectorXd phys_feature;  // h_i^phy
};

// ---- step-wise pieces (each runs its own tape) ------------------------------

struct MessageResult {
  Matrix messages;  // (agents * W) x D, row = agent * W + (frame - first_frame)
  Matrix gates;     // edges x D, in graph.edges order
};

// node_states rows are agent * history_len + frame.
[[nodiscard]] MessageResult gated_message_passing(const InteractionGraph& graph, const Matrix& node_states,
                                                  int num_agents, const EncoderParams& params);

struct PoolResult {
  Eigen::VectorXd phys_feature;
  double strength = 0.0;
};

// frame_messages: W x D for one agent; edge_gates: that agent's gate rows.
[[nodiscard]] PoolResult temporal_pool_and_strength(const Matrix& frame_messages, const Matrix& edge_gates,
                                                    const EncoderParams& params);

[[nodiscard]] ContextToken fuse_context(const Eigen::VectorXd& soc_context, const Eigen::VectorXd& phys_feature,
                                        double strength, const EncoderParams& params);

// ---- full encoder -----------------------------------------------------------

struct EncodedBatch {
  ad::Var tokens;    // agents x D, windows concatenated in order
  ad::Var soc;       // z_soc
  ad::Var phys;      // h_phy
  ad::Var strength;  // agents x 1
  std::vector<int> agent_offset;  // first token row of each window
};

// Tape-level encoder over several windows (all with the same history length).
[[nodiscard]] EncodedBatch encode_batch(ParamBinding& binding, const EncoderParams& params,
                                        std::span<const TrajectoryWindow* const> windows);

[[nodiscard]] std::vector<ContextToken> encode(const TrajectoryWindow& window, const EncoderParams& params);

// Token matrix (agents x D) without gradient bookkeeping.
[[nodiscard]] Matrix encode_tokens(const TrajectoryWindow& window, const EncoderParams& params);

}  // namespace tigflow
