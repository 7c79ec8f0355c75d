#include "tigflow/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tigflow/error.hpp"

namespace tigflow {

namespace {
double hinge_sq(double x) {
  const double h = std::max(x, 0.0);
  return h * h;
}
}  // namespace

void SocialRewardConfig::validate() const {
  if (!(phi_s > 0.0 && phi_s < phi_w && phi_w <= 180.0)) throw ConfigError("social: need 0 < phi_s < phi_w <= 180");
  if (!(radius >= 0.0 && delta_s >= 0.0 && delta_w >= 0.0 && m_w >= 0.0 && m_r >= 0.0)) {
    throw ConfigError("social: thresholds must be >= 0");
  }
  if (!(w_s >= 0.0 && w_wc >= 0.0 && w_wo >= 0.0 && w_r >= 0.0)) throw ConfigError("social: weights must be >= 0");
  if (!(eps > 0.0)) throw ConfigError("social.eps must be > 0");
}

void MapRewardConfig::validate() const {
  if (!(delta_map >= 0.0)) throw ConfigError("map.delta_map must be >= 0");
  for (int k : obs_indices) {
    if (k < 0) throw ConfigError("map.obs_indices must be >= 0");
  }
}

void RewardWeights::validate() const {
  if (!(w_sv >= 0.0 && w_map >= 0.0 && w_acc >= 0.0 && w_sm >= 0.0)) throw ConfigError("reward weights must be >= 0");
}

void RewardConfig::validate() const {
  social.validate();
  map.validate();
  weights.validate();
}

Track headings(const Track& pred_abs, const Vec2& origin) {
  Track h(pred_abs.size());
  for (std::size_t t = 0; t < pred_abs.size(); ++t) h[t] = pred_abs[t] - (t == 0 ? origin : pred_abs[t - 1]);
  return h;
}

ViewRegion view_decompose(const Vec2& h, const Vec2& r, const SocialRewardConfig& cfg) {
  const double hn = h.norm();
  const double rn = r.norm();
  if (rn > cfg.radius || !(hn > cfg.eps)) return ViewRegion::invalid;
  const double c = std::clamp(h.dot(r) / (hn * rn + cfg.eps), -1.0, 1.0);
  const double theta = std::acos(c) * 180.0 / std::numbers::pi;
  if (theta <= cfg.phi_s) return ViewRegion::strong;
  if (theta <= cfg.phi_w) return ViewRegion::weak;
  return ViewRegion::rear;
}

std::vector<double> social_reward(const std::vector<Track>& preds_abs, const std::vector<Vec2>& origins,
                                  const SocialRewardConfig& cfg) {
  const std::size_t n = preds_abs.size();
  if (origins.size() != n) throw DataError("social_reward: agent count mismatch");
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  const std::size_t tf = preds_abs.front().size();
  for (const auto& p : preds_abs) {
    if (p.size() != tf) throw DataError("social_reward: horizon mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Track h = headings(preds_abs[i], origins[i]);
    double acc = 0.0;
    int valid = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double prev = (origins[j] - origins[i]).norm();
      for (std::size_t t = 0; t < tf; ++t) {
        const Vec2 r = preds_abs[j][t] - preds_abs[i][t];
        const double d = r.norm();
        const double dd = d - prev;
        prev = d;
        const ViewRegion region = view_decompose(h[t], r, cfg);
        if (region == ViewRegion::invalid) continue;
        ++valid;
        if (region == ViewRegion::strong) {
          acc += cfg.w_s * hinge_sq(cfg.delta_s - d);
        } else if (region == ViewRegion::weak) {
          acc += cfg.w_wc * hinge_sq(cfg.delta_w - d) + cfg.w_wo * hinge_sq(dd - cfg.m_w);
        } else {
          acc += cfg.w_r * hinge_sq(dd - cfg.m_r);
        }
      }
    }
    if (valid == 0) continue;
    const double n_bar = static_cast<double>(valid) / static_cast<double>(tf);
    const double gamma = 1.0 / (1.0 + std::log1p(n_bar));
    const double denom = cfg.average_valid_only ? valid : static_cast<double>((n - 1) * tf);
    out[i] = -gamma * acc / denom;
  }
  return out;
}

double map_risk(const Track& points_abs, const SceneMap& map, double delta_map) {
  if (points_abs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : points_abs) s += hinge_sq(delta_map - clearance_at(map, p));
  return s / static_cast<double>(points_abs.size());
}

double history_map_risk(const Track& history, const SceneMap& map, const MapRewardConfig& cfg) {
  if (cfg.obs_indices.empty()) return map_risk(history, map, cfg.delta_map);
  Track pts;
  for (int k : cfg.obs_indices) {
    if (k >= static_cast<int>(history.size())) throw ConfigError("map.obs_indices exceeds the history length");
    pts.push_back(history[k]);
  }
  return map_risk(pts, map, cfg.delta_map);
}

double map_reward(const Track& pred_abs, const Track& history, const SceneMap& map, const MapRewardConfig& cfg) {
  const double q = history_map_risk(history, map, cfg);
  return -std::max(map_risk(pred_abs, map, cfg.delta_map) - q, 0.0);
}

double acc_reward(const Track& pred, const Track& gt) {
  if (pred.size() != gt.size() || pred.empty()) throw DataError("acc_reward: horizon mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) s += (pred[t] - gt[t]).norm();
  return -s / static_cast<double>(pred.size());
}

double smooth_reward(const Track& pred_abs, const Vec2& origin) {
  const std::size_t tf = pred_abs.size();
  if (tf < 2) throw DataError("smooth_reward: need at least two future steps");
  double s = 0.0;
  for (std::size_t t = 1; t < tf; ++t) {
    const Vec2& before = t == 1 ? origin : pred_abs[t - 2];
    s += (pred_abs[t] - 2.0 * pred_abs[t - 1] + before).squaredNorm();
  }
  return -s / static_cast<double>(tf - 1);
}

RewardBreakdown composite_reward(double r_sv, double r_map, double r_acc, double r_sm, const RewardWeights& w) {
  RewardBreakdown b;
  b.r_sv = r_sv;
  b.r_map = r_map;
  b.r_acc = r_acc;
  b.r_sm = r_sm;
  b.total = w.w_sv * r_sv + w.w_map * r_map + w.w_acc * r_acc + w.w_sm * r_sm;
  return b;
}

std::vector<RewardBreakdown> score_window(const TrajectoryWindow& window, const std::vector<Track>& preds_abs,
                                          const SceneMap* map, const RewardConfig& cfg) {
  const int n = window.num_agents();
  if (static_cast<int>(preds_abs.size()) != n) throw DataError("score_window: agent count mismatch");
  const std::vector<double> sv = social_reward(preds_abs, window.origin, cfg.social);
  std::vector<RewardBreakdown> out(n);
  for (int a = 0; a < n; ++a) {
    Track rel(preds_abs[a].size());
    Track gt_rel(window.future_gt[a].size());
    for (std::size_t t = 0; t < rel.size(); ++t) rel[t] = preds_abs[a][t] - window.origin[a];
    for (std::size_t t = 0; t < gt_rel.size(); ++t) gt_rel[t] = window.future_gt[a][t] - window.origin[a];
    const double r_map = map ? map_reward(preds_abs[a], window.history[a], *map, cfg.map) : 0.0;
    out[a] = composite_reward(sv[a], r_map, acc_reward(rel, gt_rel), smooth_reward(preds_abs[a], window.origin[a]),
                              cfg.weights);
    out[a].map_present = map != nullptr;
  }
  return out;
}

}  // namespace tigflow
