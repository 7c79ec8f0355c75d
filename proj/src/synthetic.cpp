#include "tigflow/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "tigflow/error.hpp"
#include "tigflow/rng.hpp"

namespace tigflow {

const char* to_string(Scenario s) noexcept {
  switch (s) {
    case Scenario::crossing_flows: return "crossing_flows";
    case Scenario::corridor: return "corridor";
    case Scenario::obstacle_field: return "obstacle_field";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "crossing_flows") return Scenario::crossing_flows;
  if (s == "corridor") return Scenario::corridor;
  if (s == "obstacle_field") return Scenario::obstacle_field;
  throw ConfigError("unknown scenario '" + s + "' (expected crossing_flows|corridor|obstacle_field)");
}

void SynthConfig::validate() const {
  if (n_agents < 1) throw ConfigError("synth.n_agents must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("synth.noise_std must be >= 0");
  if (n_windows < 0) throw ConfigError("synth.n_windows must be >= 0");
  if (history_len < 2 || future_len < 2) throw ConfigError("synth history/future lengths must be >= 2");
  if (!(dt > 0.0)) throw ConfigError("synth.dt must be > 0");
  if (first_window < 0) throw ConfigError("synth.first_window must be >= 0");
}

ObstacleRect obstacle_field_rect() noexcept { return {}; }

namespace {

constexpr double kWorldXMin = -12.0;
constexpr double kWorldYMin = -6.0;
constexpr double kCellSize = 0.25;
constexpr int kMapCols = 96;
constexpr int kMapRows = 48;

constexpr double kSubstep = 0.1;
constexpr double kRelax = 0.5;        // s, velocity relaxation time
constexpr double kRadius = 0.3;       // m, body radius
constexpr double kSocialA = 2.5;      // m/s^2
constexpr double kSocialB = 0.35;     // m
constexpr double kSidestepA = 1.2;    // m/s^2
constexpr double kSocialRange = 4.0;  // m
constexpr double kObstacleA = 6.0;
constexpr double kObstacleB = 0.25;
constexpr double kCorridorHalfWidth = 3.0;

struct SimAgent {
  Vec2 pos;
  Vec2 vel;
  double speed = 1.3;
  Vec2 lane_dir = Vec2::Zero();  // corridor: fixed heading
  std::vector<Vec2> waypoints;   // others: visited in order
  std::size_t next = 0;
  double direction = 1.0;        // +1 moves toward +x
};

Vec2 desired_direction(SimAgent& a) {
  if (a.waypoints.empty()) return a.lane_dir;
  while (a.next + 1 < a.waypoints.size() && a.direction * (a.pos.x() - a.waypoints[a.next].x()) >= 0.0) {
    ++a.next;
  }
  const Vec2 to = a.waypoints[a.next] - a.pos;
  const double n = to.norm();
  return n > 1e-9 ? Vec2(to / n) : Vec2(a.direction, 0.0);
}

Vec2 closest_on_rect(const ObstacleRect& r, const Vec2& p) {
  return {std::clamp(p.x(), r.x_min, r.x_max), std::clamp(p.y(), r.y_min, r.y_max)};
}

void step_agents(std::vector<SimAgent>& agents, Scenario scenario, const ObstacleRect& rect) {
  const std::size_t n = agents.size();
  std::vector<Vec2> accel(n, Vec2::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    SimAgent& a = agents[i];
    const Vec2 e = desired_direction(a);
    Vec2 f = (a.speed * e - a.vel) / kRelax;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec2 diff = a.pos - agents[j].pos;
      const double d = diff.norm();
      if (d > kSocialRange || d < 1e-9) continue;
      const Vec2 nij = diff / d;
      const double cos_phi = -nij.dot(e);  // 1 when j is straight ahead
      const double weight = 0.35 + 0.65 * 0.5 * (1.0 + cos_phi);
      const double mag = std::exp((2.0 * kRadius - d) / kSocialB);
      f += kSocialA * mag * weight * nij;
      if (cos_phi > 0.0) {
        // sidestep away from the neighbour, perpendicular to the heading
        Vec2 side(-e.y(), e.x());
        if (side.dot(nij) < 0.0) side = -side;
        f += kSidestepA * mag * cos_phi * side;
      }
    }
    if (scenario == Scenario::obstacle_field) {
      const Vec2 c = closest_on_rect(rect, a.pos);
      const Vec2 diff = a.pos - c;
      const double d = diff.norm();
      if (d > 1e-9 && d < 2.0) f += kObstacleA * std::exp((kRadius - d) / kObstacleB) * (diff / d);
    }
    if (scenario == Scenario::corridor) {
      const double gap = kCorridorHalfWidth - std::abs(a.pos.y());
      if (gap < 0.5) f += Vec2(0.0, a.pos.y() > 0 ? -1.0 : 1.0) * kObstacleA * std::exp((kRadius - gap) / kObstacleB);
    }
    accel[i] = f;
  }
  for (std::size_t i = 0; i < n; ++i) {
    SimAgent& a = agents[i];
    a.vel += accel[i] * kSubstep;
    const double cap = 1.5 * a.speed;
    const double s = a.vel.norm();
    if (s > cap) a.vel *= cap / s;
    a.pos += a.vel * kSubstep;
  }
}

// Rejection-samples spawn positions with a minimum spacing.
bool place(std::vector<SimAgent>& placed, const Vec2& p, double min_gap) {
  for (const auto& o : placed) {
    if ((o.pos - p).norm() < min_gap) return false;
  }
  return true;
}

std::vector<SimAgent> spawn(const SynthConfig& cfg, Rng& rng, const ObstacleRect& rect) {
  std::vector<SimAgent> agents;
  agents.reserve(cfg.n_agents);
  for (int i = 0; i < cfg.n_agents; ++i) {
    SimAgent a;
    a.speed = rng.uniform(1.0, 1.6);
    for (int attempt = 0; attempt < 200; ++attempt) {
      Vec2 p;
      if (cfg.scenario == Scenario::corridor) {
        const int lane = static_cast<int>(rng.index(4));
        a.direction = lane % 2 == 0 ? 1.0 : -1.0;
        p = Vec2(rng.uniform(-8.0, 8.0), -1.5 + lane);
      } else {
        a.direction = i % 2 == 0 ? 1.0 : -1.0;
        const double band = cfg.scenario == Scenario::crossing_flows ? 1.5 : 2.5;
        p = Vec2(a.direction * -rng.uniform(4.0, 10.0), rng.uniform(-band, band));
      }
      if (place(agents, p, 1.0) || attempt == 199) {
        a.pos = p;
        break;
      }
    }
    if (cfg.scenario == Scenario::corridor) {
      a.lane_dir = Vec2(a.direction, 0.0);
    } else {
      const double goal_x = a.direction * 20.0;
      const double y0 = a.pos.y();
      if (cfg.scenario == Scenario::obstacle_field && y0 <= rect.y_max + 0.8 && y0 >= rect.y_min - 0.8) {
        const double side = y0 >= 0.0 ? rect.y_max + 0.9 : rect.y_min - 0.9;
        const double near_x = a.direction > 0 ? rect.x_min - 0.5 : rect.x_max + 0.5;
        const double far_x = a.direction > 0 ? rect.x_max + 0.5 : rect.x_min - 0.5;
        a.waypoints = {Vec2(near_x, side), Vec2(far_x, side), Vec2(goal_x, side)};
      } else {
        a.waypoints = {Vec2(goal_x, y0)};
      }
    }
    agents.push_back(std::move(a));
  }
  for (auto& a : agents) a.vel = a.speed * desired_direction(a);
  return agents;
}

}  // namespace

SceneMap obstacle_field_map() {
  const ObstacleRect r = obstacle_field_rect();
  OccupancyGrid occ = OccupancyGrid::Zero(kMapRows, kMapCols);
  for (int row = 0; row < kMapRows; ++row) {
    for (int col = 0; col < kMapCols; ++col) {
      const double x = kWorldXMin + (col + 0.5) * kCellSize;
      const double y = kWorldYMin + (row + 0.5) * kCellSize;
      if (x >= r.x_min && x <= r.x_max && y >= r.y_min && y <= r.y_max) occ(row, col) = 1;
    }
  }
  Eigen::Matrix3d h;
  h << kCellSize, 0.0, kWorldXMin + 0.5 * kCellSize, 0.0, kCellSize, kWorldYMin + 0.5 * kCellSize, 0.0, 0.0, 1.0;
  return SceneMap(std::move(occ), h, Eigen::Matrix2d::Identity(), kCellSize);
}

SynthDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset out;
  const ObstacleRect rect = obstacle_field_rect();
  if (cfg.scenario == Scenario::obstacle_field) out.map = obstacle_field_map();

  const int len = cfg.history_len + cfg.future_len;
  const int substeps = std::max(1, static_cast<int>(std::lround(cfg.dt / kSubstep)));
  out.windows.reserve(cfg.n_windows);
  for (int w = cfg.first_window; w < cfg.first_window + cfg.n_windows; ++w) {
    Rng rng = stream(cfg.seed, "synth", static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(cfg.scenario));
    std::vector<SimAgent> agents = spawn(cfg, rng, rect);
    std::vector<Track> tracks(cfg.n_agents);
    for (int k = 0; k < len; ++k) {
      if (k > 0) {
        for (int s = 0; s < substeps; ++s) step_agents(agents, cfg.scenario, rect);
      }
      for (int a = 0; a < cfg.n_agents; ++a) {
        Vec2 p = agents[a].pos;
        if (cfg.noise_std > 0.0) p += cfg.noise_std * Vec2(rng.normal(), rng.normal());
        tracks[a].push_back(p);
      }
    }
    std::vector<std::int64_t> ids(cfg.n_agents);
    std::vector<Track> hist(cfg.n_agents), fut(cfg.n_agents);
    for (int a = 0; a < cfg.n_agents; ++a) {
      ids[a] = static_cast<std::int64_t>(w) * cfg.n_agents + a;
      hist[a].assign(tracks[a].begin(), tracks[a].begin() + cfg.history_len);
      fut[a].assign(tracks[a].begin() + cfg.history_len, tracks[a].end());
    }
    out.windows.push_back(make_window(std::string(to_string(cfg.scenario)) + "@" + std::to_string(static_cast<long long>(w) * len),
                                      std::move(ids), std::move(hist), std::move(fut), cfg.dt, Units::meters));
  }
  return out;
}

}  // namespace tigflow
