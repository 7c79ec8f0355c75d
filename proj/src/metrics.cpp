#include "tigflow/metrics.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "tigflow/error.hpp"
#include "tigflow/reward.hpp"

namespace tigflow {

void MetricsConfig::validate(int future_len) const {
  if (k < 1) throw ConfigError("metrics.k must be >= 1");
  if (!(collision_threshold > 0.0)) throw ConfigError("metrics.collision_threshold must be > 0");
  if (horizons.empty()) throw ConfigError("metrics.horizons must not be empty");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1 || horizons[i] > future_len) throw ConfigError("metrics.horizons must lie in [1, T_f]");
    if (i > 0 && horizons[i] <= horizons[i - 1]) throw ConfigError("metrics.horizons must be strictly ascending");
  }
  if (!(delta_map >= 0.0)) throw ConfigError("metrics.delta_map must be >= 0");
}

AdeFde ade_fde(const std::vector<Track>& samples, const Track& gt, int horizon) {
  if (samples.empty()) throw DataError("ade_fde: no samples");
  if (horizon < 1 || horizon > static_cast<int>(gt.size())) throw DataError("ade_fde: horizon out of range");
  AdeFde r;
  r.ade_min = r.fde_min = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    if (s.size() != gt.size()) throw DataError("ade_fde: sample horizon mismatch");
    double ade = 0.0;
    for (int t = 0; t < horizon; ++t) ade += (s[t] - gt[t]).norm();
    ade /= horizon;
    const double fde = (s[horizon - 1] - gt[horizon - 1]).norm();
    r.ade_min = std::min(r.ade_min, ade);
    r.fde_min = std::min(r.fde_min, fde);
    r.ade_avg += ade;
    r.fde_avg += fde;
  }
  r.ade_avg /= static_cast<double>(samples.size());
  r.fde_avg /= static_cast<double>(samples.size());
  return r;
}

CollisionCount collision_count(const std::vector<std::vector<Track>>& samples, double threshold, int horizon) {
  CollisionCount c;
  for (const auto& world : samples) {
    const std::size_t n = world.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (horizon > static_cast<int>(world[i].size())) throw DataError("collision_count: horizon out of range");
      bool hit = false;
      for (std::size_t j = 0; j < n && !hit; ++j) {
        if (j == i) continue;
        for (int t = 0; t < horizon; ++t) {
          if ((world[i][t] - world[j][t]).norm() < threshold) {
            hit = true;
            break;
          }
        }
      }
      ++c.total;
      if (hit) ++c.colliding;
    }
  }
  return c;
}

double collision_rate(const std::vector<std::vector<Track>>& samples, double threshold, int horizon) {
  return collision_count(samples, threshold, horizon).rate();
}

ViolationCount map_violations(const std::vector<std::vector<Track>>& samples, const std::vector<Track>& histories,
                              const SceneMap& map, double delta_map, const std::vector<int>& obs_indices,
                              int horizon) {
  MapRewardConfig mcfg;
  mcfg.delta_map = delta_map;
  mcfg.obs_indices = obs_indices;
  std::vector<double> baseline(histories.size());
  for (std::size_t a = 0; a < histories.size(); ++a) baseline[a] = history_map_risk(histories[a], map, mcfg);
  ViolationCount v;
  for (const auto& world : samples) {
    if (world.size() != histories.size()) throw DataError("map_violations: agent count mismatch");
    for (std::size_t a = 0; a < world.size(); ++a) {
      for (int t = 0; t < horizon; ++t) {
        const double h = std::max(delta_map - clearance_at(map, world[a][t]), 0.0);
        ++v.total;
        if (h * h > baseline[a]) ++v.violating;
      }
    }
  }
  return v;
}

const HorizonMetrics& MetricsReport::at_horizon(int steps) const {
  for (const auto& h : horizons) {
    if (h.horizon == steps) return h;
  }
  throw std::out_of_range("MetricsReport: horizon not evaluated");
}

MetricsReport evaluate_predictions(const std::vector<TrajectoryWindow>& windows,
                                   const std::vector<std::vector<std::vector<Track>>>& predictions,
                                   const SceneMap* map, const MetricsConfig& cfg) {
  if (windows.size() != predictions.size()) throw DataError("evaluate: prediction count mismatch");
  if (windows.empty()) throw DataError("evaluate: empty dataset");
  cfg.validate(windows.front().future_len());
  MetricsReport rep;
  rep.config = cfg;
  rep.map_present = map != nullptr;
  rep.units = to_string(windows.front().units);
  rep.windows = static_cast<std::int64_t>(windows.size());
  for (int hz : cfg.horizons) {
    HorizonMetrics hm;
    hm.horizon = hz;
    hm.seconds = hz * windows.front().dt;
    std::int64_t agents = 0;
    CollisionCount col;
    ViolationCount viol;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const auto& win = windows[w];
      const auto& pred = predictions[w];
      if (pred.empty()) throw DataError("evaluate: window without samples");
      for (int a = 0; a < win.num_agents(); ++a) {
        std::vector<Track> per_agent;
        per_agent.reserve(pred.size());
        for (const auto& world : pred) per_agent.push_back(world.at(a));
        const AdeFde m = ade_fde(per_agent, win.future_gt[a], hz);
        hm.ade_min += m.ade_min;
        hm.fde_min += m.fde_min;
        hm.ade_avg += m.ade_avg;
        hm.fde_avg += m.fde_avg;
        ++agents;
      }
      if (win.num_agents() >= 2 || cfg.count_single_agent) {
        const CollisionCount c = collision_count(pred, cfg.collision_threshold, hz);
        col.colliding += c.colliding;
        col.total += c.total;
      }
      if (map) {
        const ViolationCount v = map_violations(pred, win.history, *map, cfg.delta_map, cfg.obs_indices, hz);
        viol.violating += v.violating;
        viol.total += v.total;
      }
    }
    const double n = static_cast<double>(agents);
    hm.ade_min /= n;
    hm.fde_min /= n;
    hm.ade_avg /= n;
    hm.fde_avg /= n;
    hm.col_rate = col.rate();
    hm.map_violation_rate = viol.rate();
    rep.agents = agents;
    rep.collision_instances = col.total;
    rep.horizons.push_back(hm);
  }
  return rep;
}

std::vector<std::vector<Track>> constant_velocity_prediction(const TrajectoryWindow& window) {
  std::vector<Track> world(window.num_agents());
  const int th = window.history_len();
  for (int a = 0; a < window.num_agents(); ++a) {
    const Vec2 v = th >= 2 ? Vec2(window.history[a][th - 1] - window.history[a][th - 2]) : Vec2::Zero();
    Track& tr = world[a];
    tr.resize(window.future_len());
    for (int t = 0; t < window.future_len(); ++t) tr[t] = window.origin[a] + (t + 1) * v;
  }
  return {world};
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["config"] = {{"k", r.config.k},
                 {"collision_threshold", r.config.collision_threshold},
                 {"horizons", r.config.horizons},
                 {"count_single_agent", r.config.count_single_agent},
                 {"delta_map", r.config.delta_map},
                 {"obs_indices", r.config.obs_indices},
                 {"collision_denominator", "agent-sample"}};
  j["units"] = r.units;
  j["seed"] = r.seed;
  j["counts"] = {{"windows", r.windows}, {"agents", r.agents}, {"collision_instances", r.collision_instances}};
  j["map_present"] = r.map_present;
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : r.horizons) {
    hs.push_back({{"horizon_steps", h.horizon},
                  {"seconds", h.seconds},
                  {"ade_min", h.ade_min},
                  {"fde_min", h.fde_min},
                  {"ade_avg", h.ade_avg},
                  {"fde_avg", h.fde_avg},
                  {"col_rate", h.col_rate},
                  {"map_violation_rate", h.map_violation_rate}});
  }
  j["horizons"] = hs;
  // Published full-scale numbers, kept for side-by-side reading only.
  j["reference"] = {{"eth_ucy_avg", {{"ade_min", 0.20}, {"fde_min", 0.31}, {"units", "meters"}}},
                    {"sdd", {{"ade_min", 7.37}, {"fde_min", 11.67}, {"units", "pixels"}}}};
  return j;
}

void write_report_csv(std::ostream& out, const MetricsReport& r) {
  out << "horizon_steps,seconds,ade_min,fde_min,ade_avg,fde_avg,col_rate,map_violation_rate\n";
  out.precision(10);
  for (const auto& h : r.horizons) {
    out << h.horizon << ',' << h.seconds << ',' << h.ade_min << ',' << h.fde_min << ',' << h.ade_avg << ','
        << h.fde_avg << ',' << h.col_rate << ',' << h.map_violation_rate << '\n';
  }
}

}  // namespace tigflow
