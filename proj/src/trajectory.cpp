#include "tigflow/trajectory.hpp"

#include <cmath>
#include <sstream>

#include "tigflow/error.hpp"

namespace tigflow {

const char* to_string(Units u) noexcept { return u == Units::meters ? "meters" : "pixels"; }

Units units_from_string(const std::string& s) {
  if (s == "meters") return Units::meters;
  if (s == "pixels") return Units::pixels;
  throw ConfigError("unknown units '" + s + "' (expected meters|pixels)");
}

namespace {

bool finite(const Vec2& p) { return std::isfinite(p.x()) && std::isfinite(p.y()); }

}  // namespace

void TrajectoryWindow::validate() const {
  const auto n = agent_ids.size();
  if (history.size() != n || future_gt.size() != n || origin.size() != n) {
    throw DataError("window '" + scene_id + "': per-agent arrays disagree on agent count");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DataError("window '" + scene_id + "': dt must be > 0");
  if (n == 0) return;
  const auto th = history.front().size();
  const auto tf = future_gt.front().size();
  if (th == 0 || tf == 0) throw DataError("window '" + scene_id + "': empty history or future");
  for (std::size_t a = 0; a < n; ++a) {
    if (history[a].size() != th || future_gt[a].size() != tf) {
      throw DataError("window '" + scene_id + "': ragged agent tracks");
    }
    for (const auto& p : history[a]) {
      if (!finite(p)) throw DataError("window '" + scene_id + "': non-finite history position");
    }
    for (const auto& p : future_gt[a]) {
      if (!finite(p)) throw DataError("window '" + scene_id + "': non-finite future position");
    }
    if (history[a].back() != origin[a]) {
      throw DataError("window '" + scene_id + "': origin differs from last history frame");
    }
  }
}

TrajectoryWindow make_window(std::string scene_id, std::vector<std::int64_t> agent_ids,
                             std::vector<Track> history, std::vector<Track> future_gt, double dt,
                             Units units) {
  TrajectoryWindow w;
  w.scene_id = std::move(scene_id);
  w.agent_ids = std::move(agent_ids);
  w.history = std::move(history);
  w.future_gt = std::move(future_gt);
  w.dt = dt;
  w.units = units;
  w.origin.reserve(w.history.size());
  for (const auto& h : w.history) {
    if (h.empty()) throw DataError("window '" + w.scene_id + "': empty history");
    w.origin.push_back(h.back());
  }
  w.validate();
  return w;
}

PredictionSet to_absolute(const PredictionSet& pred, const TrajectoryWindow& window) {
  if (pred.frame == Frame::absolute) {
    throw DataError("to_absolute: prediction set is already in the absolute frame");
  }
  PredictionSet out;
  out.frame = Frame::absolute;
  out.samples.reserve(pred.samples.size());
  const auto n = static_cast<std::size_t>(window.num_agents());
  const auto tf = static_cast<std::size_t>(window.future_len());
  for (std::size_t k = 0; k < pred.samples.size(); ++k) {
    const auto& sample = pred.samples[k];
    if (sample.size() != n) {
      std::ostringstream msg;
      msg << "to_absolute: sample " << k << " has " << sample.size() << " agents, window has " << n;
      throw DataError(msg.str());
    }
    std::vector<Track> shifted(n);
    for (std::size_t a = 0; a < n; ++a) {
      if (sample[a].size() != tf) throw DataError("to_absolute: horizon mismatch with window");
      shifted[a].reserve(tf);
      for (const auto& p : sample[a]) shifted[a].push_back(p + window.origin[a]);
    }
    out.samples.push_back(std::move(shifted));
  }
  return out;
}

Track finite_differences(std::span<const Vec2> traj) {
  if (traj.size() < 2) throw DataError("finite_differences: need at least 2 positions");
  Track out;
  out.reserve(traj.size() - 1);
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) out.push_back(traj[t + 1] - traj[t]);
  return out;
}

}  // namespace tigflow
