#pragma once

// Slow reference implementations and the finite-difference checker shared by
// the unit tests and the acceptance runner. They deliberately avoid the
// library's helpers so a shared bug cannot hide.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "tigflow/autodiff.hpp"
#include "tigflow/params.hpp"
#include "tigflow/reward.hpp"
#include "tigflow/scene_map.hpp"
#include "tigflow/trajectory.hpp"

namespace oracle {

using tigflow::Grid;
using tigflow::OccupancyGrid;
using tigflow::Track;
using tigflow::Vec2;
using tigflow::ad::Matrix;

inline Grid brute_sdf(const OccupancyGrid& occ) {
  const auto h = occ.rows(), w = occ.cols();
  const double cap = 2.0 * static_cast<double>(std::max(h, w));
  Grid out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const bool inside = occ(r, c) != 0;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index r2 = 0; r2 < h; ++r2) {
        for (Eigen::Index c2 = 0; c2 < w; ++c2) {
          if ((occ(r2, c2) != 0) == inside) continue;
          const double dr = static_cast<double>(r - r2), dc = static_cast<double>(c - c2);
          best = std::min(best, dr * dr + dc * dc);
        }
      }
      best = std::isfinite(best) ? std::sqrt(best) : cap;
      out(r, c) = inside ? -best : best;
    }
  }
  return out;
}

// Four-corner bilinear read with border clamping, map coords (col, row).
inline double bilinear(const Grid& g, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(g.cols() - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(g.rows() - 1));
  const auto x0 = static_cast<Eigen::Index>(std::floor(cx));
  const auto y0 = static_cast<Eigen::Index>(std::floor(cy));
  const auto x1 = std::min<Eigen::Index>(x0 + 1, g.cols() - 1);
  const auto y1 = std::min<Eigen::Index>(y0 + 1, g.rows() - 1);
  const double fx = cx - static_cast<double>(x0), fy = cy - static_cast<double>(y0);
  return g(y0, x0) * (1 - fx) * (1 - fy) + g(y0, x1) * fx * (1 - fy) + g(y1, x0) * (1 - fx) * fy + g(y1, x1) * fx * fy;
}

inline double clearance(const tigflow::SceneMap& m, const Vec2& p) {
  const Eigen::Vector2d q = m.rotation().inverse() * p;
  const Eigen::Vector3d hp = m.homography().inverse() * Eigen::Vector3d(q.x(), q.y(), 1.0);
  return bilinear(m.sdf(), hp.x() / hp.z(), hp.y() / hp.z());
}

inline double len(double x, double y) { return std::sqrt(x * x + y * y); }

inline double hinge2(double x) { return x > 0 ? x * x : 0.0; }

inline std::vector<double> social_reward(const std::vector<Track>& y, const std::vector<Vec2>& x0,
                                         const tigflow::SocialRewardConfig& c) {
  const std::size_t n = y.size();
  std::vector<double> out(n, 0.0);
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    double valid = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      for (std::size_t t = 0; t < y[i].size(); ++t) {
        const double hx = y[i][t].x() - (t == 0 ? x0[i].x() : y[i][t - 1].x());
        const double hy = y[i][t].y() - (t == 0 ? x0[i].y() : y[i][t - 1].y());
        const double rx = y[j][t].x() - y[i][t].x();
        const double ry = y[j][t].y() - y[i][t].y();
        const double hn = std::sqrt(hx * hx + hy * hy);
        const double d = std::sqrt(rx * rx + ry * ry);
        const double d_prev = t == 0 ? len(x0[j].x() - x0[i].x(), x0[j].y() - x0[i].y())
                                     : len(y[j][t - 1].x() - y[i][t - 1].x(), y[j][t - 1].y() - y[i][t - 1].y());
        const double dd = d - d_prev;
        if (!(d <= c.radius && hn > c.eps)) continue;
        valid += 1.0;
        double cosv = (hx * rx + hy * ry) / (hn * d + c.eps);
        cosv = std::max(-1.0, std::min(1.0, cosv));
        const double theta = std::acos(cosv) * 180.0 / pi;
        const double ms = theta <= c.phi_s ? 1.0 : 0.0;
        const double mw = (theta > c.phi_s && theta <= c.phi_w) ? 1.0 : 0.0;
        const double mr = theta > c.phi_w ? 1.0 : 0.0;
        total += c.w_s * ms * hinge2(c.delta_s - d) + c.w_wc * mw * hinge2(c.delta_w - d) +
                 c.w_wo * mw * hinge2(dd - c.m_w) + c.w_r * mr * hinge2(dd - c.m_r);
      }
    }
    if (valid == 0.0) continue;
    const double tf = static_cast<double>(y[i].size());
    const double gamma = 1.0 / (1.0 + std::log(1.0 + valid / tf));
    const double denom = c.average_valid_only ? valid : static_cast<double>(n - 1) * tf;
    out[i] = -gamma * total / denom;
  }
  return out;
}

inline double map_reward(const Track& pred, const Track& hist, const tigflow::SceneMap& m, double delta) {
  double q = 0.0;
  for (const auto& p : hist) q += hinge2(delta - clearance(m, p));
  q /= static_cast<double>(hist.size());
  double r = 0.0;
  for (const auto& p : pred) r += hinge2(delta - clearance(m, p));
  r /= static_cast<double>(pred.size());
  return -std::max(0.0, r - q);
}

struct Displacement {
  double ade_min, fde_min, ade_avg, fde_avg;
};

inline Displacement displacement(const std::vector<Track>& samples, const Track& gt, int horizon) {
  Displacement d{1e300, 1e300, 0.0, 0.0};
  for (const auto& s : samples) {
    double ade = 0.0;
    for (int t = 0; t < horizon; ++t) ade += len(s[t].x() - gt[t].x(), s[t].y() - gt[t].y());
    ade /= horizon;
    const double fde = len(s[horizon - 1].x() - gt[horizon - 1].x(), s[horizon - 1].y() - gt[horizon - 1].y());
    d.ade_min = std::min(d.ade_min, ade);
    d.fde_min = std::min(d.fde_min, fde);
    d.ade_avg += ade;
    d.fde_avg += fde;
  }
  d.ade_avg /= static_cast<double>(samples.size());
  d.fde_avg /= static_cast<double>(samples.size());
  return d;
}

// samples[k][agent]; returns (colliding, total) over agent-sample instances.
inline std::pair<long, long> collisions(const std::vector<std::vector<Track>>& samples, double thr, int horizon) {
  long hit = 0, total = 0;
  for (const auto& world : samples) {
    for (std::size_t i = 0; i < world.size(); ++i) {
      bool any = false;
      for (std::size_t j = 0; j < world.size(); ++j) {
        for (int t = 0; t < horizon; ++t) {
          if (i != j && len(world[i][t].x() - world[j][t].x(), world[i][t].y() - world[j][t].y()) < thr) any = true;
        }
      }
      hit += any ? 1 : 0;
      ++total;
    }
  }
  return {hit, total};
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
// entry of every block, using central differences with step h.
inline double fd_max_rel_error(tigflow::ParamSet& params, const tigflow::ParamSet& analytic,
                               const std::function<double()>& loss, double h = 1e-5, double floor = 1e-3,
                               std::size_t max_entries_per_block = 0) {
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Matrix& p = params[b];
    const Eigen::Index n = p.size();
    const Eigen::Index stride =
        (max_entries_per_block > 0 && static_cast<std::size_t>(n) > max_entries_per_block)
            ? n / static_cast<Eigen::Index>(max_entries_per_block)
            : 1;
    for (Eigen::Index i = 0; i < n; i += stride) {
      const double keep = p.data()[i];
      p.data()[i] = keep + h;
      const double up = loss();
      p.data()[i] = keep - h;
      const double down = loss();
      p.data()[i] = keep;
      const double num = (up - down) / (2 * h);
      const double ana = analytic[b].data()[i];
      const double err = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace oracle
