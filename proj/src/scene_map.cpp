#include "tigflow/scene_map.hpp"

#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include "tigflow/error.hpp"

namespace tigflow {

namespace {

constexpr double kFar = 1e20;

// Lower envelope of parabolas: out[q] = min_p (q - p)^2 + f[p].
void squared_distance_1d(const std::vector<double>& f, std::vector<double>& out,
                         std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
  };
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q] = d * d + f[v[k]];
  }
}

// Exact squared Euclidean distance from each cell center to the nearest site.
Grid squared_edt(const OccupancyGrid& occ, std::uint8_t site_value) {
  const int rows = static_cast<int>(occ.rows());
  const int cols = static_cast<int>(occ.cols());
  Grid d(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) d(r, c) = occ(r, c) == site_value ? 0.0 : kFar;

  const int n = std::max(rows, cols);
  std::vector<double> f(n), out(n), z(n + 1);
  std::vector<int> v(n);

  f.resize(rows);
  out.resize(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) f[r] = d(r, c);
    squared_distance_1d(f, out, v, z);
    for (int r = 0; r < rows; ++r) d(r, c) = out[r];
  }
  f.resize(cols);
  out.resize(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) f[c] = d(r, c);
    squared_distance_1d(f, out, v, z);
    for (int c = 0; c < cols; ++c) d(r, c) = out[c];
  }
  return d;
}

}  // namespace

Grid compute_sdf(const OccupancyGrid& occupancy) {
  if (occupancy.size() == 0) throw DataError("compute_sdf: empty occupancy grid");
  const int rows = static_cast<int>(occupancy.rows());
  const int cols = static_cast<int>(occupancy.cols());
  const double cap = 2.0 * std::max(rows, cols);

  OccupancyGrid binary = occupancy.unaryExpr([](std::uint8_t x) -> std::uint8_t { return x ? 1 : 0; });
  const bool any_obstacle = (binary.array() == 1).any();
  const bool any_free = (binary.array() == 0).any();

  Grid to_obstacle = any_obstacle ? squared_edt(binary, 1) : Grid();
  Grid to_free = any_free ? squared_edt(binary, 0) : Grid();

  Grid sdf(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (binary(r, c) == 0) {
        sdf(r, c) = any_obstacle ? std::sqrt(to_obstacle(r, c)) : cap;
      } else {
        sdf(r, c) = any_free ? -std::sqrt(to_free(r, c)) : -cap;
      }
    }
  }
  return sdf;
}

SceneMap::SceneMap(OccupancyGrid occupancy, Eigen::Matrix3d homography, Eigen::Matrix2d rotation,
                   double cell_size)
    : occupancy_(std::move(occupancy)),
      homography_(homography),
      rotation_(rotation),
      cell_size_(cell_size) {
  if (occupancy_.size() == 0) throw DataError("SceneMap: empty occupancy grid");
  if (!(cell_size_ > 0.0) || !std::isfinite(cell_size_)) throw DataError("SceneMap: cell_size must be > 0");
  if (!homography_.allFinite() || std::abs(homography_.determinant()) <= 1e-12) {
    throw DataError("SceneMap: homography is not invertible");
  }
  const double ortho_err = (rotation_.transpose() * rotation_ - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
  if (!rotation_.allFinite() || ortho_err > 1e-9) throw DataError("SceneMap: rotation is not orthonormal");
  homography_inv_ = homography_.inverse();
  rotation_inv_ = rotation_.transpose();
  sdf_ = compute_sdf(occupancy_);
}

Vec2 project_world_to_map(const Vec2& world, const SceneMap& map) {
  if (!world.allFinite()) throw NumericError("project_world_to_map: non-finite point");
  const Vec2 unrotated = map.rotation_inverse() * world;
  const Eigen::Vector3d h = map.homography_inverse() * Eigen::Vector3d(unrotated.x(), unrotated.y(), 1.0);
  if (std::abs(h.z()) < 1e-12) throw NumericError("project_world_to_map: projective degeneracy (|w| < 1e-12)");
  return {h.x() / h.z(), h.y() / h.z()};
}

Vec2 project_map_to_world(const Vec2& map_point, const SceneMap& map) {
  const Eigen::Vector3d h = map.homography() * Eigen::Vector3d(map_point.x(), map_point.y(), 1.0);
  if (std::abs(h.z()) < 1e-12) throw NumericError("project_map_to_world: projective degeneracy (|w| < 1e-12)");
  return map.rotation() * Vec2(h.x() / h.z(), h.y() / h.z());
}

double sample_sdf(const SceneMap& map, const Vec2& map_point) {
  const Grid& s = map.sdf();
  const double max_u = static_cast<double>(s.cols() - 1);
  const double max_v = static_cast<double>(s.rows() - 1);
  const double u = std::clamp(map_point.x(), 0.0, max_u);
  const double v = std::clamp(map_point.y(), 0.0, max_v);
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const int c1 = std::min(c0 + 1, static_cast<int>(s.cols() - 1));
  const int r1 = std::min(r0 + 1, static_cast<int>(s.rows() - 1));
  const double fu = u - c0;
  const double fv = v - r0;
  const double top = (1.0 - fu) * s(r0, c0) + fu * s(r0, c1);
  const double bottom = (1.0 - fu) * s(r1, c0) + fu * s(r1, c1);
  return (1.0 - fv) * top + fv * bottom;
}

double clearance_at(const SceneMap& map, const Vec2& world) {
  return sample_sdf(map, project_world_to_map(world, map));
}

namespace {

std::string next_header_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw DataError("read_pgm: truncated header");
}

int parse_header_int(std::istream& in) {
  const std::string tok = next_header_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw DataError("");
    return v;
  } catch (const std::exception&) {
    throw DataError("read_pgm: bad header field '" + tok + "'");
  }
}

}  // namespace

OccupancyGrid read_pgm(std::istream& in) {
  const std::string magic = next_header_token(in);
  if (magic != "P2" && magic != "P5") throw DataError("read_pgm: unsupported magic '" + magic + "'");
  const int width = parse_header_int(in);
  const int height = parse_header_int(in);
  const int maxval = parse_header_int(in);
  if (maxval > 65535) throw DataError("read_pgm: maxval out of range");
  OccupancyGrid occ(height, width);
  if (magic == "P2") {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        long v = 0;
        if (!(in >> v)) throw DataError("read_pgm: truncated pixel data");
        occ(r, c) = v >= 128 ? 1 : 0;
      }
    }
  } else {
    in.get();  // single whitespace after maxval
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError("read_pgm: truncated pixel data");
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const std::size_t i = (static_cast<std::size_t>(r) * width + c) * bytes;
        const int v = bytes == 1 ? buf[i] : (buf[i] << 8) | buf[i + 1];
        occ(r, c) = v >= 128 ? 1 : 0;
      }
    }
  }
  return occ;
}

void write_pgm(std::ostream& out, const OccupancyGrid& occupancy) {
  out << "P2\n" << occupancy.cols() << ' ' << occupancy.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < occupancy.rows(); ++r) {
    for (Eigen::Index c = 0; c < occupancy.cols(); ++c) {
      out << (occupancy(r, c) ? 255 : 0) << (c + 1 == occupancy.cols() ? '\n' : ' ');
    }
  }
}

SceneMap load_scene_map(const std::string& pgm_path, const std::string& sidecar_path) {
  std::ifstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw DataError("cannot open map image '" + pgm_path + "'");
  OccupancyGrid occ = read_pgm(pgm);

  std::ifstream side(sidecar_path);
  if (!side) throw DataError("cannot open map sidecar '" + sidecar_path + "'");
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("map sidecar '" + sidecar_path + "': " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "homography" && key != "rotation" && key != "cell_size") {
      throw DataError("map sidecar '" + sidecar_path + "': unknown key '" + key + "'");
    }
  }
  try {
    const auto h = j.at("homography").get<std::vector<double>>();
    const auto r = j.at("rotation").get<std::vector<double>>();
    if (h.size() != 9 || r.size() != 4) throw DataError("map sidecar: homography needs 9 and rotation 4 numbers");
    Eigen::Matrix3d hm;
    hm << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
    Eigen::Matrix2d rm;
    rm << r[0], r[1], r[2], r[3];
    return SceneMap(std::move(occ), hm, rm, j.at("cell_size").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("map sidecar '" + sidecar_path + "': " + e.what());
  }
}

void save_scene_map(const SceneMap& map, const std::string& pgm_path, const std::string& sidecar_path) {
  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw DataError("cannot write map image '" + pgm_path + "'");
  write_pgm(pgm, map.occupancy());
  nlohmann::json j;
  const auto& h = map.homography();
  const auto& r = map.rotation();
  j["homography"] = {h(0, 0), h(0, 1), h(0, 2), h(1, 0), h(1, 1), h(1, 2), h(2, 0), h(2, 1), h(2, 2)};
  j["rotation"] = {r(0, 0), r(0, 1), r(1, 0), r(1, 1)};
  j["cell_size"] = map.cell_size();
  std::ofstream side(sidecar_path);
  if (!side) throw DataError("cannot write map sidecar '" + sidecar_path + "'");
  side << j.dump(2) << '\n';
}

}  // namespace tigflow
