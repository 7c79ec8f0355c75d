#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>

#include "tigflow/trajectory.hpp"

namespace tigflow {

using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using OccupancyGrid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Signed distance field over cell centers, in cell units:
//   free cell      ->  distance to the nearest obstacle-cell center
//   obstacle cell  -> -distance to the nearest free-cell center
// A grid without obstacles (or without free cells) is filled with
// +/- max(H, W) * 2 so downstream rewards stay finite.
[[nodiscard]] Grid compute_sdf(const OccupancyGrid& occupancy);

// Map coordinates are (column, row) with cell centers at integer positions.
// The homography maps map coordinates to (rotated) world coordinates, so the
// world -> map direction applies R^-1 and then H^-1.
class SceneMap {
 public:
  SceneMap(OccupancyGrid occupancy, Eigen::Matrix3d homography, Eigen::Matrix2d rotation,
           double cell_size);

  [[nodiscard]] const OccupancyGrid& occupancy() const noexcept { return occupancy_; }
  [[nodiscard]] const Grid& sdf() const noexcept { return sdf_; }
  [[nodiscard]] const Eigen::Matrix3d& homography() const noexcept { return homography_; }
  [[nodiscard]] const Eigen::Matrix2d& rotation() const noexcept { return rotation_; }
  [[nodiscard]] const Eigen::Matrix3d& homography_inverse() const noexcept { return homography_inv_; }
  [[nodiscard]] const Eigen::Matrix2d& rotation_inverse() const noexcept { return rotation_inv_; }
  [[nodiscard]] double cell_size() const noexcept { return cell_size_; }
  [[nodiscard]] int rows() const noexcept { return static_cast<int>(occupancy_.rows()); }
  [[nodiscard]] int cols() const noexcept { return static_cast<int>(occupancy_.cols()); }

 private:
  OccupancyGrid occupancy_;
  Grid sdf_;
  Eigen::Matrix3d homography_;
  Eigen::Matrix2d rotation_;
  Eigen::Matrix3d homography_inv_;
  Eigen::Matrix2d rotation_inv_;
  double cell_size_;
};

// Pi(H^-1 [R^-1 p; 1]). Throws NumericError when the homogeneous scale
// vanishes.
[[nodiscard]] Vec2 project_world_to_map(const Vec2& world, const SceneMap& map);
[[nodiscard]] Vec2 project_map_to_world(const Vec2& map_point, const SceneMap& map);

// Bilinear interpolation of the SDF; queries outside the grid are clamped to
// the border.
[[nodiscard]] double sample_sdf(const SceneMap& map, const Vec2& map_point);

// Convenience: clearance (in cells) at a world position.
[[nodiscard]] double clearance_at(const SceneMap& map, const Vec2& world);

// PGM (P2 or P5); pixel value >= 128 marks an obstacle.
[[nodiscard]] OccupancyGrid read_pgm(std::istream& in);
void write_pgm(std::ostream& out, const OccupancyGrid& occupancy);

// Sidecar JSON: {"homography": [9 row-major], "rotation": [4 row-major], "cell_size": x}
[[nodiscard]] SceneMap load_scene_map(const std::string& pgm_path, const std::string& sidecar_path);
void save_scene_map(const SceneMap& map, const std::string& pgm_path, const std::string& sidecar_path);

}  // namespace tigflow
