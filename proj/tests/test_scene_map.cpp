#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "tigflow/error.hpp"
#include "tigflow/rng.hpp"
#include "tigflow/scene_map.hpp"

using namespace tigflow;

namespace {

SceneMap identity_map(OccupancyGrid occ) {
  return SceneMap(std::move(occ), Eigen::Matrix3d::Identity(), Eigen::Matrix2d::Identity(), 1.0);
}

OccupancyGrid random_grid(Rng& rng, int h, int w, double density) {
  OccupancyGrid g(h, w);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform() < density ? 1 : 0;
  return g;
}

}  // namespace

TEST_CASE("sdf small cases") {
  OccupancyGrid g = OccupancyGrid::Zero(3, 3);
  g(1, 1) = 1;
  const Grid s = compute_sdf(g);
  CHECK(s(0, 1) == doctest::Approx(1.0));
  CHECK(s(1, 0) == doctest::Approx(1.0));
  CHECK(s(0, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(s(2, 2) == doctest::Approx(std::sqrt(2.0)));
  CHECK(s(1, 1) == doctest::Approx(-1.0));

  const Grid full = compute_sdf(OccupancyGrid::Ones(4, 5));
  CHECK((full.array() <= 0).all());
  const Grid empty = compute_sdf(OccupancyGrid::Zero(4, 5));
  CHECK((empty.array() > 0).all());
}

TEST_CASE("sdf matches brute force on random grids") {
  Rng rng(1);
  for (int trial = 0; trial < 25; ++trial) {
    const int h = 1 + static_cast<int>(rng.index(24)), w = 1 + static_cast<int>(rng.index(24));
    const OccupancyGrid g = random_grid(rng, h, w, rng.uniform(0.0, 0.6));
    CHECK((compute_sdf(g) - oracle::brute_sdf(g)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("projection") {
  const SceneMap id = identity_map(OccupancyGrid::Zero(4, 4));
  CHECK((project_world_to_map(Vec2(2, 3), id) - Vec2(2, 3)).norm() == 0.0);

  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h(0, 0) = h(1, 1) = 2.0;
  const SceneMap scaled(OccupancyGrid::Zero(4, 4), h, Eigen::Matrix2d::Identity(), 1.0);
  CHECK((project_world_to_map(Vec2(2, 3), scaled) - Vec2(1, 1.5)).norm() < 1e-15);

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Matrix3d hr = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 9; ++i) hr.data()[i] += 0.3 * rng.normal();
    hr(2, 0) *= 0.05;
    hr(2, 1) *= 0.05;
    const double a = rng.uniform(0, 6.28);
    Eigen::Matrix2d r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const SceneMap m(OccupancyGrid::Zero(4, 4), hr, r, 1.0);
    const Vec2 p(rng.uniform(-3, 3), rng.uniform(-3, 3));
    // forward map: R * Pi(H [q; 1])
    const Vec2 q = project_world_to_map(p, m);
    const Eigen::Vector3d f = hr * Eigen::Vector3d(q.x(), q.y(), 1.0);
    const Vec2 back = r * Vec2(f.x() / f.z(), f.y() / f.z());
    CHECK((back - p).norm() < 1e-9);
    CHECK((project_map_to_world(q, m) - p).norm() < 1e-9);
  }
}

TEST_CASE("bilinear sdf sampling") {
  OccupancyGrid g = OccupancyGrid::Zero(5, 6);
  g(2, 4) = 1;
  const SceneMap m = identity_map(g);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) CHECK(sample_sdf(m, Vec2(c, r)) == m.sdf()(r, c));
  OccupancyGrid line = OccupancyGrid::Zero(1, 5);
  line(0, 0) = 1;
  const SceneMap lm = identity_map(line);
  REQUIRE(lm.sdf()(0, 1) == 1.0);
  REQUIRE(lm.sdf()(0, 3) == 3.0);
  CHECK(sample_sdf(lm, Vec2(2.0, 0.0)) == 2.0);
  CHECK(0.5 * (lm.sdf()(0, 1) + lm.sdf()(0, 2)) == sample_sdf(lm, Vec2(1.5, 0.0)));

  Rng rng(8);
  const SceneMap rm = identity_map(random_grid(rng, 12, 9, 0.3));
  for (int i = 0; i < 200; ++i) {
    const Vec2 p(rng.uniform(0, 8), rng.uniform(0, 11));
    CHECK(std::abs(sample_sdf(rm, p) - oracle::bilinear(rm.sdf(), p.x(), p.y())) < 1e-12);
  }
  // out-of-grid queries clamp to the border
  CHECK(sample_sdf(rm, Vec2(-5, -5)) == rm.sdf()(0, 0));
}

TEST_CASE("pgm and sidecar round trip") {
  Rng rng(6);
  const OccupancyGrid g = random_grid(rng, 7, 11, 0.4);
  std::stringstream ss;
  write_pgm(ss, g);
  CHECK(read_pgm(ss) == g);

  std::istringstream ascii("P2\n# c\n3 2\n255\n0 255 0\n128 127 0\n");
  const OccupancyGrid a = read_pgm(ascii);
  CHECK(a(0, 1) == 1);
  CHECK(a(1, 0) == 1);
  CHECK(a(1, 1) == 0);

  std::istringstream junk("P7\n");
  CHECK_THROWS_AS((void)read_pgm(junk), DataError);
}
