#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tigflow/annotations.hpp"
#include "tigflow/error.hpp"
#include "tigflow/pipeline.hpp"
#include "tigflow/rng.hpp"
#include "tigflow/synthetic.hpp"
#include "tigflow/trajectory.hpp"

using namespace tigflow;

namespace {

TrajectoryWindow random_window(Rng& rng, int agents, int th = 8, int tf = 12) {
  std::vector<Track> h(agents), f(agents);
  std::vector<std::int64_t> ids;
  for (int a = 0; a < agents; ++a) {
    ids.push_back(a);
    for (int t = 0; t < th; ++t) h[a].emplace_back(rng.normal(), rng.normal());
    for (int t = 0; t < tf; ++t) f[a].emplace_back(rng.normal(), rng.normal());
  }
  return make_window("w", ids, h, f);
}

}  // namespace

TEST_CASE("to_absolute shifts every sample by the agent origin") {
  TrajectoryWindow w = make_window("s", {1}, {Track(8, Vec2(3, 4))}, {Track(12, Vec2(3, 4))});
  PredictionSet zero;
  zero.samples.assign(1, std::vector<Track>(1, Track(12, Vec2::Zero())));
  const PredictionSet shifted = to_absolute(zero, w);
  for (const auto& p : shifted.samples[0][0]) CHECK(p == Vec2(3, 4));

  TrajectoryWindow w0 = make_window("s", {1}, {Track(8, Vec2::Zero())}, {Track(12, Vec2::Zero())});
  PredictionSet one = zero;
  one.samples[0][0][0] = Vec2(1, 0);
  CHECK(to_absolute(one, w0).samples[0][0][0] == Vec2(1, 0));

  Rng rng(3);
  TrajectoryWindow rw = random_window(rng, 2);
  PredictionSet rel;
  rel.samples.resize(3, std::vector<Track>(2));
  for (auto& k : rel.samples)
    for (auto& a : k)
      for (int t = 0; t < 12; ++t) a.emplace_back(rng.normal(), rng.normal());
  const PredictionSet abs = to_absolute(rel, rw);
  CHECK(abs.frame == Frame::absolute);
  for (int k = 0; k < 3; ++k)
    for (int a = 0; a < 2; ++a)
      for (int t = 0; t < 12; ++t) {
        CHECK(abs.samples[k][a][t].x() == rel.samples[k][a][t].x() + rw.history[a].back().x());
        CHECK(abs.samples[k][a][t].y() == rel.samples[k][a][t].y() + rw.history[a].back().y());
      }
  CHECK_THROWS_AS((void)to_absolute(abs, rw), DataError);
}

TEST_CASE("finite differences") {
  CHECK(finite_differences(Track(5, Vec2(2, 2))) == Track(4, Vec2::Zero()));
  CHECK(finite_differences(Track{{0, 0}, {1, 0}, {2, 0}}) == Track{{1, 0}, {1, 0}});
  Rng rng(5);
  Track t;
  for (int i = 0; i < 12; ++i) t.emplace_back(rng.normal(), rng.normal());
  const Track d = finite_differences(t);
  REQUIRE(d.size() == 11);
  for (int i = 0; i < 11; ++i) {
    CHECK(d[i].x() == t[i + 1].x() - t[i].x());
    CHECK(d[i].y() == t[i + 1].y() - t[i].y());
  }
  CHECK_THROWS((void)finite_differences(Track{{0, 0}}));
}

TEST_CASE("annotation parsing") {
  std::istringstream one("10 1 0.5 2.0\n");
  const auto r = parse_annotations(one);
  REQUIRE(r.size() == 1);
  CHECK(r[0] == RawAnnotation{10, 1, Vec2(0.5, 2.0)});

  std::istringstream empty("");
  CHECK(parse_annotations(empty).empty());

  std::istringstream eth("# comment\n\n780.0\t1.0\t8.46\t3.59\n");
  CHECK(parse_annotations(eth).at(0).frame == 780);

  std::istringstream bad("1 2 3\n");
  CHECK_THROWS_AS((void)parse_annotations(bad), DataError);
  std::istringstream frac("1.5 2 3 4\n");
  CHECK_THROWS_AS((void)parse_annotations(frac), DataError);
}

TEST_CASE("fixture file parses to 100 records with a stable hash") {
  const std::string path = std::string(TIGFLOW_TEST_DATA) + "/fixture_100.txt";
  CHECK(parse_annotations_file(path).size() == 100);
  // `git hash-object tests/data/fixture_100.txt`
  CHECK(file_hash(path) == "2a9fba655a4f1e5f48d6f7407d16e94a5696882b");
  CHECK(file_hash(path) == file_hash(path));
}

TEST_CASE("windowing") {
  std::vector<RawAnnotation> a;
  for (int f = 0; f < 20; ++f) a.push_back({f * 10, 7, Vec2(f, 0)});
  const auto w = build_windows(a, "s", {.stride = 20});
  REQUIRE(w.size() == 1);
  CHECK(w[0].history_len() == 8);
  CHECK(w[0].future_len() == 12);
  CHECK(w[0].origin[0] == Vec2(7, 0));
  a.pop_back();
  CHECK(build_windows(a, "s").empty());
}

TEST_CASE("windowing matches brute-force enumeration") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RawAnnotation> a;
    std::map<std::int64_t, std::pair<int, int>> span;
    for (std::int64_t id : {3, 5}) {
      const int s = static_cast<int>(rng.index(15));
      const int e = s + 15 + static_cast<int>(rng.index(20));
      span[id] = {s, e};
      for (int f = s; f < e; ++f) a.push_back({f, id, Vec2(rng.normal(), rng.normal())});
    }
    const auto windows = build_windows(a, "s");
    std::set<std::pair<std::string, std::vector<std::int64_t>>> expected, got;
    for (int start = 0; start < 60; ++start) {
      std::vector<std::int64_t> ids;
      for (const auto& [id, se] : span)
        if (se.first <= start && start + 20 <= se.second) ids.push_back(id);
      if (!ids.empty()) expected.insert({"s@" + std::to_string(start), ids});
    }
    for (const auto& w : windows) got.insert({w.scene_id, w.agent_ids});
    CHECK(got == expected);
  }
}

TEST_CASE("annotations round trip through write_annotations") {
  Rng rng(2);
  std::vector<TrajectoryWindow> ws;
  for (int i = 0; i < 3; ++i) {
    TrajectoryWindow w = random_window(rng, 2);
    w.agent_ids = {2 * i, 2 * i + 1};
    ws.push_back(w);
  }
  std::stringstream ss;
  write_annotations(ss, ws);
  const auto back = build_windows(parse_annotations(ss), "s", {.stride = 20});
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].agent_ids == ws[i].agent_ids);
    for (int a = 0; a < 2; ++a) CHECK((back[i].future_gt[a][11] - ws[i].future_gt[a][11]).norm() < 1e-9);
  }
}

TEST_CASE("synthetic generator") {
  SynthConfig c;
  c.scenario = Scenario::corridor;
  c.n_agents = 1;
  c.noise_std = 0.0;
  c.n_windows = 3;
  const SynthDataset straight = generate_synthetic(c);
  for (const auto& w : straight.windows) {
    Track all = w.history[0];
    all.insert(all.end(), w.future_gt[0].begin(), w.future_gt[0].end());
    const Track v = finite_differences(all);
    for (std::size_t t = 1; t < v.size(); ++t) CHECK((v[t] - v[0]).norm() < 1e-9);
    CHECK(v[0].norm() > 0.1);
  }

  SynthConfig d;
  d.n_windows = 5;
  d.seed = 42;
  const auto a = generate_synthetic(d).windows;
  const auto b = generate_synthetic(d).windows;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].history == b[i].history);
    CHECK(a[i].future_gt == b[i].future_gt);
  }

  SynthConfig x;
  x.scenario = Scenario::crossing_flows;
  x.n_agents = 8;
  x.n_windows = 100;
  int clear = 0;
  const auto ws = generate_synthetic(x).windows;
  for (const auto& w : ws) {
    double dmin = 1e9;
    for (int i = 0; i < w.num_agents(); ++i)
      for (int j = i + 1; j < w.num_agents(); ++j)
        for (int t = 0; t < w.future_len(); ++t) dmin = std::min(dmin, (w.future_gt[i][t] - w.future_gt[j][t]).norm());
    clear += dmin > 0.2 ? 1 : 0;
  }
  CHECK(clear >= 95);

  SynthConfig o;
  o.scenario = Scenario::obstacle_field;
  o.n_windows = 2;
  CHECK(generate_synthetic(o).map.has_value());
}
