#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tigflow/trajectory.hpp"

namespace tigflow {

struct RawAnnotation {
  std::int64_t frame = 0;
  std::int64_t agent_id = 0;
  Vec2 pos = Vec2::Zero();

  friend bool operator==(const RawAnnotation&, const RawAnnotation&) = default;
};

// Whitespace-separated `frame agent_id x y [extra...]` records, one per line.
// Blank lines and lines starting with '#' are skipped. Frame and agent ids may
// be written as floats (ETH/UCY style "780.0") but must be integral and
// non-negative. Errors carry the 1-based line number.
[[nodiscard]] std::vector<RawAnnotation> parse_annotations(std::istream& in);
[[nodiscard]] std::vector<RawAnnotation> parse_annotations_file(const std::string& path);

struct WindowOptions {
  int history_len = 8;
  int future_len = 12;
  int stride = 1;  // in sampled frames
  double dt = 0.4;
  Units units = Units::meters;
};

// Sliding windows of history_len + future_len consecutive sampled frames. The
// sampling step is the smallest gap between distinct frame numbers; an agent is
// kept only if it is observed at every frame of the window. Agents are ordered
// by ascending id. Window ids are "<scene>@<start frame>".
[[nodiscard]] std::vector<TrajectoryWindow> build_windows(std::vector<RawAnnotation> annotations,
                                                          const std::string& scene,
                                                          const WindowOptions& opts = {});

// Writes windows back as annotation records. Window w occupies frames
// [w * L, (w + 1) * L) with L = T_h + T_f. Agent ids are written as stored, so
// when they are unique across windows build_windows with stride L recovers the
// same windows.
void write_annotations(std::ostream& out, const std::vector<TrajectoryWindow>& windows);

}  // namespace tigflow
