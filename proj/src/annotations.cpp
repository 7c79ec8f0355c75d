#include "tigflow/annotations.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "tigflow/error.hpp"

namespace tigflow {

namespace {

double parse_number(const std::string& tok, std::size_t line_no) {
  double v = 0.0;
  const auto* begin = tok.data();
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw DataError("annotation line " + std::to_string(line_no) + ": non-numeric field '" + tok + "'");
  }
  return v;
}

std::int64_t parse_index(const std::string& tok, std::size_t line_no, const char* what) {
  const double v = parse_number(tok, line_no);
  if (v != std::floor(v)) {
    throw DataError("annotation line " + std::to_string(line_no) + ": fractional " + what + " '" + tok + "'");
  }
  if (v < 0) throw DataError("annotation line " + std::to_string(line_no) + ": negative " + what);
  return static_cast<std::int64_t>(v);
}

}  // namespace

std::vector<RawAnnotation> parse_annotations(std::istream& in) {
  std::vector<RawAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    fields.clear();
    for (std::string tok; ls >> tok;) fields.push_back(tok);
    if (fields.size() < 4) {
      throw DataError("annotation line " + std::to_string(line_no) + ": expected 'frame agent_id x y', got " +
                      std::to_string(fields.size()) + " fields");
    }
    RawAnnotation a;
    a.frame = parse_index(fields[0], line_no, "frame");
    a.agent_id = parse_index(fields[1], line_no, "agent id");
    a.pos = Vec2(parse_number(fields[2], line_no), parse_number(fields[3], line_no));
    out.push_back(a);
  }
  return out;
}

std::vector<RawAnnotation> parse_annotations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file '" + path + "'");
  try {
    return parse_annotations(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<TrajectoryWindow> build_windows(std::vector<RawAnnotation> annotations, const std::string& scene,
                                            const WindowOptions& opts) {
  if (opts.history_len < 1 || opts.future_len < 1 || opts.stride < 1) {
    throw ConfigError("build_windows: history_len, future_len and stride must be >= 1");
  }
  std::vector<TrajectoryWindow> windows;
  if (annotations.empty()) return windows;
  std::stable_sort(annotations.begin(), annotations.end(),
                   [](const RawAnnotation& a, const RawAnnotation& b) { return a.frame < b.frame; });

  std::vector<std::int64_t> frames;
  for (const auto& a : annotations) {
    if (frames.empty() || frames.back() != a.frame) frames.push_back(a.frame);
  }
  std::int64_t step = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto gap = frames[i] - frames[i - 1];
    step = step == 0 ? gap : std::min(step, gap);
  }
  if (step == 0) step = 1;

  // (frame, agent) -> position; first record wins on duplicates
  std::map<std::pair<std::int64_t, std::int64_t>, Vec2> lookup;
  std::map<std::int64_t, std::vector<std::int64_t>> agents_at;
  for (const auto& a : annotations) {
    if (lookup.emplace(std::make_pair(a.frame, a.agent_id), a.pos).second) {
      agents_at[a.frame].push_back(a.agent_id);
    }
  }

  const int len = opts.history_len + opts.future_len;
  const std::int64_t first = frames.front();
  const std::int64_t last = frames.back();
  for (std::int64_t start = first; start + (len - 1) * step <= last; start += opts.stride * step) {
    const auto at_start = agents_at.find(start);
    if (at_start == agents_at.end()) continue;
    std::vector<std::int64_t> ids = at_start->second;
    std::sort(ids.begin(), ids.end());
    std::vector<std::int64_t> kept;
    std::vector<Track> hist, fut;
    for (auto id : ids) {
      Track h, f;
      bool complete = true;
      for (int k = 0; k < len && complete; ++k) {
        const auto it = lookup.find({start + k * step, id});
        if (it == lookup.end()) {
          complete = false;
          break;
        }
        (k < opts.history_len ? h : f).push_back(it->second);
      }
      if (!complete) continue;
      kept.push_back(id);
      hist.push_back(std::move(h));
      fut.push_back(std::move(f));
    }
    if (kept.empty()) continue;
    windows.push_back(make_window(scene + "@" + std::to_string(start), std::move(kept), std::move(hist),
                                  std::move(fut), opts.dt, opts.units));
  }
  return windows;
}

void write_annotations(std::ostream& out, const std::vector<TrajectoryWindow>& windows) {
  out << "# frame agent_id x y\n";
  out << std::setprecision(17);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const int th = win.history_len();
    const int len = th + win.future_len();
    const auto base = static_cast<std::int64_t>(w) * len;
    for (int k = 0; k < len; ++k) {
      for (int a = 0; a < win.num_agents(); ++a) {
        const Vec2& p = k < th ? win.history[a][k] : win.future_gt[a][k - th];
        out << base + k << ' ' << win.agent_ids[a] << ' ' << p.x() << ' ' << p.y() << '\n';
      }
    }
  }
}

}  // namespace tigflow
