#pragma once

#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

#include "deqmcl/gridmap.hpp"
#include "deqmcl/harness/trace.hpp"

namespace deqmcl {

class RenderError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline const char* cloud_color(int offset) {
  if (offset < 0) return "#ff69b4";  // past: pink
  if (offset > 0) return "#87cefa";  // future: light blue
  return "#ff8c00";                  // current: orange
}
}  // namespace detail

/// SVG snapshot of one step record: obstacles black, truth as a gray circle,
/// past/current/future particle clouds in pink/orange/light blue, step index
/// in the top-left corner. World y points up; SVG y points down.
inline std::string render_snapshot(const StepRecord& rec, const OccupancyGrid& grid) {
  if (rec.clouds.empty()) throw RenderError("trace record has no particle clouds");
  const double res = grid.resolution();
  const double W = grid.world_width(), H = grid.world_height();
  std::ostringstream svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "viewBox=\"0 0 %g %g\">\n",
                W, H, W, H);
  svg << buf;
  svg << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Obstacles as horizontal runs of occupied cells.
  svg << "<g fill=\"black\">\n";
  for (int cy = 0; cy < grid.height(); ++cy) {
    int cx = 0;
    while (cx < grid.width()) {
      if (!grid.cell_occupied(cx, cy)) {
        ++cx;
        continue;
      }
      const int start = cx;
      while (cx < grid.width() && grid.cell_occupied(cx, cy)) ++cx;
      std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\"/>\n",
                    start * res, H - (cy + 1) * res, (cx - start) * res, res);
      svg << buf;
    }
  }
  svg << "</g>\n";

  // Past first, future last, current on top.
  auto draw = [&](const OffsetCloud& c) {
    svg << "<g fill=\"" << detail::cloud_color(c.offset) << "\" fill-opacity=\"0.7\">\n";
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"1.2\"/>\n", p.pose.x,
                    H - p.pose.y);
      svg << buf;
    }
    svg << "</g>\n";
  };
  for (const auto& c : rec.clouds)
    if (c.offset < 0) draw(c);
  for (const auto& c : rec.clouds)
    if (c.offset > 0) draw(c);
  for (const auto& c : rec.clouds)
    if (c.offset == 0) draw(c);

  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"6\" fill=\"gray\" fill-opacity=\"0.8\"/>\n",
                rec.truth.x, H - rec.truth.y);
  svg << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"6\" y=\"22\" font-family=\"sans-serif\" font-size=\"18\">%zu</text>\n",
                rec.t);
  svg << buf;
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace deqmcl
