#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deqmcl {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

class MapParseError : public std::runtime_error {
public:
  MapParseError(std::size_t line, const std::string& what)
      : std::runtime_error("map line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class SensorInObstacleError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Boolean occupancy grid. Cell (0, 0) sits at the world origin (bottom-left
/// corner); x grows rightward, y upward. Everything outside the grid is solid.
class OccupancyGrid {
public:
  OccupancyGrid(int width, int height, double resolution)
      : width_(width), height_(height), resolution_(resolution) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("grid dimensions must be positive");
    if (!(resolution > 0.0) || !std::isfinite(resolution))
      throw std::invalid_argument("grid resolution must be positive");
    inv_resolution_ = 1.0 / resolution;
    cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  double world_width() const { return width_ * resolution_; }
  double world_height() const { return height_ * resolution_; }

  bool cell_occupied(int cx, int cy) const {
    if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_) return true;
    return cells_[index(cx, cy)] != 0;
  }

  void set_cell(int cx, int cy, bool occupied) {
    if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_)
      throw std::out_of_range("cell outside grid");
    cells_[index(cx, cy)] = occupied ? 1 : 0;
  }

  /// Marks the cells [x0, x1) x [y0, y1), clipped to the grid.
  void fill_cells(int x0, int y0, int x1, int y1, bool occupied = true) {
    for (int cy = std::max(0, y0); cy < std::min(height_, y1); ++cy)
      for (int cx = std::max(0, x0); cx < std::min(width_, x1); ++cx)
        cells_[index(cx, cy)] = occupied ? 1 : 0;
  }

  bool occupied(Point2 p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return true;
    const double fx = std::floor(p.x * inv_resolution_);
    const double fy = std::floor(p.y * inv_resolution_);
    if (fx < 0.0 || fy < 0.0 || fx >= width_ || fy >= height_) return true;
    return cells_[index(static_cast<int>(fx), static_cast<int>(fy))] != 0;
  }

  Point2 cell_center(int cx, int cy) const {
    return {(cx + 0.5) * resolution_, (cy + 0.5) * resolution_};
  }

  std::size_t free_cell_count() const {
    std::size_t n = 0;
    for (auto c : cells_) n += (c == 0);
    return n;
  }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

private:
  std::size_t index(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(cx);
  }

  int width_;
  int height_;
  double resolution_;
  double inv_resolution_;
  std::vector<std::uint8_t> cells_;
};

namespace detail {
inline int parse_positive_int(std::string_view field, std::size_t line, const char* name) {
  if (field.empty() || field.size() > 9)
    throw MapParseError(line, std::string("bad ") + name);
  int v = 0;
  for (char c : field) {
    if (c < '0' || c > '9') throw MapParseError(line, std::string("bad ") + name);
    v = v * 10 + (c - '0');
  }
  if (v <= 0) throw MapParseError(line, std::string(name) + " must be positive");
  return v;
}
}  // namespace detail

/// Parses the map text format: a `W H RES` header line followed by H rows of
/// W characters from {'.', '#'}, each newline-terminated. The first row is
/// the top (maximum-y) row of the world. A missing newline after the last
/// row is tolerated; to_map_text always writes it.
inline OccupancyGrid load_grid(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      pos = text.size();
    } else {
      lines.push_back(text.substr(pos, nl - pos));
      pos = nl + 1;
    }
  }
  if (lines.empty()) throw MapParseError(1, "missing header");

  const std::string_view header = lines[0];
  const auto s1 = header.find(' ');
  const auto s2 = s1 == std::string_view::npos ? s1 : header.find(' ', s1 + 1);
  if (s1 == std::string_view::npos || s2 == std::string_view::npos ||
      header.find(' ', s2 + 1) != std::string_view::npos)
    throw MapParseError(1, "header must be '<width> <height> <resolution>'");
  const int width = detail::parse_positive_int(header.substr(0, s1), 1, "width");
  const int height = detail::parse_positive_int(header.substr(s1 + 1, s2 - s1 - 1), 1, "height");
  const std::string res_field(header.substr(s2 + 1));
  double resolution = 0.0;
  {
    std::size_t used = 0;
    try {
      resolution = std::stod(res_field, &used);
    } catch (const std::exception&) {
      throw MapParseError(1, "bad resolution");
    }
    if (used != res_field.size() || res_field.empty() || res_field[0] == '+' ||
        res_field[0] == ' ')
      throw MapParseError(1, "bad resolution");
    if (!(resolution > 0.0) || !std::isfinite(resolution))
      throw MapParseError(1, "resolution must be positive");
  }

  if (lines.size() < static_cast<std::size_t>(height) + 1)
    throw MapParseError(lines.size() + 1, "expected " + std::to_string(height) + " rows");
  if (lines.size() > static_cast<std::size_t>(height) + 1)
    throw MapParseError(static_cast<std::size_t>(height) + 2, "trailing content after grid rows");

  OccupancyGrid grid(width, height, resolution);
  for (int r = 0; r < height; ++r) {
    const std::size_t line_no = static_cast<std::size_t>(r) + 2;
    const std::string_view row = lines[static_cast<std::size_t>(r) + 1];
    if (row.size() != static_cast<std::size_t>(width))
      throw MapParseError(line_no, "row has " + std::to_string(row.size()) +
                                       " characters, expected " + std::to_string(width));
    const int cy = height - 1 - r;
    for (int cx = 0; cx < width; ++cx) {
      const char c = row[static_cast<std::size_t>(cx)];
      if (c == '#')
        grid.set_cell(cx, cy, true);
      else if (c != '.')
        throw MapParseError(line_no, std::string("invalid character '") + c + "'");
    }
  }
  return grid;
}

inline OccupancyGrid load_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_grid(ss.str());
}

inline std::string to_map_text(const OccupancyGrid& grid) {
  std::ostringstream out;
  out << grid.width() << ' ' << grid.height() << ' ' << grid.resolution() << '\n';
  for (int cy = grid.height() - 1; cy >= 0; --cy) {
    for (int cx = 0; cx < grid.width(); ++cx) out << (grid.cell_occupied(cx, cy) ? '#' : '.');
    out << '\n';
  }
  return out.str();
}

inline bool is_occupied(const OccupancyGrid& grid, Point2 p) { return grid.occupied(p); }

/// Number of occupied samples on the segment a-b. Samples are equally spaced
/// at spacing <= step with both endpoints included; the sample set is the
/// same for (a, b) and (b, a).
inline int segment_collision_count(const OccupancyGrid& grid, Point2 a, Point2 b, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("collision step must be positive");
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (!std::isfinite(len)) return grid.occupied(a) + grid.occupied(b);
  const auto n = static_cast<long>(std::ceil(len / step));
  if (n == 0) return grid.occupied(a) ? 1 : 0;
  int count = 0;
  const double nd = static_cast<double>(n);
  for (long k = 0; k <= n; ++k) {
    const double wb = static_cast<double>(k) / nd;
    const double wa = static_cast<double>(n - k) / nd;
    const Point2 p{a.x * wa + b.x * wb, a.y * wa + b.y * wb};
    count += grid.occupied(p) ? 1 : 0;
  }
  return count;
}

/// Distance along `heading` to the first occupied sample (marched at `step`),
/// or max_range when nothing is hit.
inline double raycast(const OccupancyGrid& grid, Point2 origin, double heading, double max_range,
                      double step) {
  if (!(max_range > 0.0) || !(step > 0.0))
    throw std::invalid_argument("raycast range and step must be positive");
  if (grid.occupied(origin)) throw SensorInObstacleError("raycast origin is inside an obstacle");
  const double dx = std::cos(heading);
  const double dy = std::sin(heading);
  for (long k = 1;; ++k) {
    const double d = static_cast<double>(k) * step;
    if (d > max_range) return max_range;
    if (grid.occupied({origin.x + d * dx, origin.y + d * dy})) return d;
  }
}

}  // namespace deqmcl
