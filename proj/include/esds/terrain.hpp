#pragma once

// Procedural heightfield terrains (simple bumps, gaps, obstacle blocks,
// descending stairs) and the continuous height/normal queries used by the
// contact model, the exteroceptive sensors and the statistics agent.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"

namespace esds {

enum class TerrainKind { Simple, Gaps, Obstacles, Stairs };

inline std::string to_string(TerrainKind kind) {
  switch (kind) {
    case TerrainKind::Simple: return "simple";
    case TerrainKind::Gaps: return "gaps";
    case TerrainKind::Obstacles: return "obstacles";
    case TerrainKind::Stairs: return "stairs";
  }
  return "simple";
}

inline TerrainKind terrain_kind_from_string(const std::string& name) {
  if (name == "simple") return TerrainKind::Simple;
  if (name == "gaps") return TerrainKind::Gaps;
  if (name == "obstacles") return TerrainKind::Obstacles;
  if (name == "stairs") return TerrainKind::Stairs;
  throw Error(ErrorCode::InvalidParams, "unknown terrain kind '" + name + "'");
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  bool operator==(const Range&) const = default;
};

/// Axis-aligned world rectangle [x0, x1] x [y0, y1].
struct Rect {
  double x0 = -1.0;
  double y0 = -1.0;
  double x1 = 1.0;
  double y1 = 1.0;

  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const Rect&) const = default;
};

struct TerrainParams {
  // grid
  double resolution = 0.05;
  double width = 20.0;   // along x
  double length = 20.0;  // along y
  double origin_x = -4.0;
  double origin_y = -10.0;

  // simple
  Range bump_amp_range{0.03, 0.05};
  double bump_scale = 0.5;  // value-noise lattice spacing

  // gaps
  Range gap_width_range{0.8, 1.2};
  Range gap_length_range{2.0, 5.0};
  double gap_depth = -1.0;
  double gap_area_target = 0.2;
  double gap_separation = 0.5;

  // obstacles
  Range obstacle_size_range{0.3, 0.8};
  Range obstacle_height_range{0.1, 0.4};
  double obstacle_density_target = 0.15;

  // stairs
  double step_height = 0.12;
  double tread_depth = 0.30;

  Rect spawn_zone{};

  bool operator==(const TerrainParams&) const = default;
};

struct CellIndex {
  int ix = 0;
  int iy = 0;
};

/// Regular-grid heightfield. Cell (ix, iy) covers
/// [origin_x + ix*res, origin_x + (ix+1)*res) x [origin_y + iy*res, ...);
/// heights are stored at cell centers, row-major with rows along y.
struct TerrainMap {
  TerrainKind kind = TerrainKind::Simple;
  std::uint64_t seed = 0;
  TerrainParams params{};
  double resolution = 0.05;
  double origin_x = 0.0;
  double origin_y = 0.0;
  int nx = 0;
  int ny = 0;
  std::vector<double> cells;
  std::vector<std::uint8_t> gap_mask;

  double width() const { return nx * resolution; }
  double length() const { return ny * resolution; }
  double gap_depth() const { return params.gap_depth; }

  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix);
  }
  double cell(int ix, int iy) const { return cells[index(ix, iy)]; }
  bool is_gap(int ix, int iy) const { return gap_mask[index(ix, iy)] != 0; }

  double cell_center_x(int ix) const { return origin_x + (ix + 0.5) * resolution; }
  double cell_center_y(int iy) const { return origin_y + (iy + 0.5) * resolution; }

  bool inside(double x, double y) const {
    constexpr double kSlack = 1e-9;
    return x >= origin_x - kSlack && x <= origin_x + width() + kSlack && y >= origin_y - kSlack &&
           y <= origin_y + length() + kSlack;
  }

  /// Cell containing (x, y), clamped to the grid.
  CellIndex cell_of(double x, double y) const {
    int ix = static_cast<int>(std::floor((x - origin_x) / resolution));
    int iy = static_cast<int>(std::floor((y - origin_y) / resolution));
    return {std::clamp(ix, 0, nx - 1), std::clamp(iy, 0, ny - 1)};
  }

  double gap_fraction() const {
    std::size_t count = 0;
    for (auto g : gap_mask) count += g;
    return static_cast<double>(count) / static_cast<double>(gap_mask.size());
  }

  bool operator==(const TerrainMap&) const = default;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidParams, what);
}

inline void require_range(const Range& r, const std::string& name) {
  require(std::isfinite(r.lo) && std::isfinite(r.hi), name + " must be finite");
  require(r.lo <= r.hi, name + " is empty (lo > hi)");
  require(r.lo >= 0.0, name + " must be non-negative");
}

// Bilinear interpolation of the four cell-center samples around (x, y).
// Neighbours flagged in the gap mask borrow the height of the cell that holds
// the query so gap edges stay sharp.
inline double interpolate(const TerrainMap& map, double x, double y) {
  const CellIndex home = map.cell_of(x, y);
  const double home_h = map.cell(home.ix, home.iy);
  if (map.nx < 2 || map.ny < 2) return home_h;

  const double fx = (x - map.origin_x) / map.resolution - 0.5;
  const double fy = (y - map.origin_y) / map.resolution - 0.5;
  const int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, map.nx - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, map.ny - 2);
  const double tx = std::clamp(fx - i0, 0.0, 1.0);
  const double ty = std::clamp(fy - j0, 0.0, 1.0);

  auto sample = [&](int ix, int iy) { return map.is_gap(ix, iy) ? home_h : map.cell(ix, iy); };
  const double h00 = sample(i0, j0);
  const double h10 = sample(i0 + 1, j0);
  const double h01 = sample(i0, j0 + 1);
  const double h11 = sample(i0 + 1, j0 + 1);
  return (1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11);
}

inline double height_unchecked(const TerrainMap& map, double x, double y) {
  const CellIndex c = map.cell_of(x, y);
  if (map.is_gap(c.ix, c.iy)) return map.gap_depth();
  return interpolate(map, x, y);
}

inline void validate_params(TerrainKind kind, const TerrainParams& p) {
  require(std::isfinite(p.resolution) && p.resolution > 0.0, "resolution must be positive");
  require(p.width > 0.0 && p.length > 0.0, "extent must be positive");
  require_range(p.bump_amp_range, "bump_amp_range");
  require(p.bump_scale > 0.0, "bump_scale must be positive");
  require_range(p.gap_width_range, "gap_width_range");
  require_range(p.gap_length_range, "gap_length_range");
  require(std::isfinite(p.gap_depth) && p.gap_depth < 0.0, "gap_depth must be negative");
  require(p.gap_area_target >= 0.0 && p.gap_area_target < 1.0, "gap_area_target must be in [0, 1)");
  require(p.gap_separation >= 0.0, "gap_separation must be non-negative");
  require_range(p.obstacle_size_range, "obstacle_size_range");
  require_range(p.obstacle_height_range, "obstacle_height_range");
  require(p.obstacle_density_target >= 0.0 && p.obstacle_density_target < 1.0,
          "obstacle_density_target must be in [0, 1)");
  require(p.step_height >= 0.0 && p.tread_depth >= 0.0, "stair dimensions must be non-negative");
  if (kind == TerrainKind::Stairs) {
    require(p.step_height > 0.0, "step_height must be positive for stairs");
    require(p.tread_depth > 0.0, "tread_depth must be positive for stairs");
  }
  if (kind == TerrainKind::Gaps) require(p.gap_width_range.lo > 0.0, "gap width must be positive");
  if (kind == TerrainKind::Obstacles) require(p.obstacle_size_range.lo > 0.0, "obstacle size must be positive");
  const Rect& s = p.spawn_zone;
  require(s.x0 < s.x1 && s.y0 < s.y1, "spawn_zone is empty");
  require(s.x0 >= p.origin_x && s.x1 <= p.origin_x + p.width && s.y0 >= p.origin_y &&
              s.y1 <= p.origin_y + p.length,
          "spawn_zone must lie inside the extent");
}

// Index range [lo, hi) of cells whose centers fall inside [a, b] along one axis.
inline std::pair<int, int> cell_span(double a, double b, double origin, double res, int n) {
  int lo = static_cast<int>(std::ceil((a - origin) / res - 0.5));
  int hi = static_cast<int>(std::floor((b - origin) / res - 0.5)) + 1;
  return {std::clamp(lo, 0, n), std::clamp(hi, 0, n)};
}

inline bool overlaps(const Rect& a, const Rect& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

inline void fill_simple(TerrainMap& map, Rng& rng) {
  const auto& p = map.params;
  const double amp = rng.uniform(p.bump_amp_range.lo, p.bump_amp_range.hi);
  const int lx = static_cast<int>(std::ceil(map.width() / p.bump_scale)) + 2;
  const int ly = static_cast<int>(std::ceil(map.length() / p.bump_scale)) + 2;
  std::vector<double> lattice(static_cast<std::size_t>(lx) * static_cast<std::size_t>(ly));
  for (auto& v : lattice) v = rng.uniform();
  for (int iy = 0; iy < map.ny; ++iy) {
    for (int ix = 0; ix < map.nx; ++ix) {
      const double u = (ix + 0.5) * map.resolution / p.bump_scale;
      const double v = (iy + 0.5) * map.resolution / p.bump_scale;
      const int a = static_cast<int>(u);
      const int b = static_cast<int>(v);
      const double tu = u - a;
      const double tv = v - b;
      auto at = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * lx + static_cast<std::size_t>(i)]; };
      const double noise = (1 - tv) * ((1 - tu) * at(a, b) + tu * at(a + 1, b)) +
                           tv * ((1 - tu) * at(a, b + 1) + tu * at(a + 1, b + 1));
      // fade in over one bump length so the flat spawn zone has no lip
      const double dx = std::max({p.spawn_zone.x0 - map.cell_center_x(ix), map.cell_center_x(ix) - p.spawn_zone.x1, 0.0});
      const double dy = std::max({p.spawn_zone.y0 - map.cell_center_y(iy), map.cell_center_y(iy) - p.spawn_zone.y1, 0.0});
      const double f = std::min(1.0, std::hypot(dx, dy) / p.bump_scale);
      const double taper = f * f * (3.0 - 2.0 * f);
      map.cells[map.index(ix, iy)] = std::clamp(taper * amp * noise, 0.0, amp);
    }
  }
}

inline void fill_gaps(TerrainMap& map, Rng& rng) {
  const auto& p = map.params;
  const double total = static_cast<double>(map.cells.size());
  const double target = p.gap_area_target;
  std::size_t carved = 0;
  int gaps = 0;
  constexpr int kMaxAttempts = 20000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    if (gaps > 0 && static_cast<double>(carved) / total >= target) break;
    const double w = rng.uniform(p.gap_width_range.lo, p.gap_width_range.hi);
    const double l = std::max(w, rng.uniform(p.gap_length_range.lo, p.gap_length_range.hi));
    const bool narrow_x = rng.uniform() < 0.5;
    const double sx = narrow_x ? w : l;
    const double sy = narrow_x ? l : w;
    const double cx = rng.uniform(map.origin_x + sx / 2, map.origin_x + map.width() - sx / 2);
    const double cy = rng.uniform(map.origin_y + sy / 2, map.origin_y + map.length() - sy / 2);
    if (sx > map.width() || sy > map.length()) continue;
    const Rect r{cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2};
    const Rect keep_out{p.spawn_zone.x0 - p.gap_separation, p.spawn_zone.y0 - p.gap_separation,
                        p.spawn_zone.x1 + p.gap_separation, p.spawn_zone.y1 + p.gap_separation};
    if (overlaps(r, keep_out)) continue;

    const auto [ix0, ix1] = cell_span(r.x0, r.x1, map.origin_x, map.resolution, map.nx);
    const auto [iy0, iy1] = cell_span(r.y0, r.y1, map.origin_y, map.resolution, map.ny);
    if (ix1 <= ix0 || iy1 <= iy0) continue;
    // keep carved rectangles apart so maximal runs never merge
    const int margin = std::max(1, static_cast<int>(std::ceil(p.gap_separation / map.resolution)));
    bool clear = true;
    for (int iy = std::max(0, iy0 - margin); clear && iy < std::min(map.ny, iy1 + margin); ++iy)
      for (int ix = std::max(0, ix0 - margin); ix < std::min(map.nx, ix1 + margin); ++ix)
        if (map.is_gap(ix, iy)) {
          clear = false;
          break;
        }
    if (!clear) continue;
    const std::size_t added = static_cast<std::size_t>(ix1 - ix0) * static_cast<std::size_t>(iy1 - iy0);
    if (gaps > 0 && static_cast<double>(carved + added) / total > target + 0.01) continue;
    for (int iy = iy0; iy < iy1; ++iy)
      for (int ix = ix0; ix < ix1; ++ix) {
        map.gap_mask[map.index(ix, iy)] = 1;
        map.cells[map.index(ix, iy)] = p.gap_depth;
      }
    carved += added;
    ++gaps;
  }
  if (gaps == 0) throw Error(ErrorCode::ExtentTooSmall, "no gap fits outside the spawn zone");
}

inline void fill_obstacles(TerrainMap& map, Rng& rng) {
  const auto& p = map.params;
  const double total = static_cast<double>(map.cells.size());
  const double target = p.obstacle_density_target;
  std::size_t covered = 0;
  constexpr int kMaxAttempts = 50000;
  for (int attempt = 0; attempt < kMaxAttempts && static_cast<double>(covered) / total < target; ++attempt) {
    const double sx = rng.uniform(p.obstacle_size_range.lo, p.obstacle_size_range.hi);
    const double sy = rng.uniform(p.obstacle_size_range.lo, p.obstacle_size_range.hi);
    const double h = rng.uniform(p.obstacle_height_range.lo, p.obstacle_height_range.hi);
    const double cx = rng.uniform(map.origin_x, map.origin_x + map.width());
    const double cy = rng.uniform(map.origin_y, map.origin_y + map.length());
    const Rect r{cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2};
    if (overlaps(r, p.spawn_zone)) continue;
    const auto [ix0, ix1] = cell_span(r.x0, r.x1, map.origin_x, map.resolution, map.nx);
    const auto [iy0, iy1] = cell_span(r.y0, r.y1, map.origin_y, map.resolution, map.ny);
    std::size_t fresh = 0;
    for (int iy = iy0; iy < iy1; ++iy)
      for (int ix = ix0; ix < ix1; ++ix) fresh += map.cell(ix, iy) <= 0.0 ? 1 : 0;
    if (fresh == 0) continue;
    if (static_cast<double>(covered + fresh) / total > target + 0.02) continue;
    for (int iy = iy0; iy < iy1; ++iy)
      for (int ix = ix0; ix < ix1; ++ix) {
        double& cell = map.cells[map.index(ix, iy)];
        cell = std::max(cell, h);
      }
    covered += fresh;
  }
  if (target > 0.0 && std::abs(static_cast<double>(covered) / total - target) > 0.02)
    throw Error(ErrorCode::ExtentTooSmall, "could not reach obstacle density target");
}

inline void fill_stairs(TerrainMap& map) {
  const auto& p = map.params;
  const double start = p.spawn_zone.x1;
  if (map.origin_x + map.width() < start + p.tread_depth)
    throw Error(ErrorCode::ExtentTooSmall, "no room for a tread beyond the spawn zone");
  for (int ix = 0; ix < map.nx; ++ix) {
    const double x = map.cell_center_x(ix);
    const double h = x < start ? 0.0 : -p.step_height * std::floor((x - start) / p.tread_depth);
    for (int iy = 0; iy < map.ny; ++iy) map.cells[map.index(ix, iy)] = h;
  }
}

}  // namespace detail

/// Deterministic in (kind, params, seed).
inline TerrainMap generate_terrain(TerrainKind kind, const TerrainParams& params, std::uint64_t seed) {
  detail::validate_params(kind, params);
  TerrainMap map;
  map.kind = kind;
  map.seed = seed;
  map.params = params;
  map.resolution = params.resolution;
  map.origin_x = params.origin_x;
  map.origin_y = params.origin_y;
  map.nx = static_cast<int>(std::lround(params.width / params.resolution));
  map.ny = static_cast<int>(std::lround(params.length / params.resolution));
  if (map.nx < 2 || map.ny < 2) throw Error(ErrorCode::ExtentTooSmall, "grid needs at least 2x2 cells");
  map.cells.assign(static_cast<std::size_t>(map.nx) * static_cast<std::size_t>(map.ny), 0.0);
  map.gap_mask.assign(map.cells.size(), 0);

  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind)));
  switch (kind) {
    case TerrainKind::Simple: detail::fill_simple(map, rng); break;
    case TerrainKind::Gaps: detail::fill_gaps(map, rng); break;
    case TerrainKind::Obstacles: detail::fill_obstacles(map, rng); break;
    case TerrainKind::Stairs: detail::fill_stairs(map); break;
  }

  // flat spawn zone
  const Rect& s = params.spawn_zone;
  const auto [ix0, ix1] = detail::cell_span(s.x0, s.x1, map.origin_x, map.resolution, map.nx);
  const auto [iy0, iy1] = detail::cell_span(s.y0, s.y1, map.origin_y, map.resolution, map.ny);
  for (int iy = iy0; iy < iy1; ++iy)
    for (int ix = ix0; ix < ix1; ++ix) {
      map.cells[map.index(ix, iy)] = 0.0;
      map.gap_mask[map.index(ix, iy)] = 0;
    }
  return map;
}

/// Terrain height at (x, y); gap cells report the gap depth exactly.
inline double height_at(const TerrainMap& map, double x, double y) {
  if (!map.inside(x, y))
    throw Error(ErrorCode::OutOfBounds,
                "query (" + format_roundtrip(x) + ", " + format_roundtrip(y) + ") outside terrain extent");
  return detail::height_unchecked(map, x, y);
}

/// Like height_at, but points outside the extent read the nearest edge cell.
inline double height_at_clamped(const TerrainMap& map, double x, double y) {
  const double eps = 1e-9 * map.resolution;
  x = std::clamp(x, map.origin_x + eps, map.origin_x + map.width() - eps);
  y = std::clamp(y, map.origin_y + eps, map.origin_y + map.length() - eps);
  return detail::height_unchecked(map, x, y);
}

inline bool is_gap_at(const TerrainMap& map, double x, double y) {
  const CellIndex c = map.cell_of(x, y);
  return map.is_gap(c.ix, c.iy);
}

namespace detail {

inline std::array<double, 3> normal_unchecked(const TerrainMap& map, double x, double y) {
  const double h = map.resolution;
  const double dhdx = (height_at_clamped(map, x + h, y) - height_at_clamped(map, x - h, y)) / (2 * h);
  const double dhdy = (height_at_clamped(map, x, y + h) - height_at_clamped(map, x, y - h)) / (2 * h);
  const double norm = std::sqrt(dhdx * dhdx + dhdy * dhdy + 1.0);
  return {-dhdx / norm, -dhdy / norm, 1.0 / norm};
}

}  // namespace detail

/// Unit normal from central-difference tangents; z component always positive.
inline std::array<double, 3> surface_normal(const TerrainMap& map, double x, double y) {
  if (!map.inside(x, y))
    throw Error(ErrorCode::OutOfBounds,
                "query (" + format_roundtrip(x) + ", " + format_roundtrip(y) + ") outside terrain extent");
  return detail::normal_unchecked(map, x, y);
}

inline std::array<double, 3> surface_normal_clamped(const TerrainMap& map, double x, double y) {
  return detail::normal_unchecked(map, x, y);
}

// ---------------------------------------------------------------------------
// Terrain file format

inline constexpr int kTerrainFormatVersion = 1;

inline nlohmann::json range_to_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

inline Range range_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline nlohmann::json to_json(const TerrainParams& p) {
  return {
      {"resolution", p.resolution},
      {"extent", {p.width, p.length}},
      {"origin", {p.origin_x, p.origin_y}},
      {"bump_amp_range", range_to_json(p.bump_amp_range)},
      {"bump_scale", p.bump_scale},
      {"gap_width_range", range_to_json(p.gap_width_range)},
      {"gap_length_range", range_to_json(p.gap_length_range)},
      {"gap_depth", p.gap_depth},
      {"gap_area_target", p.gap_area_target},
      {"gap_separation", p.gap_separation},
      {"obstacle_size_range", range_to_json(p.obstacle_size_range)},
      {"obstacle_height_range", range_to_json(p.obstacle_height_range)},
      {"obstacle_density_target", p.obstacle_density_target},
      {"step_height", p.step_height},
      {"tread_depth", p.tread_depth},
      {"spawn_zone", {p.spawn_zone.x0, p.spawn_zone.y0, p.spawn_zone.x1, p.spawn_zone.y1}},
  };
}

inline TerrainParams terrain_params_from_json(const nlohmann::json& j) {
  TerrainParams p;
  p.resolution = j.at("resolution").get<double>();
  p.width = j.at("extent").at(0).get<double>();
  p.length = j.at("extent").at(1).get<double>();
  p.origin_x = j.at("origin").at(0).get<double>();
  p.origin_y = j.at("origin").at(1).get<double>();
  p.bump_amp_range = range_from_json(j.at("bump_amp_range"));
  p.bump_scale = j.at("bump_scale").get<double>();
  p.gap_width_range = range_from_json(j.at("gap_width_range"));
  p.gap_length_range = range_from_json(j.at("gap_length_range"));
  p.gap_depth = j.at("gap_depth").get<double>();
  p.gap_area_target = j.at("gap_area_target").get<double>();
  p.gap_separation = j.at("gap_separation").get<double>();
  p.obstacle_size_range = range_from_json(j.at("obstacle_size_range"));
  p.obstacle_height_range = range_from_json(j.at("obstacle_height_range"));
  p.obstacle_density_target = j.at("obstacle_density_target").get<double>();
  p.step_height = j.at("step_height").get<double>();
  p.tread_depth = j.at("tread_depth").get<double>();
  const auto& s = j.at("spawn_zone");
  p.spawn_zone = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>(), s.at(3).get<double>()};
  return p;
}

inline std::string terrain_to_json_text(const TerrainMap& map) {
  nlohmann::json j;
  j["format_version"] = kTerrainFormatVersion;
  j["kind"] = to_string(map.kind);
  j["seed"] = map.seed;
  j["params"] = to_json(map.params);
  j["resolution"] = map.resolution;
  j["extent"] = {map.width(), map.length()};
  j["origin"] = {map.origin_x, map.origin_y};
  j["shape"] = {map.ny, map.nx};
  j["heights"] = map.cells;
  std::vector<int> mask(map.gap_mask.begin(), map.gap_mask.end());
  j["gap_mask"] = mask;
  return j.dump();
}

inline TerrainMap terrain_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("terrain file is not JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kTerrainFormatVersion)
      throw Error(ErrorCode::Format, "unsupported terrain format version");
    TerrainMap map;
    map.kind = terrain_kind_from_string(j.at("kind").get<std::string>());
    map.seed = j.at("seed").get<std::uint64_t>();
    map.params = terrain_params_from_json(j.at("params"));
    map.resolution = j.at("resolution").get<double>();
    map.origin_x = j.at("origin").at(0).get<double>();
    map.origin_y = j.at("origin").at(1).get<double>();
    map.ny = j.at("shape").at(0).get<int>();
    map.nx = j.at("shape").at(1).get<int>();
    map.cells = j.at("heights").get<std::vector<double>>();
    const auto mask = j.at("gap_mask").get<std::vector<int>>();
    map.gap_mask.assign(mask.begin(), mask.end());
    const auto expected = static_cast<std::size_t>(map.nx) * static_cast<std::size_t>(map.ny);
    if (map.nx < 2 || map.ny < 2 || map.cells.size() != expected || map.gap_mask.size() != expected)
      throw Error(ErrorCode::Format, "terrain arrays do not match shape");
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed terrain file: ") + e.what());
  }
}

inline void save_terrain(const TerrainMap& map, const std::string& path) {
  write_file(path, terrain_to_json_text(map));
}

inline TerrainMap load_terrain(const std::string& path) { return terrain_from_json_text(read_file(path)); }

}  // namespace esds
