#pragma once

// Peierls contours on the dual lattice.
//
// Dual vertices sit at half-integer points and are stored in doubled
// coordinates: the dual vertex (x + 1/2, y + 1/2) is DualPoint{2x + 1, 2y + 1}.
// A dual edge is present when the two sites it separates disagree; bonds to
// frozen sites count. At a dual vertex with four present edges the south-west
// rule pairs (south, west) and (north, east), which splits every disagreement
// set into disjoint closed loops. Loops are returned clockwise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "schn/lattice.hpp"

namespace schn {

struct DualPoint {
  int x2 = 0;
  int y2 = 0;

  friend constexpr bool operator==(const DualPoint&, const DualPoint&) = default;
};

/// Closed dual loop; the edge from vertices.back() to vertices.front() is implied.
/// Traced loops are clockwise and start at their lowest, then leftmost vertex.
struct Contour {
  std::vector<DualPoint> vertices;

  [[nodiscard]] std::size_t length() const { return vertices.size(); }

  /// Signed area in lattice units, negative for clockwise loops.
  [[nodiscard]] double signed_area() const {
    long twice4 = 0;  // shoelace in doubled coordinates: 2 * area * 4
    const std::size_t n = vertices.size();
    for (std::size_t k = 0; k < n; ++k) {
      const auto& a = vertices[k];
      const auto& b = vertices[(k + 1) % n];
      twice4 += static_cast<long>(a.x2) * b.y2 - static_cast<long>(b.x2) * a.y2;
    }
    return static_cast<double>(twice4) / 8.0;
  }
};

/// Even-odd test with a ray from s towards +x.
inline bool interior_contains(const Contour& c, Site s) {
  const int sx = 2 * s.x;
  const int sy = 2 * s.y;
  bool inside = false;
  const std::size_t n = c.vertices.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = c.vertices[k];
    const auto& b = c.vertices[(k + 1) % n];
    if (a.x2 != b.x2 || a.x2 < sx) continue;
    if (std::min(a.y2, b.y2) < sy && sy < std::max(a.y2, b.y2)) inside = !inside;
  }
  return inside;
}

namespace detail {

enum Dir : int { kEast = 0, kNorth = 1, kWest = 2, kSouth = 3 };

inline constexpr int kDx[4] = {2, 0, -2, 0};
inline constexpr int kDy[4] = {0, 2, 0, -2};

// Disagreement edges of one configuration, indexed from dual vertices.
class DualEdges {
 public:
  explicit DualEdges(const SpinConfiguration& config) : config_(config), lat_(config.lattice()) {
    const BoxShape& b = lat_.shape();
    dw_ = b.width() - 1;
    dh_ = b.height() - 1;
    used_h_.assign(static_cast<std::size_t>(dw_ * (dh_ + 1)), 0);
    used_v_.assign(static_cast<std::size_t>((dw_ + 1) * dh_), 0);
  }

  // Sites separated by the edge leaving dual point p in direction d.
  [[nodiscard]] bool present(DualPoint p, int d) const {
    const int x = (p.x2 - 1) / 2;  // p = (x + 1/2, y + 1/2)
    const int y = (p.y2 - 1) / 2;
    Site a, b;
    switch (d) {
      case kEast: a = {x + 1, y}; b = {x + 1, y + 1}; break;
      case kNorth: a = {x, y + 1}; b = {x + 1, y + 1}; break;
      case kWest: a = {x, y}; b = {x, y + 1}; break;
      default: a = {x, y}; b = {x + 1, y}; break;
    }
    if (!lat_.contains(a) || !lat_.contains(b)) return false;
    return config_.at(a) != config_.at(b);
  }

  [[nodiscard]] std::uint8_t& used(DualPoint p, int d) {
    // Horizontal edges keyed by their west end, vertical ones by their south end.
    if (d == kWest) { p.x2 -= 2; d = kEast; }
    if (d == kSouth) { p.y2 -= 2; d = kNorth; }
    const BoxShape& b = lat_.shape();
    const int i = (p.x2 - (2 * b.x_min + 1)) / 2;
    const int j = (p.y2 - (2 * b.y_min + 1)) / 2;
    // Edges never leave the dual box, see DualEdges::present.
    if (d == kEast) return used_h_[static_cast<std::size_t>(j * dw_ + i)];
    return used_v_[static_cast<std::size_t>(j * (dw_ + 1) + i)];
  }

  [[nodiscard]] int degree(DualPoint p) const {
    int n = 0;
    for (int d = 0; d < 4; ++d) n += present(p, d) ? 1 : 0;
    return n;
  }

  // Outgoing direction after arriving at p travelling in direction `heading`.
  [[nodiscard]] int next_direction(DualPoint p, int heading) const {
    const int from = (heading + 2) % 4;  // side we entered through
    if (degree(p) == 4) {
      switch (from) {
        case kSouth: return kWest;
        case kWest: return kSouth;
        case kNorth: return kEast;
        default: return kNorth;
      }
    }
    for (int d = 0; d < 4; ++d) {
      if (d != from && present(p, d)) return d;
    }
    throw Error("contour tracing: dead end at a dual vertex");
  }

  // Follows the loop through the edge leaving `start` in direction d0.
  Contour trace(DualPoint start, int d0) {
    Contour c;
    DualPoint p = start;
    int d = d0;
    do {
      c.vertices.push_back(p);
      used(p, d) = 1;
      p = {p.x2 + kDx[d], p.y2 + kDy[d]};
      d = next_direction(p, d);
    } while (!(p == start && d == d0));
    if (c.signed_area() > 0.0) std::reverse(c.vertices.begin() + 1, c.vertices.end());
    // Start at the lowest, then leftmost vertex; it is a corner visited once.
    const auto first = std::min_element(c.vertices.begin(), c.vertices.end(),
                                        [](const DualPoint& a, const DualPoint& b) {
                                          return a.y2 != b.y2 ? a.y2 < b.y2 : a.x2 < b.x2;
                                        });
    std::rotate(c.vertices.begin(), first, c.vertices.end());
    return c;
  }

  [[nodiscard]] const Lattice& lattice() const { return lat_; }

 private:
  const SpinConfiguration& config_;
  const Lattice& lat_;
  int dw_ = 0;
  int dh_ = 0;
  std::vector<std::uint8_t> used_h_;
  std::vector<std::uint8_t> used_v_;
};

}  // namespace detail

/// Number of nearest-neighbour bonds in the box whose spins disagree.
inline long disagreement_bonds(const SpinConfiguration& config) {
  const Lattice& lat = config.lattice();
  const int w = lat.width();
  const int h = lat.height();
  long n = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      if (c + 1 < w && config[i] != config[i + 1]) ++n;
      if (r + 1 < h && config[i] != config[i + w]) ++n;
    }
  }
  return n;
}

/// All contours, in order of their first edge in a row-major scan of the
/// dual vertices (east edge before north edge).
inline std::vector<Contour> extract_contours(const SpinConfiguration& config) {
  detail::DualEdges edges(config);
  const BoxShape& b = config.lattice().shape();
  std::vector<Contour> out;
  for (int y = b.y_min; y < b.y_max; ++y) {
    for (int x = b.x_min; x < b.x_max; ++x) {
      const DualPoint p{2 * x + 1, 2 * y + 1};
      for (int d : {detail::kEast, detail::kNorth}) {
        if (edges.present(p, d) && !edges.used(p, d)) out.push_back(edges.trace(p, d));
      }
    }
  }
  return out;
}

namespace detail {

inline void require_plus_segment(const Lattice& lat, const Segment& seg) {
  require(seg.value == 1, "exterior contour: segment must be frozen to +1");
  for (int x = seg.x_begin; x <= seg.x_end; ++x) {
    const int i = lat.index({x, seg.y});
    require(lat.contains({x, seg.y}) && lat.frozen_value(i) == 1,
            "exterior contour: segment is not frozen to +1 in this lattice");
  }
}

inline std::optional<Contour> outermost_containing(std::vector<Contour> candidates,
                                                   const Segment& seg) {
  std::optional<Contour> best;
  for (auto& c : candidates) {
    if (!interior_contains(c, {seg.x_begin, seg.y})) continue;
    if (!best || std::abs(c.signed_area()) > std::abs(best->signed_area())) best = std::move(c);
  }
  return best;
}

}  // namespace detail

/// Outermost contour whose interior holds the segment.
inline std::optional<Contour> exterior_contour_of(const std::vector<Contour>& contours,
                                                  const Lattice& lat, const Segment& seg) {
  detail::require_plus_segment(lat, seg);
  return detail::outermost_containing(contours, seg);
}

/// Same result as exterior_contour_of(extract_contours(config), ...) but only
/// traces loops that cross the horizontal ray east of the segment.
inline std::optional<Contour> exterior_contour(const SpinConfiguration& config,
                                               const Segment& seg) {
  const Lattice& lat = config.lattice();
  detail::require_plus_segment(lat, seg);
  detail::DualEdges edges(config);
  std::vector<Contour> found;
  const int y2 = 2 * seg.y - 1;
  for (int x = seg.x_end; x < lat.shape().x_max; ++x) {
    const DualPoint p{2 * x + 1, y2};
    if (edges.present(p, detail::kNorth) && !edges.used(p, detail::kNorth)) {
      found.push_back(edges.trace(p, detail::kNorth));
    }
  }
  return detail::outermost_containing(std::move(found), seg);
}

/// Cyclic run of contour vertices [begin, end]; `edges` counts the dual edges
/// from begin to end going forward.
struct ArcRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t edges = 0;
};

/// Heights are measured from the segment row, in lattice units (half-integers).
struct CutPoints {
  double u1 = 0.0;
  double u2 = 0.0;
  double v1 = 0.0;
  double v2 = 0.0;
  ArcRange gamma1;   // L -> R above the segment
  ArcRange gamma_v;  // R -> R around the east end
  ArcRange gamma2;   // R -> L below the segment
  ArcRange gamma_u;  // L -> L around the west end
};

/// Cut points on the dual lines just west (L) and east (R) of the segment.
/// gamma1 is the eastward crossing of the strip between L and R that passes
/// closest above the segment, gamma2 the westward crossing closest below.
inline CutPoints cut_points(const Contour& c, const Segment& seg) {
  const int xl = 2 * seg.x_begin - 1;
  const int xr = 2 * seg.x_end + 1;
  const std::size_t n = c.vertices.size();
  detail::require(n >= 4, "cut_points: degenerate contour");
  auto on_line = [&](std::size_t k) {
    const int x = c.vertices[k % n].x2;
    return x == xl ? 1 : x == xr ? 2 : 0;
  };

  struct Crossing {
    std::size_t begin;
    std::size_t end;  // may exceed n; taken mod n
    int from;
    double offset;  // signed distance from the segment where the arc passes it
  };
  std::vector<Crossing> crossings;
  for (std::size_t k = 0; k < n; ++k) {
    const int from = on_line(k);
    if (from == 0) continue;
    std::size_t m = k + 1;
    while (m < k + n && on_line(m) == 0) {
      const int x = c.vertices[m % n].x2;
      if (x < xl || x > xr) break;
      ++m;
    }
    const int to = on_line(m);
    if (m == k + n || to == 0 || to == from) continue;
    // The arc passes the column of the segment's first site at these heights;
    // it runs above the segment when an odd number of them lie above.
    const int sx = 2 * seg.x_begin;
    const int sy = 2 * seg.y;
    int above = 0;
    int lowest_above = 0;
    int highest_below = 0;
    int passes = 0;
    for (std::size_t t = k; t < m; ++t) {
      const auto& a = c.vertices[t % n];
      const auto& b = c.vertices[(t + 1) % n];
      if (a.y2 != b.y2 || std::min(a.x2, b.x2) > sx || sx > std::max(a.x2, b.x2)) continue;
      ++passes;
      if (a.y2 > sy) {
        lowest_above = above == 0 ? a.y2 : std::min(lowest_above, a.y2);
        ++above;
      } else {
        highest_below = passes - above == 1 ? a.y2 : std::max(highest_below, a.y2);
      }
    }
    const double offset = above % 2 == 1 ? (lowest_above - sy) / 2.0 : (highest_below - sy) / 2.0;
    if (passes % 2 == 1) crossings.push_back({k, m, from, offset});
  }

  const Crossing* top = nullptr;
  const Crossing* bottom = nullptr;
  for (const auto& cr : crossings) {
    if (cr.from == 1 && cr.offset > 0 && (!top || cr.offset < top->offset)) top = &cr;
    if (cr.from == 2 && cr.offset < 0 && (!bottom || cr.offset > bottom->offset)) bottom = &cr;
  }
  detail::require(top != nullptr && bottom != nullptr,
                  "cut_points: contour does not cross both lines around the segment");

  auto fwd = [n](std::size_t a, std::size_t b) { return (b % n + n - a % n) % n; };
  const std::size_t i1 = top->begin % n, j1 = top->end % n;
  const std::size_t i2 = bottom->begin % n, j2 = bottom->end % n;
  CutPoints cp;
  cp.gamma1 = {i1, j1, fwd(i1, j1)};
  cp.gamma_v = {j1, i2, fwd(j1, i2)};
  cp.gamma2 = {i2, j2, fwd(i2, j2)};
  cp.gamma_u = {j2, i1, fwd(j2, i1)};
  detail::require(cp.gamma1.edges + cp.gamma_v.edges + cp.gamma2.edges + cp.gamma_u.edges == n,
                  "cut_points: crossings are not in cyclic order");
  auto h = [&](std::size_t k) { return (c.vertices[k].y2 - 2 * seg.y) / 2.0; };
  cp.u1 = h(i1);
  cp.v1 = h(j1);
  cp.v2 = h(i2);
  cp.u2 = h(j2);
  return cp;
}

/// Cut points for the segment [(-N, 0), (0, 0)].
inline CutPoints cut_points(const Contour& c, int N) {
  return cut_points(c, Segment{-N, 0, 0, 1});
}

inline void write_contours_csv_header(std::ostream& out) {
  out << "sample_id,contour_id,vertex_index,x2,y2\n";
}

inline void write_contours_csv(std::ostream& out, std::int64_t sample_id,
                               const std::vector<Contour>& contours) {
  for (std::size_t c = 0; c < contours.size(); ++c) {
    const auto& v = contours[c].vertices;
    for (std::size_t k = 0; k < v.size(); ++k) {
      out << sample_id << ',' << c << ',' << k << ',' << v[k].x2 << ',' << v[k].y2 << '\n';
    }
  }
}

}  // namespace schn
