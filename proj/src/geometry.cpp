#include "cytoarch/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "cytoarch/error.hpp"

namespace cytoarch {

bool point_in_polygon(const Polygon& poly, Point p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double polygon_area(const Polygon& poly) {
  double twice = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    twice += poly[j].x * poly[i].y - poly[i].x * poly[j].y;
  }
  return std::abs(twice) * 0.5;
}

Rect bounding_rect(const Polygon& poly) {
  if (poly.empty()) return {};
  Rect r{poly[0].x, poly[0].y, poly[0].x, poly[0].y};
  for (const auto& p : poly) {
    r.x0 = std::min(r.x0, p.x);
    r.y0 = std::min(r.y0, p.y);
    r.x1 = std::max(r.x1, p.x);
    r.y1 = std::max(r.y1, p.y);
  }
  return r;
}

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point p, Point q, Point r) {
  return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
         q.y <= std::max(p.y, r.y);
}

bool segments_intersect(Point p1, Point p2, Point p3, Point p4) {
  const double d1 = cross(p3, p4, p1);
  const double d2 = cross(p3, p4, p2);
  const double d3 = cross(p1, p2, p3);
  const double d4 = cross(p1, p2, p4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(p3, p1, p4)) return true;
  if (d2 == 0 && on_segment(p3, p2, p4)) return true;
  if (d3 == 0 && on_segment(p1, p3, p2)) return true;
  if (d4 == 0 && on_segment(p1, p4, p2)) return true;
  return false;
}

}  // namespace

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = poly[i], b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a, b, poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

long long rasterized_pixel_count(const Polygon& poly, int width, int height) {
  const Rect b = bounding_rect(poly);
  const int r0 = std::max(0, static_cast<int>(std::floor(b.y0)));
  const int r1 = std::min(height, static_cast<int>(std::ceil(b.y1)) + 1);
  const int c0 = std::max(0, static_cast<int>(std::floor(b.x0)));
  const int c1 = std::min(width, static_cast<int>(std::ceil(b.x1)) + 1);
  long long count = 0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      if (point_in_polygon(poly, {c + 0.5, r + 0.5})) ++count;
    }
  }
  return count;
}

Polygon rect_polygon(const Rect& r) { return {{r.x0, r.y0}, {r.x1, r.y0}, {r.x1, r.y1}, {r.x0, r.y1}}; }

Region Region::from_polygon(Polygon p) {
  if (p.size() < 3) throw InvalidArgument("polygon needs at least 3 vertices");
  return Region{Kind::kPolygon, {}, std::move(p)};
}

}  // namespace cytoarch
