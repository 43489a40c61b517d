#pragma once

#include <vector>

namespace cytoarch {

// Continuous section frame: x grows with column, y with row. Pixel (r, c)
// covers [c, c+1) x [r, r+1) and its center is (c + 0.5, r + 0.5).
struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // half-open [x0, x1) x [y0, y1)

  bool contains(Point p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

using Polygon = std::vector<Point>;

// Even-odd rule; points exactly on an edge may land on either side.
bool point_in_polygon(const Polygon& poly, Point p);

// Shoelace area (absolute value).
double polygon_area(const Polygon& poly);

Rect bounding_rect(const Polygon& poly);

// True when no two non-adjacent edges intersect.
bool is_simple(const Polygon& poly);

// Number of pixels of a width x height grid whose centers lie inside poly.
long long rasterized_pixel_count(const Polygon& poly, int width, int height);

Polygon rect_polygon(const Rect& r);

// Region used for spatial queries: an axis-aligned rectangle or a polygon.
struct Region {
  enum class Kind { kRect, kPolygon };
  Kind kind = Kind::kRect;
  Rect rect;
  Polygon polygon;

  static Region from_rect(Rect r) { return Region{Kind::kRect, r, {}}; }
  static Region from_polygon(Polygon p);

  bool contains(Point p) const { return kind == Kind::kRect ? rect.contains(p) : point_in_polygon(polygon, p); }
  Rect bounds() const { return kind == Kind::kRect ? rect : bounding_rect(polygon); }
};

}  // namespace cytoarch
