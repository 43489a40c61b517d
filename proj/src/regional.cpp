#include "cytoarch/regional.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "cytoarch/error.hpp"

namespace cytoarch {

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ThresholdGrid fit_threshold_grid(const CellFeatureDB& db) {
  if (db.size() < 100) {
    throw InvalidArgument("threshold grid needs at least 100 cells, database has " + std::to_string(db.size()));
  }
  ThresholdGrid grid;
  for (int j = 0; j < kCellFeatureCount; ++j) {
    std::vector<double> v = db.column(j);
    std::sort(v.begin(), v.end());
    for (int k = 0; k < kCdfPoints; ++k) grid.thresholds[j][k] = sorted_quantile(v, (k + 1) / 100.0);
  }
  return grid;
}

nlohmann::json threshold_grid_json(const ThresholdGrid& grid) {
  nlohmann::json features = nlohmann::json::array();
  const auto& names = cell_feature_names();
  for (int j = 0; j < kCellFeatureCount; ++j) {
    features.push_back({{"name", names[j]}, {"thresholds", grid.thresholds[j]}});
  }
  return {{"kind", "threshold_grid"}, {"version", 1}, {"quantiles", kCdfPoints}, {"features", features}};
}

ThresholdGrid threshold_grid_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "threshold_grid") throw IoError("not a threshold grid");
  const auto& features = j.at("features");
  if (features.size() != kCellFeatureCount) throw IoError("threshold grid must list 20 features");
  ThresholdGrid grid;
  const auto& names = cell_feature_names();
  for (int f = 0; f < kCellFeatureCount; ++f) {
    if (features[f].at("name").get<std::string>() != names[f]) throw IoError("threshold grid feature order mismatch");
    const auto t = features[f].at("thresholds").get<std::vector<double>>();
    if (t.size() != kCdfPoints) throw IoError("threshold grid needs 99 thresholds per feature");
    std::copy(t.begin(), t.end(), grid.thresholds[f].begin());
  }
  return grid;
}

std::vector<std::string> region_feature_names(const ThresholdGrid& grid) {
  std::vector<std::string> names;
  names.reserve(kRegionFeatureLength);
  char buf[64];
  for (int j = 0; j < kCellFeatureCount; ++j) {
    for (int k = 0; k < kCdfPoints; ++k) {
      std::snprintf(buf, sizeof buf, "%.4g", grid.thresholds[j][k]);
      names.push_back(cell_feature_names()[j] + "–" + buf);
    }
  }
  names.push_back("density");
  names.push_back("area_ratio");
  return names;
}

long long region_pixel_area(const Region& region, const SectionInfo& section) {
  if (region.kind == Region::Kind::kPolygon) return rasterized_pixel_count(region.polygon, section.width, section.height);
  const Rect& r = region.rect;
  auto span = [](double lo, double hi, int limit) -> long long {
    const long long a = std::max<long long>(0, static_cast<long long>(std::ceil(lo - 0.5)));
    const long long b = std::min<long long>(limit, static_cast<long long>(std::ceil(hi - 0.5)));
    return std::max<long long>(0, b - a);
  };
  return span(r.x0, r.x1, section.width) * span(r.y0, r.y1, section.height);
}

RegionFeatureVector region_feature_from_cells(const CellFeatureDB& db, const std::vector<std::size_t>& cells,
                                              const ThresholdGrid& grid, double region_pixels, long long covered,
                                              double resolution_um, const RegionParams& params) {
  if (!(region_pixels > 0.0)) throw InvalidArgument("region area must be positive");
  RegionFeatureVector out;
  out.cell_count = cells.size();
  out.low_support = cells.size() < params.min_cells;
  if (cells.empty()) return out;
  const double n = static_cast<double>(cells.size());
  std::vector<double> values(cells.size());
  for (int j = 0; j < kCellFeatureCount; ++j) {
    const auto& column = db.column(j);
    for (std::size_t i = 0; i < cells.size(); ++i) values[i] = column[cells[i]];
    std::sort(values.begin(), values.end());
    for (int k = 0; k < kCdfPoints; ++k) {
      const auto below = std::upper_bound(values.begin(), values.end(), grid.thresholds[j][k]) - values.begin();
      out.values[static_cast<std::size_t>(j) * kCdfPoints + k] = static_cast<double>(below) / n;
    }
  }
  double area_units = region_pixels;
  if (resolution_um > 0.0) {
    const double mm_per_px = resolution_um / 1000.0;
    area_units *= mm_per_px * mm_per_px;
  }
  out.values[kDensityIndex] = n / area_units;
  out.values[kAreaRatioIndex] = static_cast<double>(covered) / region_pixels;
  return out;
}

RegionFeatureVector region_feature(const CellFeatureDB& db, const std::string& section_id, const Region& region,
                                   const ThresholdGrid& grid, const RegionParams& params) {
  const SectionInfo& info = db.section(section_id);
  const long long pixels = region_pixel_area(region, info);
  if (pixels <= 0) throw InvalidArgument("region does not cover any pixel of section '" + section_id + "'");
  const auto cells = db.query(section_id, region);
  const long long covered = cells.empty() ? 0 : db.covered_pixels(section_id, region);
  return region_feature_from_cells(db, cells, grid, static_cast<double>(pixels), covered, info.resolution_um, params);
}

std::vector<Tile> tile_section(const std::string& section_id, int width, int height, int side, int stride) {
  if (side < 1) throw InvalidArgument("tile side must be positive");
  if (stride < 1) throw InvalidArgument("tile stride must be positive");
  if (side > width || side > height) throw InvalidArgument("tile side exceeds the section dimensions");
  std::vector<Tile> tiles;
  for (int r = 0; r + side <= height; r += stride) {
    for (int c = 0; c + side <= width; c += stride) tiles.push_back({section_id, r, c, side});
  }
  return tiles;
}

std::vector<Tile> tile_section(const SectionImage& section, int side, int stride) {
  return tile_section(section.section_id, section.width, section.height, side, stride);
}

namespace {

Polygon polygon_from_json(const nlohmann::json& j) {
  Polygon poly;
  for (const auto& v : j) poly.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  return poly;
}

}  // namespace

std::vector<StructureAnnotation> annotations_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw IoError("annotations must be a JSON array");
  std::map<std::pair<std::string, std::string>, StructureAnnotation> merged;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& rec : j) {
    const auto section = rec.at("section_id").get<std::string>();
    const auto structure = rec.at("structure").get<std::string>();
    Polygon poly = polygon_from_json(rec.at("polygon"));
    if (poly.size() < 3 || !is_simple(poly)) {
      throw InvalidArgument("annotation polygon for '" + structure + "' in '" + section + "' is not simple");
    }
    auto key = std::make_pair(section, structure);
    auto [it, inserted] = merged.try_emplace(key, StructureAnnotation{section, structure, {}});
    if (inserted) order.push_back(key);
    it->second.polygons.push_back(std::move(poly));
  }
  std::vector<StructureAnnotation> out;
  for (const auto& key : order) out.push_back(std::move(merged[key]));
  return out;
}

nlohmann::json annotations_to_json(const std::vector<StructureAnnotation>& annotations) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : annotations) {
    for (const auto& poly : a.polygons) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : poly) pts.push_back({p.x, p.y});
      out.push_back({{"section_id", a.section_id}, {"structure", a.structure}, {"polygon", pts}});
    }
  }
  return out;
}

long long tile_pixels_inside(const Tile& tile, const StructureAnnotation& annotation) {
  long long count = 0;
  for (int r = tile.row; r < tile.row + tile.side; ++r) {
    for (int c = tile.col; c < tile.col + tile.side; ++c) {
      const Point p{c + 0.5, r + 0.5};
      for (const auto& poly : annotation.polygons) {
        if (point_in_polygon(poly, p)) {
          ++count;
          break;
        }
      }
    }
  }
  return count;
}

bool label_tile(const Tile& tile, const StructureAnnotation& annotation) {
  const long long total = static_cast<long long>(tile.side) * tile.side;
  return 2 * tile_pixels_inside(tile, annotation) > total;
}

BinaryMask rasterize_annotation(const StructureAnnotation& annotation, int width, int height) {
  BinaryMask mask(width, height);
  std::vector<double> xs;
  for (const auto& poly : annotation.polygons) {
    const std::size_t n = poly.size();
    for (int r = 0; r < height; ++r) {
      const double y = r + 0.5;
      xs.clear();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
      std::sort(xs.begin(), xs.end());
      // Inside iff an odd number of crossings lie strictly right of the
      // pixel center, i.e. the center falls in [xs[2t], xs[2t+1]).
      for (std::size_t t = 0; t + 1 < xs.size(); t += 2) {
        int c = std::max(0, static_cast<int>(std::floor(xs[t] - 0.5)) - 1);
        for (; c < width && c + 0.5 < xs[t + 1]; ++c) {
          if (c + 0.5 >= xs[t]) mask.set(r, c, true);
        }
      }
    }
  }
  return mask;
}

std::vector<bool> label_tiles(const std::vector<Tile>& tiles, const StructureAnnotation& annotation, int width,
                              int height) {
  const BinaryMask mask = rasterize_annotation(annotation, width, height);
  // Summed-area table over the mask.
  std::vector<long long> sat(static_cast<std::size_t>(width + 1) * (height + 1), 0);
  auto at = [&](int r, int c) -> long long& { return sat[static_cast<std::size_t>(r) * (width + 1) + c]; };
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) at(r + 1, c + 1) = at(r, c + 1) + at(r + 1, c) - at(r, c) + (mask.at(r, c) ? 1 : 0);
  }
  std::vector<bool> labels;
  labels.reserve(tiles.size());
  for (const auto& t : tiles) {
    const int r0 = t.row, c0 = t.col, r1 = t.row + t.side, c1 = t.col + t.side;
    const long long inside = at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0);
    labels.push_back(2 * inside > static_cast<long long>(t.side) * t.side);
  }
  return labels;
}

}  // namespace cytoarch
