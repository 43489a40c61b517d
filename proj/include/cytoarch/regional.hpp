#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cytoarch/cell_db.hpp"
#include "cytoarch/geometry.hpp"
#include "cytoarch/image.hpp"

namespace cytoarch {

inline constexpr int kCdfPoints = 99;
inline constexpr int kCdfEntries = kCellFeatureCount * kCdfPoints;  // 1980
inline constexpr int kRegionFeatureLength = kCdfEntries + 2;         // 1982
inline constexpr int kDensityIndex = kCdfEntries;
inline constexpr int kAreaRatioIndex = kCdfEntries + 1;

// Global thresholds: for every cell feature, the empirical quantiles at
// 1%, ..., 99% of a training population (linear interpolation between order
// statistics, h = (n - 1) p).
struct ThresholdGrid {
  std::array<std::array<double, kCdfPoints>, kCellFeatureCount> thresholds{};

  double at(int feature, int k) const { return thresholds[feature][k]; }
};

// Linear-interpolated empirical quantile of already sorted values.
double sorted_quantile(const std::vector<double>& sorted, double p);

// Throws when the database holds fewer than 100 cells.
ThresholdGrid fit_threshold_grid(const CellFeatureDB& db);

nlohmann::json threshold_grid_json(const ThresholdGrid& grid);
ThresholdGrid threshold_grid_from_json(const nlohmann::json& j);

// Human-readable names for the 1982 region features: "<family>–<threshold>"
// for CDF entries (e.g. "rotation–11.3"), then "density" and "area_ratio".
std::vector<std::string> region_feature_names(const ThresholdGrid& grid);

struct RegionFeatureVector {
  std::vector<double> values = std::vector<double>(kRegionFeatureLength, 0.0);
  std::size_t cell_count = 0;
  bool low_support = false;

  double cdf(int feature, int k) const { return values[static_cast<std::size_t>(feature) * kCdfPoints + k]; }
  double density() const { return values[kDensityIndex]; }
  double area_ratio() const { return values[kAreaRatioIndex]; }
};

struct RegionParams {
  std::size_t min_cells = 5;
};

// Pixels of the section whose centers fall inside the region.
long long region_pixel_area(const Region& region, const SectionInfo& section);

// cdf(j, k) = fraction of region cells with feature_j <= threshold_jk.
// density = cells per mm^2 when the section has a resolution, otherwise per
// pixel. area_ratio = cell pixels inside the region / region pixels.
// Regions with fewer than min_cells cells are flagged low-support; empty
// regions yield the all-zero vector.
RegionFeatureVector region_feature(const CellFeatureDB& db, const std::string& section_id, const Region& region,
                                   const ThresholdGrid& grid, const RegionParams& params = {});

// Same as region_feature for an explicit cell subset (indices into db).
RegionFeatureVector region_feature_from_cells(const CellFeatureDB& db, const std::vector<std::size_t>& cells,
                                              const ThresholdGrid& grid, double region_pixels, long long covered,
                                              double resolution_um, const RegionParams& params = {});

struct Tile {
  std::string section_id;
  int row = 0;  // origin
  int col = 0;
  int side = 224;

  Rect rect() const { return {double(col), double(row), double(col + side), double(row + side)}; }
  Region region() const { return Region::from_rect(rect()); }
};

// Row-major tiles at every origin (r * stride, c * stride) that fits inside.
std::vector<Tile> tile_section(const std::string& section_id, int width, int height, int side, int stride);
std::vector<Tile> tile_section(const SectionImage& section, int side, int stride);

struct StructureAnnotation {
  std::string section_id;
  std::string structure;
  std::vector<Polygon> polygons;  // union
};

// Reads a JSON array of {section_id, structure, polygon: [[x, y], ...]}
// records; records sharing (section_id, structure) are merged.
std::vector<StructureAnnotation> annotations_from_json(const nlohmann::json& j);
nlohmann::json annotations_to_json(const std::vector<StructureAnnotation>& annotations);

// Pixels of the tile whose centers lie inside any of the annotation polygons.
long long tile_pixels_inside(const Tile& tile, const StructureAnnotation& annotation);

// True iff strictly more than half of the tile's pixels lie inside.
bool label_tile(const Tile& tile, const StructureAnnotation& annotation);

// Scanline rasterization of the annotation (pixel centers, even-odd rule per polygon).
BinaryMask rasterize_annotation(const StructureAnnotation& annotation, int width, int height);

// Labels many tiles against one rasterized annotation; identical to label_tile.
std::vector<bool> label_tiles(const std::vector<Tile>& tiles, const StructureAnnotation& annotation, int width, int height);

}  // namespace cytoarch
