#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cytoarch/alignment.hpp"
#include "cytoarch/diffusion_map.hpp"
#include "cytoarch/geometry.hpp"
#include "cytoarch/image.hpp"
#include "cytoarch/manual_features.hpp"
#include "cytoarch/segmentation.hpp"

namespace cytoarch {

using CellFeatures = std::array<double, kCellFeatureCount>;

struct SectionInfo {
  std::string section_id;
  int width = 0;
  int height = 0;
  double resolution_um = 0.0;
};

// Horizontal run of cell pixels [col, col + length) on one row.
struct PixelRun {
  std::int32_t row = 0;
  std::int32_t col = 0;
  std::int32_t length = 0;
};

std::vector<PixelRun> to_runs(const std::vector<PixelCoord>& row_major_pixels);

// Columnar store of per-cell features with a per-section spatial index over
// centroids. A cell is inside a region when its centroid point
// (col + 0.5, row + 0.5) is. Built by a single writer; const member
// functions are safe to call concurrently.
class CellFeatureDB {
 public:
  std::string brain_id;
  std::string alignment_map_id;

  void add_section(const SectionInfo& info);
  // Throws on an unknown section or a duplicate (section_id, cell_id).
  void add_cell(const std::string& section_id, std::uint64_t cell_id, Centroid centroid, int area,
                const CellFeatures& features, std::span<const PixelRun> runs);

  std::size_t size() const { return cell_ids_.size(); }
  bool empty() const { return cell_ids_.empty(); }
  const std::vector<SectionInfo>& sections() const { return sections_; }
  const SectionInfo& section(const std::string& section_id) const;
  bool has_section(const std::string& section_id) const { return section_index_.count(section_id) > 0; }

  std::uint64_t cell_id(std::size_t i) const { return cell_ids_[i]; }
  const std::string& cell_section(std::size_t i) const { return sections_[cell_section_[i]].section_id; }
  Centroid centroid(std::size_t i) const { return {centroid_row_[i], centroid_col_[i]}; }
  Point centroid_point(std::size_t i) const { return {centroid_col_[i] + 0.5, centroid_row_[i] + 0.5}; }
  int area(std::size_t i) const { return area_[i]; }
  double feature(std::size_t i, int j) const { return columns_[j][i]; }
  const std::vector<double>& column(int j) const { return columns_[j]; }
  std::span<const PixelRun> runs(std::size_t i) const;

  // Indices (ascending) of cells in `section_id` whose centroid lies in region.
  std::vector<std::size_t> query(const std::string& section_id, const Region& region) const;
  // Same result by scanning every cell; used as a cross-check.
  std::vector<std::size_t> query_linear(const std::string& section_id, const Region& region) const;

  // Cell pixels of the section whose centers lie inside the region.
  long long covered_pixels(const std::string& section_id, const Region& region) const;

  void save(const std::filesystem::path& path) const;
  static CellFeatureDB load(const std::filesystem::path& path);
  std::string to_csv() const;

 private:
  static constexpr int kBucket = 64;
  struct SpatialIndex {
    int rows = 0, cols = 0;
    std::vector<std::vector<std::size_t>> buckets;
    std::vector<std::vector<PixelRun>> coverage;  // per image row
  };

  std::vector<SectionInfo> sections_;
  std::map<std::string, std::size_t> section_index_;
  std::vector<SpatialIndex> index_;
  std::vector<std::map<std::uint64_t, std::size_t>> ids_per_section_;

  std::vector<std::uint64_t> cell_ids_;
  std::vector<std::int32_t> cell_section_;
  std::vector<double> centroid_row_, centroid_col_;
  std::vector<std::int32_t> area_;
  std::array<std::vector<double>, kCellFeatureCount> columns_;
  std::vector<std::uint64_t> run_offsets_{0};
  std::vector<PixelRun> runs_;
};

// Per-cell pipeline for one segment: rotation-normalized patch, manual
// features, Nystrom embedding and alignment.
CellFeatures compute_cell_features(const SectionImage& image, const CellSegment& segment, const DiffusionModel& model,
                                   const AffineMap& map);

struct SectionCells {
  const SectionImage* image = nullptr;
  const std::vector<CellSegment>* segments = nullptr;
};

struct DbBuildStats {
  std::size_t cells = 0;
  std::size_t skipped_isolated = 0;  // no kernel mass against any representative
};

// One record per segment. Segments whose patch cannot be embedded are
// skipped and counted in `stats`.
CellFeatureDB build_cell_db(std::span<const SectionCells> sections, const DiffusionModel& model, const AffineMap& map,
                            DbBuildStats* stats = nullptr);

}  // namespace cytoarch
