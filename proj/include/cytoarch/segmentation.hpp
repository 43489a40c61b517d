#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cytoarch/image.hpp"

namespace cytoarch {

struct PixelCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(PixelCoord, PixelCoord) = default;
};

struct BBox {
  int min_row = 0, min_col = 0, max_row = 0, max_col = 0;  // inclusive
  int width() const { return max_col - min_col + 1; }
  int height() const { return max_row - min_row + 1; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Centroid {
  double row = 0.0;
  double col = 0.0;
};

// One segmented cell. Pixels are stored in row-major order.
struct CellSegment {
  std::uint64_t cell_id = 0;
  std::string section_id;
  std::vector<PixelCoord> pixels;
  Centroid centroid;
  BBox bbox;
  int area = 0;
};

// Fills centroid, bbox and area from `pixels` (which must be non-empty) and
// sorts the pixel list row-major.
CellSegment make_segment(std::string section_id, std::uint64_t cell_id, std::vector<PixelCoord> pixels);

struct SegmentParams {
  int block_size = 101;
  double c = -12.0;
  int min_area = 20;
  int max_area = 5000;
  // Invert before thresholding so that bright cells on a dark background
  // (fluorescence) segment like dark cells on a bright one.
  bool bright_cells = false;
};

// Normalized Gaussian kernel used for the local mean; sigma follows the
// usual 0.3 * ((k - 1) / 2 - 1) + 0.8 rule for a k-tap window.
std::vector<double> gaussian_kernel(int block_size);

// Gaussian-weighted local mean with edge replication.
std::vector<double> gaussian_local_mean(const SectionImage& image, int block_size);

// Foreground iff (local_mean - intensity) > -c, so a negative c selects
// pixels darker than their surroundings by more than |c|.
BinaryMask adaptive_threshold(const SectionImage& image, int block_size, double c);

// 4-connected components with area in [min_area, max_area], ordered by the
// (min_row, min_col) corner of their bounding boxes. Cell ids are assigned
// 0..n-1 in that order.
std::vector<CellSegment> connected_components(const BinaryMask& mask, int min_area, int max_area,
                                              const std::string& section_id = {});

std::vector<CellSegment> segment_section(const SectionImage& image, const SegmentParams& params);

// Newline-delimited JSON, one record per cell, pixel sets run-length encoded.
std::string segments_to_ndjson(const std::vector<CellSegment>& segments);
std::vector<CellSegment> segments_from_ndjson(const std::string& text);

}  // namespace cytoarch
