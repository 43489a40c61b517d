#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cytoarch/image.hpp"
#include "cytoarch/segmentation.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cytoarch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline cytoarch::CellSegment segment_of(std::vector<cytoarch::PixelCoord> pixels, std::uint64_t id = 0) {
  return cytoarch::make_segment("s", id, std::move(pixels));
}

inline std::vector<cytoarch::PixelCoord> bar(int row, int col, int rows, int cols) {
  std::vector<cytoarch::PixelCoord> px;
  for (int r = row; r < row + rows; ++r)
    for (int c = col; c < col + cols; ++c) px.push_back({r, c});
  return px;
}

inline std::vector<cytoarch::PixelCoord> disk(int row, int col, double radius) {
  std::vector<cytoarch::PixelCoord> px;
  const int k = static_cast<int>(radius) + 1;
  for (int r = row - k; r <= row + k; ++r)
    for (int c = col - k; c <= col + k; ++c)
      if ((r - row) * (r - row) + (c - col) * (c - col) <= radius * radius) px.push_back({r, c});
  return px;
}

// Pixels (row, col) whose centers fall inside an ellipse with the given
// counter-clockwise angle (y up).
inline std::vector<cytoarch::PixelCoord> ellipse(double row, double col, double a, double b, double angle_deg) {
  std::vector<cytoarch::PixelCoord> px;
  const double t = angle_deg * 3.14159265358979323846 / 180.0;
  const int k = static_cast<int>(a) + 2;
  for (int r = static_cast<int>(row) - k; r <= static_cast<int>(row) + k; ++r) {
    for (int c = static_cast<int>(col) - k; c <= static_cast<int>(col) + k; ++c) {
      const double x = c - col, y = -(r - row);
      const double u = x * std::cos(t) + y * std::sin(t);
      const double v = -x * std::sin(t) + y * std::cos(t);
      if (u * u / (a * a) + v * v / (b * b) <= 1.0) px.push_back({r, c});
    }
  }
  return px;
}

inline cytoarch::SectionImage paint(int w, int h, const std::vector<cytoarch::PixelCoord>& px, std::uint8_t fg = 60,
                                    std::uint8_t bg = 210) {
  cytoarch::SectionImage img(w, h, bg, "s");
  for (auto p : px) img.at(p.row, p.col) = fg;
  return img;
}

}  // namespace testing
