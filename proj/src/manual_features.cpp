#include "cytoarch/manual_features.hpp"

#include <algorithm>
#include <cmath>

namespace cytoarch {

const std::array<std::string, kCellFeatureCount>& cell_feature_names() {
  static const std::array<std::string, kCellFeatureCount> names = {
      "width",     "height",         "area",          "rotation", "rotation_confidence",
      "intensity_mean", "intensity_std", "patch_size", "coord_std_x", "coord_std_y",
      "dm1",       "dm2",            "dm3",           "dm4",      "dm5",
      "dm6",       "dm7",            "dm8",           "dm9",      "dm10"};
  return names;
}

int cell_feature_index(const std::string& name) {
  const auto& names = cell_feature_names();
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::array<double, kManualFeatureCount> ManualFeatures::to_array() const {
  return {width,          height,        area,       rotation_angle,       rotation_confidence,
          intensity_mean, intensity_std, patch_size, coord_std_horizontal, coord_std_vertical};
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

template <class It, class F>
MeanStd mean_std(It first, It last, F value) {
  double n = 0.0, sum = 0.0;
  for (It it = first; it != last; ++it) {
    sum += value(*it);
    n += 1.0;
  }
  if (n == 0.0) return {};
  const double mean = sum / n;
  double ss = 0.0;
  for (It it = first; it != last; ++it) {
    const double d = value(*it) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / n)};
}

}  // namespace

ManualFeatures manual_features(const SectionImage& image, const CellSegment& segment, const CellPatch& patch) {
  ManualFeatures f;
  f.width = segment.bbox.width();
  f.height = segment.bbox.height();
  f.area = segment.area;
  f.rotation_angle = patch.rotation_angle;
  f.rotation_confidence = patch.rotation_confidence;
  const auto intensity =
      mean_std(segment.pixels.begin(), segment.pixels.end(), [&](PixelCoord p) { return double(image.at(p.row, p.col)); });
  f.intensity_mean = intensity.mean;
  f.intensity_std = intensity.std;

  std::vector<PixelCoord> support;
  for (int r = 0; r < patch.size; ++r) {
    for (int c = 0; c < patch.size; ++c) {
      if (patch.at(r, c) != 0.0f) support.push_back({r, c});
    }
  }
  f.patch_size = static_cast<double>(support.size());
  f.coord_std_horizontal = mean_std(support.begin(), support.end(), [](PixelCoord p) { return double(p.col); }).std;
  f.coord_std_vertical = mean_std(support.begin(), support.end(), [](PixelCoord p) { return double(p.row); }).std;
  return f;
}

}  // namespace cytoarch
