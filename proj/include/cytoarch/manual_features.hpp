#pragma once

#include <array>
#include <string>

#include "cytoarch/image.hpp"
#include "cytoarch/patch.hpp"
#include "cytoarch/segmentation.hpp"

namespace cytoarch {

inline constexpr int kManualFeatureCount = 10;
inline constexpr int kDmFeatureCount = 10;
inline constexpr int kCellFeatureCount = kManualFeatureCount + kDmFeatureCount;

// Global feature ordering shared by every brain: indices 0-9 are the manual
// features in declaration order below, 10-19 the aligned diffusion
// coordinates dm1..dm10.
const std::array<std::string, kCellFeatureCount>& cell_feature_names();

// Index of a feature family name ("rotation", "dm3", ...); -1 if unknown.
int cell_feature_index(const std::string& name);

struct ManualFeatures {
  double width = 0.0;
  double height = 0.0;
  double area = 0.0;
  double rotation_angle = 0.0;
  double rotation_confidence = 0.0;
  double intensity_mean = 0.0;
  double intensity_std = 0.0;
  double patch_size = 0.0;  // nonzero pixels in the patch
  double coord_std_horizontal = 0.0;
  double coord_std_vertical = 0.0;

  std::array<double, kManualFeatureCount> to_array() const;
};

// Intensity statistics come from the section pixels of the segment,
// coordinate spreads from the patch's nonzero pixels. Standard deviations are
// population (1/n) estimates.
ManualFeatures manual_features(const SectionImage& image, const CellSegment& segment, const CellPatch& patch);

}  // namespace cytoarch
