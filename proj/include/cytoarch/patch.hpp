#pragma once

#include <span>
#include <vector>

#include "cytoarch/image.hpp"
#include "cytoarch/segmentation.hpp"

namespace cytoarch {

inline constexpr int kDefaultPatchSize = 64;
inline constexpr int kMinPatchSize = 8;

// Fixed-size, zero-padded, rotation-normalized cell image. The cell centroid
// sits on pixel (size/2, size/2).
struct CellPatch {
  int size = 0;
  std::vector<float> pixels;  // size * size, row-major
  double rotation_angle = 0.0;       // degrees in (-90, 90]
  double rotation_confidence = 0.0;  // 1 - lambda2/lambda1

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * size + col]; }
  std::size_t nonzero_count() const;
};

// Principal-axis orientation of a pixel set. The angle is measured
// counter-clockwise from the +column axis with rows pointing down (so "up"
// in the displayed image is positive), folded into (-90, 90]. Isotropic
// sets report angle 0 and confidence 0.
struct Orientation {
  double angle_deg = 0.0;
  double confidence = 0.0;
};

Orientation principal_orientation(std::span<const PixelCoord> pixels);

// Copies the segment's pixels (zero elsewhere) into a patch_size square
// centered on the centroid and rotated so the principal axis is horizontal.
// Cells larger than the patch are center-cropped.
CellPatch extract_patch(const SectionImage& image, const CellSegment& segment, int patch_size = kDefaultPatchSize);

// Re-estimates the orientation from the patch's nonzero pixels and resamples
// the patch so that axis is horizontal.
CellPatch normalize_rotation(const CellPatch& patch);

}  // namespace cytoarch
