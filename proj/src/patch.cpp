#include "cytoarch/patch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cytoarch/error.hpp"

namespace cytoarch {

std::size_t CellPatch::nonzero_count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](float v) { return v != 0.0f; }));
}

Orientation principal_orientation(std::span<const PixelCoord> pixels) {
  if (pixels.empty()) return {};
  const double n = static_cast<double>(pixels.size());
  double mx = 0.0, my = 0.0;
  for (auto p : pixels) {
    mx += p.col;
    my -= p.row;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (auto p : pixels) {
    const double x = p.col - mx;
    const double y = -p.row - my;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double half_trace = 0.5 * (sxx + syy);
  const double disc = std::sqrt(0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy);
  const double l1 = half_trace + disc;
  const double l2 = std::max(0.0, half_trace - disc);
  if (l1 <= 0.0 || disc <= 1e-12 * l1) return {};
  double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy) * 180.0 / std::numbers::pi;
  if (angle <= -90.0) angle += 180.0;
  return {angle, 1.0 - l2 / l1};
}

namespace {

// Samples `source(row, col)` (zero outside its support) on a rotated grid:
// output pixel (pr, pc) at offset (dx, dy_up) from the patch center reads the
// source at center + R(theta) * (dx, dy_up).
template <class Source>
std::vector<float> resample(int size, double center_row, double center_col, double theta_deg, Source&& source) {
  const double t = theta_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const int mid = size / 2;
  std::vector<float> out(static_cast<std::size_t>(size) * size, 0.0f);
  for (int pr = 0; pr < size; ++pr) {
    for (int pc = 0; pc < size; ++pc) {
      const double dx = pc - mid;
      const double dy = -(pr - mid);
      const double sx = dx * ct - dy * st;
      const double sy = dx * st + dy * ct;
      const double col = center_col + sx;
      const double row = center_row - sy;
      const double r0 = std::floor(row), c0 = std::floor(col);
      const double fr = row - r0, fc = col - c0;
      const int ir = static_cast<int>(r0), ic = static_cast<int>(c0);
      double v = 0.0;
      if (fr == 0.0 && fc == 0.0) {
        v = source(ir, ic);
      } else {
        v = (1 - fr) * (1 - fc) * source(ir, ic) + (1 - fr) * fc * source(ir, ic + 1) +
            fr * (1 - fc) * source(ir + 1, ic) + fr * fc * source(ir + 1, ic + 1);
      }
      out[static_cast<std::size_t>(pr) * size + pc] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

CellPatch extract_patch(const SectionImage& image, const CellSegment& segment, int patch_size) {
  if (patch_size < kMinPatchSize) throw InvalidArgument("patch_size must be at least 8");
  const BBox& b = segment.bbox;
  if (b.min_row < 0 || b.min_col < 0 || b.max_row >= image.height || b.max_col >= image.width) {
    throw InvalidArgument("segment lies outside the image");
  }
  const int bw = b.width(), bh = b.height();
  std::vector<float> local(static_cast<std::size_t>(bw) * bh, 0.0f);
  for (auto p : segment.pixels) {
    local[static_cast<std::size_t>(p.row - b.min_row) * bw + (p.col - b.min_col)] = image.at(p.row, p.col);
  }
  auto source = [&](int r, int c) -> double {
    const int lr = r - b.min_row, lc = c - b.min_col;
    if (lr < 0 || lc < 0 || lr >= bh || lc >= bw) return 0.0;
    return local[static_cast<std::size_t>(lr) * bw + lc];
  };
  const Orientation o = principal_orientation(segment.pixels);
  CellPatch patch;
  patch.size = patch_size;
  patch.pixels = resample(patch_size, segment.centroid.row, segment.centroid.col, o.angle_deg, source);
  patch.rotation_angle = o.angle_deg;
  patch.rotation_confidence = o.confidence;
  return patch;
}

CellPatch normalize_rotation(const CellPatch& patch) {
  std::vector<PixelCoord> support;
  double sr = 0.0, sc = 0.0;
  for (int r = 0; r < patch.size; ++r) {
    for (int c = 0; c < patch.size; ++c) {
      if (patch.at(r, c) != 0.0f) {
        support.push_back({r, c});
        sr += r;
        sc += c;
      }
    }
  }
  CellPatch out;
  out.size = patch.size;
  if (support.empty()) {
    out.pixels = patch.pixels;
    return out;
  }
  const Orientation o = principal_orientation(support);
  const double n = static_cast<double>(support.size());
  auto source = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= patch.size || c >= patch.size) return 0.0;
    return patch.at(r, c);
  };
  out.pixels = resample(patch.size, sr / n, sc / n, o.angle_deg, source);
  out.rotation_angle = o.angle_deg;
  out.rotation_confidence = o.confidence;
  return out;
}

}  // namespace cytoarch
