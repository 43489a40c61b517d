#include "cytoarch/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cytoarch/error.hpp"

namespace cytoarch {

CellSegment make_segment(std::string section_id, std::uint64_t cell_id, std::vector<PixelCoord> pixels) {
  if (pixels.empty()) throw InvalidArgument("segment needs at least one pixel");
  std::sort(pixels.begin(), pixels.end(),
            [](PixelCoord a, PixelCoord b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  CellSegment s;
  s.cell_id = cell_id;
  s.section_id = std::move(section_id);
  s.bbox = {pixels[0].row, pixels[0].col, pixels[0].row, pixels[0].col};
  double sr = 0.0, sc = 0.0;
  for (auto p : pixels) {
    s.bbox.min_row = std::min(s.bbox.min_row, p.row);
    s.bbox.min_col = std::min(s.bbox.min_col, p.col);
    s.bbox.max_row = std::max(s.bbox.max_row, p.row);
    s.bbox.max_col = std::max(s.bbox.max_col, p.col);
    sr += p.row;
    sc += p.col;
  }
  s.area = static_cast<int>(pixels.size());
  s.centroid = {sr / s.area, sc / s.area};
  s.pixels = std::move(pixels);
  return s;
}

std::vector<double> gaussian_kernel(int block_size) {
  if (block_size < 3 || block_size % 2 == 0) throw InvalidArgument("block_size must be odd and >= 3");
  const double sigma = 0.3 * ((block_size - 1) * 0.5 - 1.0) + 0.8;
  const int half = block_size / 2;
  std::vector<double> k(static_cast<std::size_t>(block_size));
  double sum = 0.0;
  for (int i = 0; i < block_size; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::vector<double> gaussian_local_mean(const SectionImage& image, int block_size) {
  const auto kernel = gaussian_kernel(block_size);
  const int half = block_size / 2;
  const int w = image.width, h = image.height;
  std::vector<double> horiz(static_cast<std::size_t>(w) * h);
  std::vector<double> padded(static_cast<std::size_t>(w + 2 * half));
  for (int r = 0; r < h; ++r) {
    for (int c = -half; c < w + half; ++c) padded[c + half] = image.at(r, std::clamp(c, 0, w - 1));
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      const double* src = &padded[c];
      for (int i = 0; i < block_size; ++i) acc += kernel[i] * src[i];
      horiz[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int r = 0; r < h; ++r) {
    double* dst = &out[static_cast<std::size_t>(r) * w];
    for (int i = 0; i < block_size; ++i) {
      const int rr = std::clamp(r + i - half, 0, h - 1);
      const double* src = &horiz[static_cast<std::size_t>(rr) * w];
      const double k = kernel[i];
      for (int c = 0; c < w; ++c) dst[c] += k * src[c];
    }
  }
  return out;
}

BinaryMask adaptive_threshold(const SectionImage& image, int block_size, double c) {
  const auto mean = gaussian_local_mean(image, block_size);
  BinaryMask mask(image.width, image.height);
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mask.bits[i] = (mean[i] - image.pixels[i]) > -c ? 1 : 0;
  }
  return mask;
}

std::vector<CellSegment> connected_components(const BinaryMask& mask, int min_area, int max_area,
                                              const std::string& section_id) {
  if (min_area < 1) throw InvalidArgument("min_area must be >= 1");
  const int w = mask.width, h = mask.height;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::vector<PixelCoord>> components;
  std::vector<PixelCoord> stack;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * w + c;
      if (!mask.bits[idx] || seen[idx]) continue;
      std::vector<PixelCoord> pixels;
      stack.push_back({r, c});
      seen[idx] = 1;
      while (!stack.empty()) {
        const PixelCoord p = stack.back();
        stack.pop_back();
        pixels.push_back(p);
        constexpr int dr[] = {-1, 1, 0, 0};
        constexpr int dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int nr = p.row + dr[k], nc = p.col + dc[k];
          if (nr < 0 || nc < 0 || nr >= h || nc >= w) continue;
          const std::size_t nidx = static_cast<std::size_t>(nr) * w + nc;
          if (mask.bits[nidx] && !seen[nidx]) {
            seen[nidx] = 1;
            stack.push_back({nr, nc});
          }
        }
      }
      const int area = static_cast<int>(pixels.size());
      if (area >= min_area && area <= max_area) components.push_back(std::move(pixels));
    }
  }
  std::vector<CellSegment> segments;
  segments.reserve(components.size());
  for (auto& px : components) segments.push_back(make_segment(section_id, 0, std::move(px)));
  std::stable_sort(segments.begin(), segments.end(), [](const CellSegment& a, const CellSegment& b) {
    return a.bbox.min_row != b.bbox.min_row ? a.bbox.min_row < b.bbox.min_row : a.bbox.min_col < b.bbox.min_col;
  });
  for (std::size_t i = 0; i < segments.size(); ++i) segments[i].cell_id = i;
  return segments;
}

std::vector<CellSegment> segment_section(const SectionImage& image, const SegmentParams& params) {
  const BinaryMask mask = params.bright_cells ? adaptive_threshold(invert(image), params.block_size, params.c)
                                              : adaptive_threshold(image, params.block_size, params.c);
  return connected_components(mask, params.min_area, params.max_area, image.section_id);
}

std::string segments_to_ndjson(const std::vector<CellSegment>& segments) {
  std::ostringstream out;
  for (const auto& s : segments) {
    std::vector<int> runs;
    for (std::size_t i = 0; i < s.pixels.size();) {
      std::size_t j = i + 1;
      while (j < s.pixels.size() && s.pixels[j].row == s.pixels[i].row &&
             s.pixels[j].col == s.pixels[j - 1].col + 1) {
        ++j;
      }
      runs.insert(runs.end(), {s.pixels[i].row, s.pixels[i].col, static_cast<int>(j - i)});
      i = j;
    }
    nlohmann::json rec = {{"cell_id", s.cell_id},
                          {"section_id", s.section_id},
                          {"centroid", {s.centroid.row, s.centroid.col}},
                          {"bbox", {s.bbox.min_row, s.bbox.min_col, s.bbox.max_row, s.bbox.max_col}},
                          {"area", s.area},
                          {"runs", runs}};
    out << rec.dump() << '\n';
  }
  return out.str();
}

std::vector<CellSegment> segments_from_ndjson(const std::string& text) {
  std::vector<CellSegment> segments;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto runs = rec.at("runs").get<std::vector<int>>();
      if (runs.size() % 3 != 0) throw IoError("run list length not a multiple of 3");
      std::vector<PixelCoord> pixels;
      for (std::size_t i = 0; i < runs.size(); i += 3) {
        for (int k = 0; k < runs[i + 2]; ++k) pixels.push_back({runs[i], runs[i + 1] + k});
      }
      auto seg = make_segment(rec.at("section_id").get<std::string>(), rec.at("cell_id").get<std::uint64_t>(),
                              std::move(pixels));
      if (seg.area != rec.at("area").get<int>()) throw IoError("area does not match run-length pixels");
      segments.push_back(std::move(seg));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("segments line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return segments;
}

}  // namespace cytoarch
