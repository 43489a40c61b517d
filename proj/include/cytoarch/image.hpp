#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cytoarch {

// 8-bit grayscale section image, row-major.
struct SectionImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  std::string section_id;
  // Micrometers per pixel; 0 when unknown.
  double resolution_um = 0.0;

  SectionImage() = default;
  SectionImage(int w, int h, std::uint8_t fill = 0, std::string id = {});

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool contains(int row, int col) const { return row >= 0 && col >= 0 && row < height && col < width; }
};

// One flag per pixel, true = foreground (cell).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v) { bits[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }
  std::size_t count() const;
};

// RGB image used for overlays, interleaved row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* at(int row, int col) { return &pixels[(static_cast<std::size_t>(row) * width + col) * 3]; }
  const std::uint8_t* at(int row, int col) const { return &pixels[(static_cast<std::size_t>(row) * width + col) * 3]; }
};

// Returns 255 - I for every pixel.
SectionImage invert(const SectionImage& image);

// Reads 8-bit grayscale PNG or binary PGM (P5), chosen by extension.
// Color PNGs are converted to luminance. The section id defaults to the file stem.
SectionImage read_image(const std::filesystem::path& path);
void write_image(const SectionImage& image, const std::filesystem::path& path);
void write_png(const RgbImage& image, const std::filesystem::path& path);

// PNG encoding into memory, used by the atomic writers.
std::vector<std::uint8_t> encode_png(const SectionImage& image);
std::vector<std::uint8_t> encode_png(const RgbImage& image);
std::vector<std::uint8_t> encode_pgm(const SectionImage& image);

}  // namespace cytoarch
