#include "cytoarch/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <sstream>

#include "cytoarch/error.hpp"
#include "cytoarch/fileio.hpp"

namespace cytoarch {

namespace fs = std::filesystem;

SectionImage::SectionImage(int w, int h, std::uint8_t fill, std::string id)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill), section_id(std::move(id)) {
  if (w <= 0 || h <= 0) throw InvalidArgument("image dimensions must be positive");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

SectionImage invert(const SectionImage& image) {
  SectionImage out = image;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

namespace {

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

SectionImage read_png(const fs::path& path) {
  auto bytes = read_bytes(path);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw IoError(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  SectionImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError(path.string() + ": " + img.message);
  }
  return out;
}

// Skips whitespace and '#' comments in a PNM header.
std::size_t pnm_token(const std::vector<std::uint8_t>& b, std::size_t pos, int& value) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  auto first = reinterpret_cast<const char*>(b.data()) + pos;
  auto last = reinterpret_cast<const char*>(b.data()) + b.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc()) throw IoError("malformed PGM header");
  return pos + static_cast<std::size_t>(ptr - first);
}

SectionImage read_pgm(const fs::path& path) {
  auto b = read_bytes(path);
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw IoError(path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  std::size_t pos = pnm_token(b, 2, w);
  pos = pnm_token(b, pos, h);
  pos = pnm_token(b, pos, maxval);
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError(path.string() + ": unsupported PGM (need 8-bit)");
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (b.size() < pos + n) throw IoError(path.string() + ": truncated PGM");
  SectionImage out(w, h);
  std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(pos), n, out.pixels.begin());
  return out;
}

std::vector<std::uint8_t> encode(const std::uint8_t* data, int w, int h, png_uint_32 format, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  png_alloc_size_t size = 0;
  const png_int_32 stride = w * channels;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, data, stride, nullptr)) {
    throw IoError(std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, data, stride, nullptr)) {
    throw IoError(std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

SectionImage read_image(const fs::path& path) {
  const std::string ext = lower_ext(path);
  SectionImage out;
  if (ext == ".png") {
    out = read_png(path);
  } else if (ext == ".pgm") {
    out = read_pgm(path);
  } else {
    throw IoError("unsupported image format: " + path.string());
  }
  out.section_id = path.stem().string();
  return out;
}

std::vector<std::uint8_t> encode_png(const SectionImage& image) {
  return encode(image.pixels.data(), image.width, image.height, PNG_FORMAT_GRAY, 1);
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  return encode(image.pixels.data(), image.width, image.height, PNG_FORMAT_RGB, 3);
}

std::vector<std::uint8_t> encode_pgm(const SectionImage& image) {
  std::ostringstream header;
  header << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_image(const SectionImage& image, const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    write_atomic(path, encode_png(image));
  } else if (ext == ".pgm") {
    write_atomic(path, encode_pgm(image));
  } else {
    throw IoError("unsupported image format: " + path.string());
  }
}

void write_png(const RgbImage& image, const fs::path& path) { write_atomic(path, encode_png(image)); }

}  // namespace cytoarch
