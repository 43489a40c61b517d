#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "cytoarch/error.hpp"
#include "cytoarch/geometry.hpp"
#include "cytoarch/patch.hpp"
#include "cytoarch/segmentation.hpp"
#include "cytoarch/synth.hpp"
#include "support.hpp"

using namespace cytoarch;

namespace {

// Direct 2-D evaluation of the thresholding rule.
BinaryMask brute_threshold(const SectionImage& img, int block, double c) {
  const double sigma = 0.3 * ((block - 1) * 0.5 - 1) + 0.8;
  const int h = block / 2;
  std::vector<double> g;
  double total = 0;
  for (int i = -h; i <= h; ++i) {
    g.push_back(std::exp(-(i * i) / (2 * sigma * sigma)));
    total += g.back();
  }
  for (double& v : g) v /= total;
  BinaryMask m(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int col = 0; col < img.width; ++col) {
      double mean = 0;
      for (int dr = -h; dr <= h; ++dr) {
        for (int dc = -h; dc <= h; ++dc) {
          const int rr = std::clamp(r + dr, 0, img.height - 1);
          const int cc = std::clamp(col + dc, 0, img.width - 1);
          mean += g[dr + h] * g[dc + h] * img.at(rr, cc);
        }
      }
      m.set(r, col, mean - img.at(r, col) > -c);
    }
  }
  return m;
}

std::set<std::set<std::pair<int, int>>> flood_fill_partition(const BinaryMask& m) {
  std::vector<int> seen(m.bits.size(), 0);
  std::set<std::set<std::pair<int, int>>> parts;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c) || seen[r * m.width + c]) continue;
      std::set<std::pair<int, int>> part;
      std::vector<std::pair<int, int>> stack{{r, c}};
      seen[r * m.width + c] = 1;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        part.insert({y, x});
        const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || nx < 0 || ny >= m.height || nx >= m.width) continue;
          if (!m.at(ny, nx) || seen[ny * m.width + nx]) continue;
          seen[ny * m.width + nx] = 1;
          stack.push_back({ny, nx});
        }
      }
      parts.insert(part);
    }
  }
  return parts;
}

// Angle in (-90, 90] maximizing the variance of the projection (y up), 1 degree steps.
double brute_orientation(const std::vector<PixelCoord>& px) {
  double mx = 0, my = 0;
  for (auto p : px) {
    mx += p.col;
    my -= p.row;
  }
  mx /= px.size();
  my /= px.size();
  double best = -1, best_angle = 0;
  for (int a = -89; a <= 90; ++a) {
    const double t = a * std::numbers::pi / 180;
    double var = 0;
    for (auto p : px) {
      const double u = (p.col - mx) * std::cos(t) + (-p.row - my) * std::sin(t);
      var += u * u;
    }
    if (var > best) {
      best = var;
      best_angle = a;
    }
  }
  return best_angle;
}

double axial_diff(double a, double b) {
  double d = std::fmod(a - b, 180.0);
  if (d > 90) d -= 180;
  if (d <= -90) d += 180;
  return std::abs(d);
}

SynthConfig small_config(int count, double concentration = 0.0, std::uint64_t seed = 3) {
  SynthConfig c;
  c.width = c.height = 256;
  c.seed = seed;
  PopulationSpec p;
  p.name = "cells";
  p.count = count;
  p.orientation_mean_deg = -30;
  p.orientation_concentration = concentration;
  c.populations = {p};
  return c;
}

}  // namespace

TEST_SUITE("imaging") {
  TEST_CASE("png and pgm round trip") {
    auto dir = testing::scratch_dir("imageio");
    SectionImage img(7, 5, 0, "x");
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
    for (const char* name : {"a.png", "b.pgm"}) {
      write_image(img, dir / name);
      const SectionImage back = read_image(dir / name);
      CHECK(back.width == 7);
      CHECK(back.height == 5);
      CHECK(back.pixels == img.pixels);
      CHECK(back.section_id == std::filesystem::path(name).stem().string());
    }
    CHECK_THROWS_AS(read_image(dir / "missing.png"), IoError);
  }

  TEST_CASE("invert maps I to 255 - I") {
    SectionImage img(3, 1, 0);
    img.pixels = {0, 100, 255};
    CHECK(invert(img).pixels == std::vector<std::uint8_t>{255, 155, 0});
  }

  TEST_CASE("gaussian kernel is normalized and symmetric") {
    for (int k : {3, 11, 101}) {
      const auto g = gaussian_kernel(k);
      REQUIRE(g.size() == static_cast<std::size_t>(k));
      double s = 0;
      for (double v : g) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      for (int i = 0; i < k; ++i) CHECK(g[i] == doctest::Approx(g[k - 1 - i]).epsilon(1e-15));
    }
    CHECK_THROWS_AS(gaussian_kernel(10), InvalidArgument);
    CHECK_THROWS_AS(gaussian_kernel(1), InvalidArgument);
  }

  TEST_CASE("constant image has no foreground") {
    SectionImage img(40, 30, 128);
    CHECK(adaptive_threshold(img, 101, -12).count() == 0);
    CHECK_THROWS_AS(adaptive_threshold(img, 100, -12), InvalidArgument);
  }

  TEST_CASE("dark square matches brute-force thresholding") {
    const SectionImage img = testing::paint(24, 24, testing::bar(9, 9, 5, 5), 0, 255);
    const BinaryMask fast = adaptive_threshold(img, 11, -12);
    const BinaryMask slow = brute_threshold(img, 11, -12);
    for (int r = 9; r < 14; ++r)
      for (int c = 9; c < 14; ++c) CHECK(fast.at(r, c));
    CHECK(fast.bits == slow.bits);
  }

  TEST_CASE("adaptive threshold agrees with brute force on noise") {
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> u(0, 255);
    SectionImage img(33, 21, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
    const auto fast = adaptive_threshold(img, 7, -12);
    const auto slow = brute_threshold(img, 7, -12);
    int disagree = 0;
    for (std::size_t i = 0; i < fast.bits.size(); ++i) disagree += fast.bits[i] != slow.bits[i];
    CHECK(disagree == 0);
  }

  TEST_CASE("bright cells are found after inversion") {
    const auto px = testing::disk(20, 20, 4);
    const SectionImage dark = testing::paint(40, 40, px, 40, 220);
    SegmentParams p;
    p.block_size = 21;
    const auto a = segment_section(dark, p);
    p.bright_cells = true;
    const auto b = segment_section(invert(dark), p);
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    CHECK(a[0].pixels == b[0].pixels);
  }

  TEST_CASE("connected components basics") {
    BinaryMask empty(10, 10);
    CHECK(connected_components(empty, 1, 100).empty());

    BinaryMask m(12, 8);
    for (auto p : testing::bar(1, 1, 3, 3)) m.set(p.row, p.col, true);
    for (auto p : testing::bar(4, 7, 3, 3)) m.set(p.row, p.col, true);
    const auto segs = connected_components(m, 1, 100, "s");
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].area == 9);
    CHECK(segs[1].area == 9);
    CHECK(segs[0].bbox.min_row == 1);
    CHECK(segs[1].bbox.min_row == 4);
    CHECK(segs[0].cell_id == 0);
    CHECK(segs[1].cell_id == 1);
    CHECK(connected_components(m, 10, 100).empty());
    CHECK(connected_components(m, 1, 8).empty());
  }

  TEST_CASE("diagonal neighbours are separate components") {
    BinaryMask m(4, 4);
    m.set(0, 0, true);
    m.set(1, 1, true);
    CHECK(connected_components(m, 1, 10).size() == 2);
  }

  TEST_CASE("labeling matches flood fill on random masks") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      BinaryMask m(32, 32);
      std::bernoulli_distribution b(0.3 + 0.02 * trial);
      for (auto& v : m.bits) v = b(rng);
      const auto segs = connected_components(m, 1, 1 << 20);
      std::set<std::set<std::pair<int, int>>> got;
      for (const auto& s : segs) {
        std::set<std::pair<int, int>> part;
        for (auto p : s.pixels) part.insert({p.row, p.col});
        got.insert(part);
        CHECK(s.area == static_cast<int>(s.pixels.size()));
      }
      CHECK(got == flood_fill_partition(m));
      for (std::size_t i = 1; i < segs.size(); ++i) {
        const auto& a = segs[i - 1].bbox;
        const auto& b = segs[i].bbox;
        CHECK(std::make_pair(a.min_row, a.min_col) <= std::make_pair(b.min_row, b.min_col));
      }
    }
  }

  TEST_CASE("segment statistics are tight") {
    const auto s = testing::segment_of({{2, 3}, {2, 4}, {3, 4}});
    CHECK(s.area == 3);
    CHECK(s.centroid.row == doctest::Approx(7.0 / 3));
    CHECK(s.centroid.col == doctest::Approx(11.0 / 3));
    CHECK(s.bbox == BBox{2, 3, 3, 4});
  }

  TEST_CASE("segments survive the ndjson round trip") {
    const SynthResult r = generate_synthetic_section(small_config(40));
    const auto segs = segment_section(r.image, {});
    REQUIRE(!segs.empty());
    const auto back = segments_from_ndjson(segments_to_ndjson(segs));
    REQUIRE(back.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(back[i].cell_id == segs[i].cell_id);
      CHECK(back[i].pixels == segs[i].pixels);
      CHECK(back[i].bbox == segs[i].bbox);
      CHECK(back[i].centroid.row == segs[i].centroid.row);
    }
    CHECK_THROWS(segments_from_ndjson("{not json}\n"));
  }

  TEST_CASE("segmentation is deterministic and each segment is self-consistent") {
    const SynthResult r = generate_synthetic_section(small_config(60));
    const auto a = segment_section(r.image, {});
    const auto b = segment_section(r.image, {});
    CHECK(segments_to_ndjson(a) == segments_to_ndjson(b));
    const BinaryMask mask = adaptive_threshold(r.image, 101, -12);
    for (const auto& s : a) {
      BinaryMask local(s.bbox.width(), s.bbox.height());
      for (auto p : s.pixels) local.set(p.row - s.bbox.min_row, p.col - s.bbox.min_col, true);
      for (int rr = s.bbox.min_row; rr <= s.bbox.max_row; ++rr)
        for (int cc = s.bbox.min_col; cc <= s.bbox.max_col; ++cc)
          if (mask.at(rr, cc) && !local.at(rr - s.bbox.min_row, cc - s.bbox.min_col)) {
            // Other components may intrude into the bbox; they must not touch this one.
            bool touches = false;
            for (auto p : s.pixels) touches |= std::abs(p.row - rr) + std::abs(p.col - cc) == 1;
            CHECK_FALSE(touches);
          }
      const auto again = connected_components(local, 1, 1 << 20);
      REQUIRE(again.size() == 1);
      CHECK(static_cast<int>(again[0].pixels.size()) == s.area);
    }
  }

  TEST_CASE("synthetic generator") {
    SUBCASE("empty config gives a noise image") {
      const SynthResult r = generate_synthetic_section(small_config(0));
      CHECK(r.cells.empty());
      CHECK(r.image.width == 256);
      double mean = 0;
      for (auto v : r.image.pixels) mean += v;
      CHECK(mean / r.image.pixels.size() == doctest::Approx(200).epsilon(0.01));
    }
    SUBCASE("same seed gives identical images") {
      const auto a = generate_synthetic_section(small_config(50));
      const auto b = generate_synthetic_section(small_config(50));
      CHECK(a.image.pixels == b.image.pixels);
      const auto c = generate_synthetic_section(small_config(50, 0.0, 4));
      CHECK(a.image.pixels != c.image.pixels);
    }
    SUBCASE("concentrated orientations stay near the mean") {
      const auto r = generate_synthetic_section(small_config(100, 30.0));
      REQUIRE(r.cells.size() == 100);
      int close = 0;
      for (const auto& c : r.cells) close += axial_diff(c.angle_deg, -30) <= 15;
      CHECK(close >= 95);
    }
    SUBCASE("invalid polygons are rejected") {
      auto c = small_config(5);
      c.populations[0].region = {{10, 10}, {20, 20}, {30, 30}};
      CHECK_THROWS_AS(c.validate(), InvalidArgument);
      CHECK_THROWS_AS(generate_synthetic_section(c), InvalidArgument);
      c.populations[0].region = {{0, 0}, {50, 50}, {50, 0}, {0, 50}};
      CHECK_THROWS_AS(c.validate(), InvalidArgument);
      c.populations[0].region = {{0, 0}, {50, 0}, {50, 50}};
      CHECK_NOTHROW(c.validate());
      c.populations[0].count = -1;
      CHECK_THROWS_AS(c.validate(), InvalidArgument);
    }
    SUBCASE("later polygons own their cells") {
      auto c = small_config(80);
      PopulationSpec inner = c.populations[0];
      inner.name = "inner";
      inner.count = 30;
      inner.region = {{64, 64}, {192, 64}, {192, 192}, {64, 192}};
      c.populations.push_back(inner);
      const auto r = generate_synthetic_section(c);
      for (const auto& cell : r.cells) {
        const bool inside = point_in_polygon(inner.region, {cell.center_col + 0.5, cell.center_row + 0.5});
        CHECK(inside == (cell.population == 1));
      }
    }
    SUBCASE("config json round trip") {
      auto c = small_config(7, 2.0);
      c.populations[0].region = {{0, 0}, {50, 0}, {50, 50}};
      nlohmann::json j = c;
      const SynthConfig back = j.get<SynthConfig>();
      CHECK(nlohmann::json(back) == j);
    }
  }

  TEST_CASE("default thresholding recovers synthetic ellipses") {
    SynthConfig c = small_config(0);
    c.width = c.height = 512;
    c.populations[0].count = 200;
    const SynthResult r = generate_synthetic_section(c);
    const auto segs = segment_section(r.image, {});
    std::map<std::pair<int, int>, int> owner;
    for (std::size_t i = 0; i < segs.size(); ++i)
      for (auto p : segs[i].pixels) owner[{p.row, p.col}] = static_cast<int>(i);
    int eligible = 0, matched = 0, touched = 0;
    for (const auto& cell : r.cells) {
      const BinaryMask m = ellipse_mask(cell, c.width, c.height);
      std::map<int, int> overlap;
      int area = 0;
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
          if (m.at(y, x)) {
            ++area;
            auto it = owner.find({y, x});
            if (it != owner.end()) ++overlap[it->second];
          }
      touched += !overlap.empty();
      if (area < 20) continue;
      ++eligible;
      double best = 0;
      for (auto [s, inter] : overlap) best = std::max(best, double(inter) / (area + segs[s].area - inter));
      matched += best >= 0.3;
    }
    CHECK(touched == static_cast<int>(r.cells.size()));
    REQUIRE(eligible > 150);
    CHECK(double(matched) / eligible >= 0.9);
  }

  TEST_CASE("orientation of simple shapes") {
    const auto one = principal_orientation(std::vector<PixelCoord>{{5, 5}});
    CHECK(one.confidence == 0);
    CHECK(one.angle_deg == 0);
    const auto h = principal_orientation(testing::bar(0, 0, 1, 9));
    CHECK(h.angle_deg == doctest::Approx(0).epsilon(1e-12));
    CHECK(h.confidence == doctest::Approx(1));
    const auto v = principal_orientation(testing::bar(0, 0, 9, 1));
    CHECK(v.angle_deg == doctest::Approx(90));
    const auto d = principal_orientation(testing::disk(20, 20, 6));
    CHECK(d.confidence < 1e-9);
    CHECK(d.angle_deg == 0);
    double prev = 0;
    for (int n : {3, 5, 9, 17, 33}) {
      const double conf = principal_orientation(testing::bar(0, 0, 2, n)).confidence;
      CHECK(conf > prev);
      prev = conf;
    }
    CHECK(prev > 0.99);
  }

  TEST_CASE("ellipse orientation is recovered") {
    for (double angle : {-30.0, -75.0, 10.0, 45.0, 80.0}) {
      const auto px = testing::ellipse(30, 30, 10, 4, angle);
      CHECK(axial_diff(principal_orientation(px).angle_deg, angle) <= 3.0);
      const SectionImage img = testing::paint(64, 64, px);
      const CellPatch p = extract_patch(img, testing::segment_of(px), 32);
      CHECK(axial_diff(p.rotation_angle, angle) <= 3.0);
    }
  }

  TEST_CASE("orientation matches exhaustive rotation search on random blobs") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> ang(-89, 90), len(5, 12), wid(1.5, 4);
    for (int trial = 0; trial < 25; ++trial) {
      auto px = testing::ellipse(30, 30, len(rng), wid(rng), ang(rng));
      std::bernoulli_distribution keep(0.85);
      std::vector<PixelCoord> blob;
      for (auto p : px)
        if (keep(rng)) blob.push_back(p);
      const Orientation o = principal_orientation(blob);
      if (o.confidence < 0.05) continue;
      CHECK(axial_diff(o.angle_deg, brute_orientation(blob)) <= 1.0);
    }
  }

  TEST_CASE("patch geometry") {
    SUBCASE("single pixel lands in the center") {
      const SectionImage img = testing::paint(20, 20, {{7, 9}});
      const CellPatch p = extract_patch(img, testing::segment_of({{7, 9}}), 16);
      CHECK(p.nonzero_count() == 1);
      CHECK(p.at(8, 8) == 60.0f);
      CHECK(p.rotation_confidence == 0);
    }
    SUBCASE("too small patches are rejected") {
      const SectionImage img = testing::paint(20, 20, {{7, 9}});
      CHECK_THROWS_AS(extract_patch(img, testing::segment_of({{7, 9}}), 7), InvalidArgument);
      CHECK_THROWS_AS(extract_patch(img, testing::segment_of({{25, 9}}), 16), InvalidArgument);
    }
    SUBCASE("axis-aligned bar is copied exactly") {
      const auto px = testing::bar(10, 5, 1, 9);
      const SectionImage img = testing::paint(30, 30, px);
      const CellPatch p = extract_patch(img, testing::segment_of(px), 16);
      CHECK(p.nonzero_count() == 9);
      for (int c = 4; c <= 12; ++c) CHECK(p.at(8, c) == 60.0f);
    }
    SUBCASE("rotated cell is horizontal and zero away from its support") {
      const auto px = testing::ellipse(32, 32, 11, 3, -30);
      const SectionImage img = testing::paint(64, 64, px);
      const auto seg = testing::segment_of(px);
      const CellPatch p = extract_patch(img, seg, 32);
      std::vector<PixelCoord> support;
      for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
          if (p.at(r, c) != 0) support.push_back({r, c});
      CHECK(std::abs(principal_orientation(support).angle_deg) <= 3.0);
      const double t = p.rotation_angle * std::numbers::pi / 180;
      for (auto s : support) {
        const double dx = s.col - 16, dy = -(s.row - 16);
        const double col = seg.centroid.col + dx * std::cos(t) - dy * std::sin(t);
        const double row = seg.centroid.row - (dx * std::sin(t) + dy * std::cos(t));
        double nearest = 1e9;
        for (auto q : px) nearest = std::min(nearest, std::hypot(q.row - row, q.col - col));
        CHECK(nearest < 1.5);
      }
    }
    SUBCASE("oversized cells are center-cropped") {
      const auto px = testing::bar(20, 10, 3, 100);
      const SectionImage img = testing::paint(130, 50, px);
      const CellPatch p = extract_patch(img, testing::segment_of(px), 16);
      CHECK(p.nonzero_count() == 3 * 16);
    }
    SUBCASE("normalizing twice leaves the angle near zero") {
      const auto px = testing::ellipse(32, 32, 9, 3.5, 55);
      const SectionImage img = testing::paint(64, 64, px);
      const CellPatch p = extract_patch(img, testing::segment_of(px), 32);
      CHECK(std::abs(normalize_rotation(p).rotation_angle) <= 1.0);
    }
  }
}
