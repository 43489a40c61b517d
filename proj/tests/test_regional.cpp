#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cytoarch/error.hpp"
#include "cytoarch/regional.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cytoarch;

namespace {

CellFeatures random_features(std::mt19937& rng) {
  std::normal_distribution<double> n(0, 1);
  CellFeatures f;
  for (int j = 0; j < kCellFeatureCount; ++j) f[j] = 10.0 * j + n(rng) * (1 + j % 3);
  return f;
}

// Database with `count` single-run cells scattered across one section.
CellFeatureDB scattered_db(int count, std::uint64_t seed, int size = 1000, double resolution = 0.5) {
  std::mt19937 rng(static_cast<unsigned>(seed));
  std::uniform_real_distribution<double> pos(0, size - 4);
  CellFeatureDB db;
  db.add_section({"s", size, size, resolution});
  for (int i = 0; i < count; ++i) {
    const double r = pos(rng), c = pos(rng);
    const std::vector<PixelRun> runs{{int(r), int(c), 3}};
    db.add_cell("s", std::uint64_t(i), {r, c}, 3, random_features(rng), runs);
  }
  return db;
}

}  // namespace

TEST_SUITE("regional") {
  TEST_CASE("threshold grid quantiles") {
    SUBCASE("constant feature gives constant thresholds") {
      CellFeatureDB db;
      db.add_section({"s", 100, 100, 0});
      CellFeatures f{};
      f.fill(4.25);
      for (int i = 0; i < 150; ++i) db.add_cell("s", std::uint64_t(i), {1, 1}, 1, f, {});
      const ThresholdGrid g = fit_threshold_grid(db);
      for (int j = 0; j < kCellFeatureCount; ++j)
        for (int k = 0; k < kCdfPoints; ++k) CHECK(g.at(j, k) == 4.25);
    }
    SUBCASE("values 1..100") {
      CellFeatureDB db;
      db.add_section({"s", 100, 100, 0});
      for (int i = 1; i <= 100; ++i) {
        CellFeatures f{};
        f.fill(double(i));
        db.add_cell("s", std::uint64_t(i), {1, 1}, 1, f, {});
      }
      const ThresholdGrid g = fit_threshold_grid(db);
      CHECK(g.at(0, 49) == doctest::Approx(50.5));
      for (int k = 0; k < kCdfPoints; ++k) CHECK(g.at(3, k) == doctest::Approx(1 + 0.99 * (k + 1)));
    }
    SUBCASE("random data matches a sort-based oracle") {
      const CellFeatureDB db = scattered_db(537, 3);
      const ThresholdGrid g = fit_threshold_grid(db);
      for (int j = 0; j < kCellFeatureCount; ++j) {
        std::vector<double> v = db.column(j);
        std::sort(v.begin(), v.end());
        for (int k = 0; k < kCdfPoints; ++k) {
          const double h = (v.size() - 1) * (k + 1) / 100.0;
          const std::size_t lo = std::size_t(h);
          const double expected = lo + 1 < v.size() ? v[lo] + (h - lo) * (v[lo + 1] - v[lo]) : v[lo];
          CHECK(g.at(j, k) == doctest::Approx(expected).epsilon(1e-12));
          if (k) CHECK(g.at(j, k) >= g.at(j, k - 1));
        }
      }
    }
    SUBCASE("too few cells") { CHECK_THROWS_AS(fit_threshold_grid(scattered_db(99, 1)), InvalidArgument); }
    SUBCASE("json round trip and names") {
      const ThresholdGrid g = fit_threshold_grid(scattered_db(300, 4));
      const ThresholdGrid back = threshold_grid_from_json(threshold_grid_json(g));
      CHECK(back.thresholds == g.thresholds);
      const auto names = region_feature_names(g);
      REQUIRE(names.size() == kRegionFeatureLength);
      CHECK(names[3 * kCdfPoints].rfind("rotation–", 0) == 0);
      CHECK(names[kDensityIndex] == "density");
      CHECK(names[kAreaRatioIndex] == "area_ratio");
    }
  }

  TEST_CASE("region feature of an empty region is zero and low-support") {
    const CellFeatureDB db = scattered_db(200, 5);
    const ThresholdGrid g = fit_threshold_grid(db);
    CellFeatureDB empty;
    empty.add_section({"s", 1000, 1000, 0.5});
    const auto v = region_feature(empty, "s", Region::from_rect({0, 0, 224, 224}), g);
    REQUIRE(v.values.size() == kRegionFeatureLength);
    CHECK(v.cell_count == 0);
    CHECK(v.low_support);
    for (double x : v.values) CHECK(x == 0.0);
    CHECK_THROWS_AS(region_feature(db, "s", Region::from_rect({2000, 2000, 2100, 2100}), g), InvalidArgument);
    CHECK_THROWS(region_feature(db, "nope", Region::from_rect({0, 0, 10, 10}), g));
  }

  TEST_CASE("single cell gives a step CDF") {
    const ThresholdGrid g = fit_threshold_grid(scattered_db(400, 6));
    CellFeatureDB db;
    db.add_section({"s", 100, 100, 0.0});
    CellFeatures f;
    for (int j = 0; j < kCellFeatureCount; ++j) f[j] = g.at(j, 40);
    const std::vector<PixelRun> runs{{50, 48, 5}};
    db.add_cell("s", 1, {50, 50}, 5, f, runs);
    const auto v = region_feature(db, "s", Region::from_rect({0, 0, 100, 100}), g, {1});
    CHECK_FALSE(v.low_support);
    for (int j = 0; j < kCellFeatureCount; ++j)
      for (int k = 0; k < kCdfPoints; ++k) CHECK(v.cdf(j, k) == (k >= 40 ? 1.0 : 0.0));
    CHECK(v.density() == doctest::Approx(1.0 / 10000.0));
    CHECK(v.area_ratio() == doctest::Approx(5.0 / 10000.0));
  }

  TEST_CASE("region features match the nested-loop oracle") {
    const CellFeatureDB db = scattered_db(2000, 7);
    const ThresholdGrid g = fit_threshold_grid(db);
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(0, 1000);
    for (int t = 0; t < 40; ++t) {
      const double x = u(rng) * 0.7, y = u(rng) * 0.7;
      const Region reg = t % 2 ? Region::from_rect({x, y, x + 40 + u(rng) / 4, y + 40 + u(rng) / 4})
                               : Region::from_polygon({{x, y}, {x + 250, y + 30}, {x + 120, y + 260}});
      const auto v = region_feature(db, "s", reg, g);
      const auto oracle = oracle::nested_loop_cdf(db, "s", reg, g);
      for (int e = 0; e < kCdfEntries; ++e) CHECK(v.values[e] == oracle[e]);
      // Monotone in the threshold index and bounded by 1.
      for (int j = 0; j < kCellFeatureCount; ++j)
        for (int k = 1; k < kCdfPoints; ++k) CHECK(v.cdf(j, k) >= v.cdf(j, k - 1));
      for (int e = 0; e < kCdfEntries; ++e) CHECK((v.values[e] >= 0 && v.values[e] <= 1));
      long long pixels = 0, covered = 0;
      for (int r = 0; r < 1000; ++r)
        for (int c = 0; c < 1000; ++c) pixels += reg.contains({c + 0.5, r + 0.5});
      for (std::size_t i = 0; i < db.size(); ++i)
        for (auto run : db.runs(i))
          for (int c = run.col; c < run.col + run.length; ++c) covered += reg.contains({c + 0.5, run.row + 0.5});
      const double mm2 = pixels * 0.0005 * 0.0005;
      CHECK(v.density() == doctest::Approx(v.cell_count / mm2).epsilon(1e-12));
      CHECK(v.area_ratio() == doctest::Approx(double(covered) / pixels).epsilon(1e-12));
      CHECK(v.low_support == (v.cell_count < 5));
    }
  }

  TEST_CASE("distinct populations separate in the CDF features") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> low(-90, -30), high(-30, 90), pos(0, 200);
    CellFeatureDB db;
    db.add_section({"s", 448, 224, 0.5});
    for (int i = 0; i < 400; ++i) {
      CellFeatures f = random_features(rng);
      const bool left = i % 2 == 0;
      f[3] = left ? low(rng) : high(rng);
      db.add_cell("s", std::uint64_t(i), {pos(rng), pos(rng) + (left ? 0 : 224)}, 1, f, {});
    }
    const ThresholdGrid g = fit_threshold_grid(db);
    const auto a = region_feature(db, "s", Region::from_rect({0, 0, 224, 224}), g);
    const auto b = region_feature(db, "s", Region::from_rect({224, 0, 448, 224}), g);
    double gap = 0;
    for (int k = 0; k < kCdfPoints; ++k) gap = std::max(gap, std::abs(a.cdf(3, k) - b.cdf(3, k)));
    CHECK(gap > 0.2);
  }

  TEST_CASE("tiling") {
    for (int w : {224, 300, 1000, 2048})
      for (int h : {224, 500, 2048})
        for (int stride : {1, 50, 112, 224}) {
          if (stride == 1 && w * h > 300 * 500) continue;
          const auto tiles = tile_section("s", w, h, 224, stride);
          const std::size_t expected = std::size_t((h - 224) / stride + 1) * std::size_t((w - 224) / stride + 1);
          CHECK(tiles.size() == expected);
          for (const auto& t : tiles) {
            CHECK(t.row + t.side <= h);
            CHECK(t.col + t.side <= w);
          }
        }
    CHECK_THROWS_AS(tile_section("s", 100, 100, 224, 10), InvalidArgument);
    CHECK_THROWS_AS(tile_section("s", 300, 300, 224, 0), InvalidArgument);
  }

  TEST_CASE("tile labeling") {
    SUBCASE("exactly half is negative") {
      StructureAnnotation ann{"s", "X", {{{0, 0}, {112, 0}, {112, 224}, {0, 224}}}};
      const Tile t{"s", 0, 0, 224};
      CHECK(tile_pixels_inside(t, ann) == 112 * 224);
      CHECK_FALSE(label_tile(t, ann));
      StructureAnnotation more{"s", "X", {{{0, 0}, {113, 0}, {113, 224}, {0, 224}}}};
      CHECK(label_tile(t, more));
    }
    SUBCASE("labels agree with brute-force rasterization") {
      std::mt19937 rng(10);
      std::uniform_real_distribution<double> u(0, 600);
      for (int trial = 0; trial < 10; ++trial) {
        StructureAnnotation ann{"s", "X", {}};
        for (int p = 0; p < 2; ++p) {
          const double cx = u(rng), cy = u(rng), r = 80 + u(rng) / 4;
          Polygon poly;
          for (int v = 0; v < 7; ++v) {
            const double a = 2 * M_PI * v / 7;
            poly.push_back({cx + r * std::cos(a), cy + r * (0.6 + 0.4 * (v % 2)) * std::sin(a)});
          }
          ann.polygons.push_back(poly);
        }
        const auto tiles = tile_section("s", 600, 600, 100, 50);
        const auto fast = label_tiles(tiles, ann, 600, 600);
        for (std::size_t i = 0; i < tiles.size(); ++i) {
          long long inside = 0;
          for (int r = tiles[i].row; r < tiles[i].row + 100; ++r)
            for (int c = tiles[i].col; c < tiles[i].col + 100; ++c) {
              bool any = false;
              for (const auto& poly : ann.polygons) any = any || point_in_polygon(poly, {c + 0.5, r + 0.5});
              inside += any;
            }
          CHECK(tile_pixels_inside(tiles[i], ann) == inside);
          CHECK(label_tile(tiles[i], ann) == (2 * inside > 100 * 100));
          CHECK(fast[i] == label_tile(tiles[i], ann));
        }
      }
    }
  }

  TEST_CASE("annotations json") {
    const nlohmann::json j = nlohmann::json::parse(R"([
      {"section_id": "a", "structure": "SC", "polygon": [[0,0],[10,0],[10,10]]},
      {"section_id": "a", "structure": "SC", "polygon": [[20,20],[30,20],[30,30]]},
      {"section_id": "b", "structure": "SC", "polygon": [[0,0],[5,0],[5,5]]}
    ])");
    const auto anns = annotations_from_json(j);
    REQUIRE(anns.size() == 2);
    CHECK(anns[0].section_id == "a");
    CHECK(anns[0].polygons.size() == 2);
    CHECK(annotations_from_json(annotations_to_json(anns)).size() == 2);
    CHECK_THROWS_AS(annotations_from_json(nlohmann::json::object()), IoError);
  }
}
