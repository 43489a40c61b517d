#include "cytoarch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include "cytoarch/error.hpp"

namespace cytoarch {

void SynthConfig::validate() const {
  if (width <= 0 || height <= 0) throw InvalidArgument("synth: image dimensions must be positive");
  if (noise < 0.0) throw InvalidArgument("synth: noise must be non-negative");
  for (const auto& p : populations) {
    if (p.count < 0) throw InvalidArgument("synth: population '" + p.name + "' has negative count");
    if (p.mean_size <= 0.0 || p.size_spread < 0.0) throw InvalidArgument("synth: bad size parameters");
    if (p.eccentricity < 0.0 || p.eccentricity >= 1.0) throw InvalidArgument("synth: eccentricity must be in [0, 1)");
    if (p.orientation_concentration < 0.0) throw InvalidArgument("synth: concentration must be >= 0");
    if (!p.region.empty()) {
      if (p.region.size() < 3 || polygon_area(p.region) <= 0.0) {
        throw InvalidArgument("synth: population '" + p.name + "' has a zero-area polygon");
      }
      if (!is_simple(p.region)) throw InvalidArgument("synth: population '" + p.name + "' polygon is self-intersecting");
    }
  }
}

namespace {

struct EllipseFrame {
  double cos_t, sin_t, a2, b2;
};

EllipseFrame frame_of(const DrawnCell& c) {
  const double t = c.angle_deg * std::numbers::pi / 180.0;
  return {std::cos(t), std::sin(t), c.semi_major * c.semi_major, c.semi_minor * c.semi_minor};
}

// (x, y) in pixel units relative to the center; y points down (row direction).
bool inside(const EllipseFrame& f, double dx, double drow) {
  const double y_up = -drow;
  const double u = dx * f.cos_t + y_up * f.sin_t;
  const double v = -dx * f.sin_t + y_up * f.cos_t;
  return u * u / f.a2 + v * v / f.b2 <= 1.0;
}

// Owner of a point: the last population whose polygon contains it.
int owner_of(const std::vector<Polygon>& regions, Point p) {
  for (int i = static_cast<int>(regions.size()) - 1; i >= 0; --i) {
    if (point_in_polygon(regions[i], p)) return i;
  }
  return -1;
}

class SpacingIndex {
 public:
  explicit SpacingIndex(double cell) : cell_(cell) {}

  bool clear(double row, double col, double radius, double gap, double max_radius) const {
    const double reach = radius + max_radius + gap;
    const long r0 = key(row - reach), r1 = key(row + reach);
    const long c0 = key(col - reach), c1 = key(col + reach);
    for (long r = r0; r <= r1; ++r) {
      for (long c = c0; c <= c1; ++c) {
        auto it = buckets_.find(pack(r, c));
        if (it == buckets_.end()) continue;
        for (const auto& e : it->second) {
          const double d = std::hypot(e.row - row, e.col - col);
          if (d < e.radius + radius + gap) return false;
        }
      }
    }
    return true;
  }

  void add(double row, double col, double radius) { buckets_[pack(key(row), key(col))].push_back({row, col, radius}); }

 private:
  struct Entry {
    double row, col, radius;
  };
  long key(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static long long pack(long r, long c) { return (static_cast<long long>(r) << 32) ^ static_cast<long long>(c & 0xffffffff); }

  double cell_;
  std::unordered_map<long long, std::vector<Entry>> buckets_;
};

constexpr int kMaxPlacementAttempts = 200;
constexpr int kSupersample = 4;

}  // namespace

SynthResult generate_synthetic_section(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthResult result;
  const Polygon full = rect_polygon({0.0, 0.0, static_cast<double>(config.width), static_cast<double>(config.height)});
  for (const auto& p : config.populations) result.regions.push_back(p.region.empty() ? full : p.region);

  double max_radius = 1.0;
  for (const auto& p : config.populations) max_radius = std::max(max_radius, p.mean_size + 4.0 * p.size_spread);
  SpacingIndex spacing(std::max(8.0, 2.0 * max_radius));

  for (std::size_t pi = 0; pi < config.populations.size(); ++pi) {
    const auto& pop = config.populations[pi];
    Rect box = bounding_rect(result.regions[pi]);
    box.x0 = std::max(box.x0, 0.0);
    box.y0 = std::max(box.y0, 0.0);
    box.x1 = std::min(box.x1, static_cast<double>(config.width));
    box.y1 = std::min(box.y1, static_cast<double>(config.height));
    for (int n = 0; n < pop.count; ++n) {
      DrawnCell cell;
      cell.population = static_cast<int>(pi);
      cell.semi_major = std::max(1.5, pop.mean_size + pop.size_spread * gauss(rng));
      cell.semi_minor = std::max(1.0, cell.semi_major * std::sqrt(1.0 - pop.eccentricity * pop.eccentricity));
      cell.angle_deg = sample_axial_angle(rng, pop.orientation_mean_deg, pop.orientation_concentration);
      cell.intensity = std::clamp(pop.intensity + pop.intensity_spread * gauss(rng), 0.0, 255.0);
      bool placed = false;
      for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
        const double x = box.x0 + (box.x1 - box.x0) * unif(rng);
        const double y = box.y0 + (box.y1 - box.y0) * unif(rng);
        if (owner_of(result.regions, {x, y}) != static_cast<int>(pi)) continue;
        // Keep the whole cell inside the image.
        if (x < cell.semi_major + 1 || y < cell.semi_major + 1 || x > config.width - cell.semi_major - 1 ||
            y > config.height - cell.semi_major - 1) {
          continue;
        }
        if (!spacing.clear(y, x, cell.semi_major, config.min_gap, max_radius)) continue;
        cell.center_col = x - 0.5;
        cell.center_row = y - 0.5;
        spacing.add(y, x, cell.semi_major);
        placed = true;
      }
      if (placed) result.cells.push_back(cell);
    }
  }

  std::vector<double> canvas(static_cast<std::size_t>(config.width) * config.height, config.background);
  for (const auto& cell : result.cells) {
    const EllipseFrame f = frame_of(cell);
    const int r0 = std::max(0, static_cast<int>(std::floor(cell.center_row - cell.semi_major - 1)));
    const int r1 = std::min(config.height - 1, static_cast<int>(std::ceil(cell.center_row + cell.semi_major + 1)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cell.center_col - cell.semi_major - 1)));
    const int c1 = std::min(config.width - 1, static_cast<int>(std::ceil(cell.center_col + cell.semi_major + 1)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        int hits = 0;
        for (int sr = 0; sr < kSupersample; ++sr) {
          for (int sc = 0; sc < kSupersample; ++sc) {
            const double dr = r - 0.5 + (sr + 0.5) / kSupersample - cell.center_row;
            const double dc = c - 0.5 + (sc + 0.5) / kSupersample - cell.center_col;
            if (inside(f, dc, dr)) ++hits;
          }
        }
        if (hits == 0) continue;
        const double cover = static_cast<double>(hits) / (kSupersample * kSupersample);
        double& px = canvas[static_cast<std::size_t>(r) * config.width + c];
        px = px * (1.0 - cover) + cell.intensity * cover;
      }
    }
  }

  result.image = SectionImage(config.width, config.height, 0, config.section_id);
  result.image.resolution_um = config.resolution_um;
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    const double v = canvas[i] + (config.noise > 0.0 ? config.noise * gauss(rng) : 0.0);
    result.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  if (config.bright_cells) {
    for (auto& p : result.image.pixels) p = static_cast<std::uint8_t>(255 - p);
  }
  return result;
}

BinaryMask ellipse_mask(const DrawnCell& cell, int width, int height) {
  BinaryMask mask(width, height);
  const EllipseFrame f = frame_of(cell);
  const int r0 = std::max(0, static_cast<int>(std::floor(cell.center_row - cell.semi_major - 1)));
  const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cell.center_row + cell.semi_major + 1)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cell.center_col - cell.semi_major - 1)));
  const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cell.center_col + cell.semi_major + 1)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (inside(f, c - cell.center_col, r - cell.center_row)) mask.set(r, c, true);
    }
  }
  return mask;
}

namespace {

nlohmann::json polygon_json(const Polygon& poly) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : poly) arr.push_back({p.x, p.y});
  return arr;
}

Polygon polygon_from_json(const nlohmann::json& j) {
  Polygon poly;
  for (const auto& v : j) poly.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  return poly;
}

}  // namespace

void to_json(nlohmann::json& j, const PopulationSpec& p) {
  j = {{"name", p.name},
       {"structure", p.structure},
       {"count", p.count},
       {"mean_size", p.mean_size},
       {"size_spread", p.size_spread},
       {"orientation_mean_deg", p.orientation_mean_deg},
       {"orientation_concentration", p.orientation_concentration},
       {"eccentricity", p.eccentricity},
       {"intensity", p.intensity},
       {"intensity_spread", p.intensity_spread},
       {"polygon", polygon_json(p.region)}};
}

void from_json(const nlohmann::json& j, PopulationSpec& p) {
  PopulationSpec d;
  p.name = j.value("name", d.name);
  p.structure = j.value("structure", d.structure);
  p.count = j.value("count", d.count);
  p.mean_size = j.value("mean_size", d.mean_size);
  p.size_spread = j.value("size_spread", d.size_spread);
  p.orientation_mean_deg = j.value("orientation_mean_deg", d.orientation_mean_deg);
  p.orientation_concentration = j.value("orientation_concentration", d.orientation_concentration);
  p.eccentricity = j.value("eccentricity", d.eccentricity);
  p.intensity = j.value("intensity", d.intensity);
  p.intensity_spread = j.value("intensity_spread", d.intensity_spread);
  p.region = j.contains("polygon") ? polygon_from_json(j.at("polygon")) : Polygon{};
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"section_id", c.section_id}, {"width", c.width},       {"height", c.height},
       {"background", c.background}, {"noise", c.noise},       {"resolution_um", c.resolution_um},
       {"min_gap", c.min_gap},       {"bright_cells", c.bright_cells}, {"seed", c.seed},
       {"populations", c.populations}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.section_id = j.value("section_id", d.section_id);
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.background = j.value("background", d.background);
  c.noise = j.value("noise", d.noise);
  c.resolution_um = j.value("resolution_um", d.resolution_um);
  c.min_gap = j.value("min_gap", d.min_gap);
  c.bright_cells = j.value("bright_cells", d.bright_cells);
  c.seed = j.value("seed", d.seed);
  c.populations = j.value("populations", std::vector<PopulationSpec>{});
}

nlohmann::json ground_truth_json(const SynthConfig& config, const SynthResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"population", c.population},
                     {"center_row", c.center_row},
                     {"center_col", c.center_col},
                     {"semi_major", c.semi_major},
                     {"semi_minor", c.semi_minor},
                     {"angle_deg", c.angle_deg},
                     {"intensity", c.intensity}});
  }
  nlohmann::json regions = nlohmann::json::array();
  for (std::size_t i = 0; i < result.regions.size(); ++i) {
    regions.push_back({{"population", config.populations[i].name},
                       {"structure", config.populations[i].structure},
                       {"polygon", polygon_json(result.regions[i])}});
  }
  return {{"section_id", config.section_id}, {"width", config.width}, {"height", config.height},
          {"cells", cells}, {"regions", regions}};
}

}  // namespace cytoarch
