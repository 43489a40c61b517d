#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cytoarch/geometry.hpp"
#include "cytoarch/image.hpp"

namespace cytoarch {

// One population of elliptical cells placed inside a polygon.
struct PopulationSpec {
  std::string name;
  // Structure name emitted as an annotation for this population's polygon;
  // empty means the polygon is not annotated.
  std::string structure;
  int count = 0;
  double mean_size = 7.0;    // semi-major axis, px
  double size_spread = 1.0;  // std of semi-major axis, px
  double orientation_mean_deg = 0.0;
  // von Mises concentration on the doubled (axial) angle; 0 = isotropic.
  double orientation_concentration = 0.0;
  double eccentricity = 0.9;
  double intensity = 80.0;
  double intensity_spread = 5.0;
  Polygon region;  // empty = whole image
};

struct SynthConfig {
  std::string section_id = "synth";
  int width = 512;
  int height = 512;
  double background = 200.0;
  double noise = 5.0;
  double resolution_um = 0.5;
  // Extra clearance between the bounding circles of neighbouring cells, px.
  double min_gap = 2.0;
  // When true the rendered image is inverted (bright cells, dark background).
  bool bright_cells = false;
  std::uint64_t seed = 1;
  std::vector<PopulationSpec> populations;

  void validate() const;
};

struct DrawnCell {
  int population = 0;
  double center_row = 0.0;
  double center_col = 0.0;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double angle_deg = 0.0;  // counter-clockwise from +x with y pointing up, in (-90, 90]
  double intensity = 0.0;
};

struct SynthResult {
  SectionImage image;
  std::vector<DrawnCell> cells;
  std::vector<Polygon> regions;  // one per population, resolved to the image frame
};

// Deterministic in config.seed. Cells that cannot be placed after a bounded
// number of attempts (crowded polygon) are skipped and absent from the ground truth.
SynthResult generate_synthetic_section(const SynthConfig& config);

// Axial von Mises sample in degrees, wrapped to (-90, 90].
template <class Rng>
double sample_axial_angle(Rng& rng, double mean_deg, double concentration);

// Pixel-exact mask of a drawn ellipse (pixel centers inside the ellipse).
BinaryMask ellipse_mask(const DrawnCell& cell, int width, int height);

void to_json(nlohmann::json& j, const PopulationSpec& p);
void from_json(const nlohmann::json& j, PopulationSpec& p);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
nlohmann::json ground_truth_json(const SynthConfig& config, const SynthResult& result);

}  // namespace cytoarch

#include "cytoarch/detail/von_mises.hpp"
