#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cytoarch/boosting.hpp"
#include "cytoarch/cell_db.hpp"
#include "cytoarch/image.hpp"
#include "cytoarch/regional.hpp"

namespace cytoarch {

struct ProbabilityMap {
  std::string section_id;
  int width = 0;
  int height = 0;
  int side = 0;
  int stride = 0;
  std::vector<Tile> tiles;
  std::vector<double> probabilities;  // raw score per tile
  std::vector<double> margins;        // pre-sigmoid score per tile
  std::vector<bool> flagged;          // low-support tiles

  // Tile probability used for display: 0 for flagged tiles.
  double display_probability(std::size_t t) const { return flagged[t] ? 0.0 : probabilities[t]; }

  // 8-bit grayscale, linear in probability; each pixel is the mean display
  // probability over the tiles covering it (0 where no tile does).
  SectionImage render() const;
  nlohmann::json sidecar() const;
};

ProbabilityMap probability_map(const SectionInfo& section, const CellFeatureDB& db, const ThresholdGrid& grid,
                               const BoostedModel& model, int tile_side, int stride,
                               const RegionParams& params = {});

// Inverse of ProbabilityMap::sidecar.
ProbabilityMap probability_map_from_json(const nlohmann::json& j);

}  // namespace cytoarch
