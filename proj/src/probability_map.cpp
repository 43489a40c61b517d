#include "cytoarch/probability_map.hpp"

#include <cmath>

#include "cytoarch/error.hpp"

namespace cytoarch {

ProbabilityMap probability_map(const SectionInfo& section, const CellFeatureDB& db, const ThresholdGrid& grid,
                               const BoostedModel& model, int tile_side, int stride, const RegionParams& params) {
  ProbabilityMap map;
  map.section_id = section.section_id;
  map.width = section.width;
  map.height = section.height;
  map.side = tile_side;
  map.stride = stride;
  map.tiles = tile_section(section.section_id, section.width, section.height, tile_side, stride);
  const bool known = db.has_section(section.section_id);
  for (const auto& tile : map.tiles) {
    RegionFeatureVector v;
    if (known) {
      v = region_feature(db, section.section_id, tile.region(), grid, params);
    } else {
      v.low_support = true;
    }
    const double m = model.margin(v.values);
    map.margins.push_back(m);
    map.probabilities.push_back(sigmoid(m));
    map.flagged.push_back(v.low_support);
  }
  return map;
}

SectionImage ProbabilityMap::render() const {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const double p = display_probability(t);
    const auto& tile = tiles[t];
    for (int r = tile.row; r < tile.row + tile.side; ++r) {
      for (int c = tile.col; c < tile.col + tile.side; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * width + c;
        sum[i] += p;
        count[i] += 1;
      }
    }
  }
  SectionImage out(width, height, 0, section_id);
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] > 0) out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * sum[i] / count[i]));
  }
  return out;
}

nlohmann::json ProbabilityMap::sidecar() const {
  nlohmann::json tiles_json = nlohmann::json::array();
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    tiles_json.push_back({{"row", tiles[t].row},
                          {"col", tiles[t].col},
                          {"probability", probabilities[t]},
                          {"margin", margins[t]},
                          {"flagged", static_cast<bool>(flagged[t])}});
  }
  return {{"section_id", section_id}, {"width", width}, {"height", height},
          {"tile_side", side},        {"stride", stride}, {"tiles", tiles_json}};
}

ProbabilityMap probability_map_from_json(const nlohmann::json& j) {
  ProbabilityMap map;
  map.section_id = j.at("section_id").get<std::string>();
  map.width = j.at("width").get<int>();
  map.height = j.at("height").get<int>();
  map.side = j.at("tile_side").get<int>();
  map.stride = j.at("stride").get<int>();
  for (const auto& t : j.at("tiles")) {
    Tile tile{map.section_id, t.at("row").get<int>(), t.at("col").get<int>(), map.side};
    if (tile.row < 0 || tile.col < 0 || tile.row + map.side > map.height || tile.col + map.side > map.width) {
      throw IoError("probability map tile outside the section");
    }
    map.tiles.push_back(tile);
    map.probabilities.push_back(t.at("probability").get<double>());
    map.margins.push_back(t.at("margin").get<double>());
    map.flagged.push_back(t.at("flagged").get<bool>());
  }
  return map;
}

}  // namespace cytoarch
