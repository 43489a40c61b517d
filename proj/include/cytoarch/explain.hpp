#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cytoarch/cell_db.hpp"
#include "cytoarch/image.hpp"
#include "cytoarch/probability_map.hpp"

namespace cytoarch {

struct HighlightStyle {
  std::array<std::uint8_t, 3> tint{139, 0, 0};  // dark red
  double alpha = 0.6;
};

struct Highlight {
  RgbImage overlay;
  std::vector<std::size_t> tinted;  // db indices, ascending
};

// Tints the pixels of every cell of the section whose `feature` lies in
// [lo, hi]. Unknown feature names throw InvalidArgument.
Highlight explain_highlight(const SectionImage& image, const CellFeatureDB& db, const std::string& feature, double lo,
                            double hi, const HighlightStyle& style = {});

// Step-function empirical CDF: value[i] ascending and distinct, cdf[i] = share of samples <= value[i].
struct CdfSeries {
  std::string label;
  std::size_t samples = 0;
  std::vector<double> value;
  std::vector<double> cdf;
};

CdfSeries empirical_cdf(std::string label, std::vector<double> samples);

struct CdfComparison {
  std::string feature;
  CdfSeries high;
  CdfSeries low;
};

struct MarginSplit {
  double high = 1.0;  // tiles with margin > high
  double low = -1.0;  // tiles with margin < low
};

// CDFs of one cell feature over the cells of high-margin versus low-margin
// tiles of a probability map. Cells in several tiles of one group count once.
CdfComparison compare_cdfs(const CellFeatureDB& db, const ProbabilityMap& map, const std::string& feature,
                           const MarginSplit& split = {});

std::string cdf_comparison_csv(const CdfComparison& cmp);

}  // namespace cytoarch
