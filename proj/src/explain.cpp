#include "cytoarch/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "cytoarch/error.hpp"

namespace cytoarch {

namespace {

int feature_column(const std::string& name) {
  const int j = cell_feature_index(name);
  if (j < 0) throw InvalidArgument("unknown cell feature '" + name + "'");
  return j;
}

std::uint8_t blend(std::uint8_t base, std::uint8_t tint, double alpha) {
  return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * base + alpha * tint));
}

}  // namespace

Highlight explain_highlight(const SectionImage& image, const CellFeatureDB& db, const std::string& feature, double lo,
                            double hi, const HighlightStyle& style) {
  const int j = feature_column(feature);
  Highlight out;
  out.overlay = RgbImage(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    std::fill_n(&out.overlay.pixels[i * 3], 3, image.pixels[i]);
  }
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (db.cell_section(i) != image.section_id) continue;
    const double v = db.feature(i, j);
    if (!(v >= lo && v <= hi)) continue;
    out.tinted.push_back(i);
    for (const auto& run : db.runs(i)) {
      if (run.row < 0 || run.row >= image.height) continue;
      for (int c = std::max(run.col, 0); c < std::min(run.col + run.length, image.width); ++c) {
        std::uint8_t* px = out.overlay.at(run.row, c);
        for (int k = 0; k < 3; ++k) px[k] = blend(px[k], style.tint[k], style.alpha);
      }
    }
  }
  return out;
}

CdfSeries empirical_cdf(std::string label, std::vector<double> samples) {
  CdfSeries s;
  s.label = std::move(label);
  s.samples = samples.size();
  std::sort(samples.begin(), samples.end());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    s.value.push_back(samples[i]);
    s.cdf.push_back(static_cast<double>(i + 1) / static_cast<double>(samples.size()));
  }
  return s;
}

CdfComparison compare_cdfs(const CellFeatureDB& db, const ProbabilityMap& map, const std::string& feature,
                           const MarginSplit& split) {
  const int j = feature_column(feature);
  std::set<std::size_t> high, low;
  if (db.has_section(map.section_id)) {
    for (std::size_t t = 0; t < map.tiles.size(); ++t) {
      const double m = map.margins[t];
      std::set<std::size_t>* target = m > split.high ? &high : (m < split.low ? &low : nullptr);
      if (!target) continue;
      for (std::size_t i : db.query(map.section_id, map.tiles[t].region())) target->insert(i);
    }
  }
  auto values = [&](const std::set<std::size_t>& cells) {
    std::vector<double> v;
    for (std::size_t i : cells) v.push_back(db.feature(i, j));
    return v;
  };
  return {feature, empirical_cdf("high", values(high)), empirical_cdf("low", values(low))};
}

std::string cdf_comparison_csv(const CdfComparison& cmp) {
  std::string out = "series,feature,value,cdf\n";
  char buf[128];
  for (const CdfSeries* s : {&cmp.high, &cmp.low}) {
    for (std::size_t i = 0; i < s->value.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", s->value[i], s->cdf[i]);
      out += s->label + "," + cmp.feature + buf;
    }
  }
  return out;
}

}  // namespace cytoarch
