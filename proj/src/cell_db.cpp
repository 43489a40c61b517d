#include "cytoarch/cell_db.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cytoarch/binary_io.hpp"
#include "cytoarch/error.hpp"
#include "cytoarch/patch.hpp"

namespace cytoarch {

std::vector<PixelRun> to_runs(const std::vector<PixelCoord>& pixels) {
  std::vector<PixelRun> runs;
  for (std::size_t i = 0; i < pixels.size();) {
    std::size_t j = i + 1;
    while (j < pixels.size() && pixels[j].row == pixels[i].row && pixels[j].col == pixels[j - 1].col + 1) ++j;
    runs.push_back({pixels[i].row, pixels[i].col, static_cast<std::int32_t>(j - i)});
    i = j;
  }
  return runs;
}

void CellFeatureDB::add_section(const SectionInfo& info) {
  if (info.width <= 0 || info.height <= 0) throw InvalidArgument("section dimensions must be positive");
  if (section_index_.count(info.section_id)) throw InvalidArgument("duplicate section '" + info.section_id + "'");
  section_index_[info.section_id] = sections_.size();
  sections_.push_back(info);
  SpatialIndex idx;
  idx.rows = (info.height + kBucket - 1) / kBucket;
  idx.cols = (info.width + kBucket - 1) / kBucket;
  idx.buckets.resize(static_cast<std::size_t>(idx.rows) * idx.cols);
  idx.coverage.resize(static_cast<std::size_t>(info.height));
  index_.push_back(std::move(idx));
  ids_per_section_.emplace_back();
}

const SectionInfo& CellFeatureDB::section(const std::string& section_id) const {
  auto it = section_index_.find(section_id);
  if (it == section_index_.end()) throw InvalidArgument("unknown section '" + section_id + "'");
  return sections_[it->second];
}

void CellFeatureDB::add_cell(const std::string& section_id, std::uint64_t cell_id, Centroid centroid, int area,
                             const CellFeatures& features, std::span<const PixelRun> runs) {
  auto it = section_index_.find(section_id);
  if (it == section_index_.end()) throw InvalidArgument("unknown section '" + section_id + "'");
  const std::size_t s = it->second;
  if (!ids_per_section_[s].emplace(cell_id, cell_ids_.size()).second) {
    throw InvalidArgument("duplicate cell id " + std::to_string(cell_id) + " in section '" + section_id + "'");
  }
  const std::size_t i = cell_ids_.size();
  cell_ids_.push_back(cell_id);
  cell_section_.push_back(static_cast<std::int32_t>(s));
  centroid_row_.push_back(centroid.row);
  centroid_col_.push_back(centroid.col);
  area_.push_back(area);
  for (int j = 0; j < kCellFeatureCount; ++j) columns_[j].push_back(features[j]);
  runs_.insert(runs_.end(), runs.begin(), runs.end());
  run_offsets_.push_back(runs_.size());

  SpatialIndex& idx = index_[s];
  const Point p = centroid_point(i);
  const int br = std::clamp(static_cast<int>(std::floor(p.y / kBucket)), 0, idx.rows - 1);
  const int bc = std::clamp(static_cast<int>(std::floor(p.x / kBucket)), 0, idx.cols - 1);
  idx.buckets[static_cast<std::size_t>(br) * idx.cols + bc].push_back(i);
  for (const auto& r : runs) {
    if (r.row < 0 || r.row >= sections_[s].height) continue;
    auto& row = idx.coverage[static_cast<std::size_t>(r.row)];
    row.insert(std::upper_bound(row.begin(), row.end(), r, [](const PixelRun& a, const PixelRun& b) { return a.col < b.col; }),
               r);
  }
}

std::span<const PixelRun> CellFeatureDB::runs(std::size_t i) const {
  return {runs_.data() + run_offsets_[i], runs_.data() + run_offsets_[i + 1]};
}

std::vector<std::size_t> CellFeatureDB::query(const std::string& section_id, const Region& region) const {
  auto it = section_index_.find(section_id);
  if (it == section_index_.end()) return {};
  const SpatialIndex& idx = index_[it->second];
  const Rect b = region.bounds();
  const int r0 = std::clamp(static_cast<int>(std::floor(b.y0 / kBucket)), 0, idx.rows - 1);
  const int r1 = std::clamp(static_cast<int>(std::floor(b.y1 / kBucket)), 0, idx.rows - 1);
  const int c0 = std::clamp(static_cast<int>(std::floor(b.x0 / kBucket)), 0, idx.cols - 1);
  const int c1 = std::clamp(static_cast<int>(std::floor(b.x1 / kBucket)), 0, idx.cols - 1);
  std::vector<std::size_t> out;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      for (std::size_t i : idx.buckets[static_cast<std::size_t>(r) * idx.cols + c]) {
        if (region.contains(centroid_point(i))) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> CellFeatureDB::query_linear(const std::string& section_id, const Region& region) const {
  std::vector<std::size_t> out;
  auto it = section_index_.find(section_id);
  if (it == section_index_.end()) return out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (cell_section_[i] == static_cast<std::int32_t>(it->second) && region.contains(centroid_point(i))) out.push_back(i);
  }
  return out;
}

long long CellFeatureDB::covered_pixels(const std::string& section_id, const Region& region) const {
  auto it = section_index_.find(section_id);
  if (it == section_index_.end()) return 0;
  const SpatialIndex& idx = index_[it->second];
  const int height = sections_[it->second].height;
  const Rect b = region.bounds();
  const int row0 = std::max(0, static_cast<int>(std::ceil(b.y0 - 0.5)));
  const int row1 = std::min(height, static_cast<int>(std::ceil(b.y1 - 0.5)) + 1);
  long long count = 0;
  if (region.kind == Region::Kind::kRect) {
    const long long col0 = static_cast<long long>(std::ceil(b.x0 - 0.5));
    const long long col1 = static_cast<long long>(std::ceil(b.x1 - 0.5));
    const int rend = std::min(height, static_cast<int>(std::ceil(b.y1 - 0.5)));
    for (int r = row0; r < rend; ++r) {
      for (const auto& run : idx.coverage[static_cast<std::size_t>(r)]) {
        const long long lo = std::max<long long>(run.col, col0);
        const long long hi = std::min<long long>(run.col + run.length, col1);
        if (hi > lo) count += hi - lo;
      }
    }
    return count;
  }
  for (int r = row0; r < row1; ++r) {
    for (const auto& run : idx.coverage[static_cast<std::size_t>(r)]) {
      for (int c = run.col; c < run.col + run.length; ++c) {
        if (region.contains({c + 0.5, r + 0.5})) ++count;
      }
    }
  }
  return count;
}

void CellFeatureDB::save(const std::filesystem::path& path) const {
  BinaryArchive ar;
  nlohmann::json sections = nlohmann::json::array();
  for (const auto& s : sections_) {
    sections.push_back({{"id", s.section_id}, {"width", s.width}, {"height", s.height}, {"resolution_um", s.resolution_um}});
  }
  const auto& names = cell_feature_names();
  ar.header = {{"kind", "cell_feature_db"},
               {"version", 1},
               {"brain_id", brain_id},
               {"alignment_map_id", alignment_map_id},
               {"feature_names", std::vector<std::string>(names.begin(), names.end())},
               {"sections", sections},
               {"cells", size()}};
  ar.put_u64("cell_id", cell_ids_);
  ar.put_i32("section_index", cell_section_);
  ar.put_f64("centroid_row", centroid_row_);
  ar.put_f64("centroid_col", centroid_col_);
  ar.put_i32("area", area_);
  for (int j = 0; j < kCellFeatureCount; ++j) ar.put_f64("feature/" + names[j], columns_[j]);
  ar.put_u64("run_offsets", run_offsets_);
  std::vector<std::int32_t> flat;
  flat.reserve(runs_.size() * 3);
  for (const auto& r : runs_) flat.insert(flat.end(), {r.row, r.col, r.length});
  ar.put_i32("runs", flat);
  ar.save(path);
}

CellFeatureDB CellFeatureDB::load(const std::filesystem::path& path) {
  const BinaryArchive ar = BinaryArchive::load(path);
  if (ar.header.value("kind", "") != "cell_feature_db") throw IoError(path.string() + " is not a cell feature database");
  if (ar.header.value("version", 0) != 1) throw IoError(path.string() + ": unsupported database version");
  CellFeatureDB db;
  db.brain_id = ar.header.value("brain_id", "");
  db.alignment_map_id = ar.header.value("alignment_map_id", "");
  for (const auto& s : ar.header.at("sections")) {
    db.add_section({s.at("id").get<std::string>(), s.at("width").get<int>(), s.at("height").get<int>(),
                    s.at("resolution_um").get<double>()});
  }
  const auto& names = cell_feature_names();
  const auto ids = ar.get_u64("cell_id");
  const auto sec = ar.get_i32("section_index");
  const auto rows = ar.get_f64("centroid_row");
  const auto cols = ar.get_f64("centroid_col");
  const auto areas = ar.get_i32("area");
  std::array<std::vector<double>, kCellFeatureCount> columns;
  for (int j = 0; j < kCellFeatureCount; ++j) columns[j] = ar.get_f64("feature/" + names[j]);
  const auto offsets = ar.get_u64("run_offsets");
  const auto flat = ar.get_i32("runs");
  const std::size_t n = ids.size();
  if (sec.size() != n || rows.size() != n || cols.size() != n || areas.size() != n || offsets.size() != n + 1 ||
      flat.size() != offsets.back() * 3) {
    throw IoError(path.string() + ": inconsistent block sizes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (sec[i] < 0 || static_cast<std::size_t>(sec[i]) >= db.sections_.size()) throw IoError("bad section index");
    CellFeatures f;
    for (int j = 0; j < kCellFeatureCount; ++j) f[j] = columns[j][i];
    std::vector<PixelRun> runs;
    for (std::uint64_t k = offsets[i]; k < offsets[i + 1]; ++k) runs.push_back({flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]});
    db.add_cell(db.sections_[sec[i]].section_id, ids[i], {rows[i], cols[i]}, areas[i], f, runs);
  }
  return db;
}

std::string CellFeatureDB::to_csv() const {
  std::ostringstream out;
  out << "cell_id,section_id,centroid_row,centroid_col,area";
  for (const auto& name : cell_feature_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (std::size_t i = 0; i < size(); ++i) {
    out << cell_ids_[i] << ',' << cell_section(i) << ',' << num(centroid_row_[i]);
    out << ',' << num(centroid_col_[i]) << ',' << area_[i];
    for (int j = 0; j < kCellFeatureCount; ++j) out << ',' << num(columns_[j][i]);
    out << '\n';
  }
  return out.str();
}

CellFeatures compute_cell_features(const SectionImage& image, const CellSegment& segment, const DiffusionModel& model,
                                   const AffineMap& map) {
  const CellPatch patch = extract_patch(image, segment, model.patch_size);
  const ManualFeatures manual = manual_features(image, segment, patch);
  const Eigen::VectorXd dm = apply_affine(map, embed_patch(model, patch));
  CellFeatures f{};
  const auto m = manual.to_array();
  std::copy(m.begin(), m.end(), f.begin());
  for (int k = 0; k < kDmFeatureCount && k < dm.size(); ++k) f[kManualFeatureCount + k] = dm[k];
  return f;
}

CellFeatureDB build_cell_db(std::span<const SectionCells> sections, const DiffusionModel& model, const AffineMap& map,
                            DbBuildStats* stats) {
  if (model.m != kDmFeatureCount) {
    throw InvalidArgument("cell records hold exactly " + std::to_string(kDmFeatureCount) + " diffusion coordinates");
  }
  CellFeatureDB db;
  DbBuildStats local;
  for (const auto& s : sections) {
    db.add_section({s.image->section_id, s.image->width, s.image->height, s.image->resolution_um});
  }
  for (const auto& s : sections) {
    for (const auto& seg : *s.segments) {
      CellFeatures f;
      try {
        f = compute_cell_features(*s.image, seg, model, map);
      } catch (const NumericalError&) {
        ++local.skipped_isolated;
        continue;
      }
      db.add_cell(s.image->section_id, seg.cell_id, seg.centroid, seg.area, f, to_runs(seg.pixels));
      ++local.cells;
    }
  }
  if (stats) *stats = local;
  return db;
}

}  // namespace cytoarch
