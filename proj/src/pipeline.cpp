#include "cytoarch/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "cytoarch/alignment.hpp"
#include "cytoarch/binary_io.hpp"
#include "cytoarch/cell_db.hpp"
#include "cytoarch/fileio.hpp"
#include "cytoarch/image.hpp"
#include "cytoarch/metrics.hpp"
#include "cytoarch/patch.hpp"
#include "cytoarch/probability_map.hpp"

namespace cytoarch {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

fs::path PipelineConfig::images() const { return images_dir.empty() ? output_dir / "images" : images_dir; }

fs::path PipelineConfig::annotations() const {
  return annotations_path.empty() ? output_dir / "annotations.json" : annotations_path;
}

void PipelineConfig::validate() const {
  if (output_dir.empty()) throw InvalidArgument("output directory must be set");
  if (resolution_um < 0) throw InvalidArgument("resolution_um must be >= 0");
  if (segment.block_size < 3 || segment.block_size % 2 == 0) throw InvalidArgument("block_size must be odd and >= 3");
  if (segment.min_area < 1) throw InvalidArgument("min_area must be >= 1");
  if (segment.max_area < segment.min_area) throw InvalidArgument("max_area must be >= min_area");
  if (patch_size < kMinPatchSize) throw InvalidArgument("patch_size must be >= " + std::to_string(kMinPatchSize));
  if (kmeans.k < 1) throw InvalidArgument("k must be >= 1");
  if (kmeans.min_cluster < 1) throw InvalidArgument("min_cluster must be >= 1");
  if (kmeans.chunk_size < 1) throw InvalidArgument("k-means chunk_size must be >= 1");
  if (kmeans.refinement_passes < 0) throw InvalidArgument("k-means refinement_passes must be >= 0");
  if (!(dm.epsilon > 0)) throw InvalidArgument("epsilon must be > 0");
  if (dm.alpha < 0) throw InvalidArgument("alpha must be >= 0");
  if (dm.n_evecs < 1) throw InvalidArgument("n_evecs must be >= 1");
  if (dm.m < 1 || dm.m > dm.n_evecs) throw InvalidArgument("m must satisfy 1 <= m <= n_evecs");
  if (tile_side < 1) throw InvalidArgument("tile side must be >= 1");
  if (tile_stride < 1 || display_stride < 1) throw InvalidArgument("tile strides must be >= 1");
  boost.validate();
  if (boost.rounds < 1) throw InvalidArgument("rounds must be >= 1");
  if (!(explain_lo <= explain_hi)) throw InvalidArgument("explain range must satisfy lo <= hi");
  if (!(margins.low <= margins.high)) throw InvalidArgument("low margin must not exceed high margin");
  for (const auto& s : synth_sections) s.validate();
}

json config_to_json(const PipelineConfig& c) {
  return {
      {"paths",
       {{"output", c.output_dir.string()},
        {"images", c.images_dir.string()},
        {"annotations", c.annotations_path.string()},
        {"reference_model", c.reference_model.string()}}},
      {"resolution_um", c.resolution_um},
      {"synth", {{"sections", c.synth_sections}}},
      {"segment",
       {{"block_size", c.segment.block_size},
        {"c", c.segment.c},
        {"min_area", c.segment.min_area},
        {"max_area", c.segment.max_area},
        {"bright_cells", c.segment.bright_cells}}},
      {"patch_size", c.patch_size},
      {"kmeans",
       {{"k", c.kmeans.k},
        {"min_cluster", c.kmeans.min_cluster},
        {"seed", c.kmeans.seed},
        {"reservoir_size", c.kmeans.reservoir_size},
        {"chunk_size", c.kmeans.chunk_size},
        {"refinement_passes", c.kmeans.refinement_passes}}},
      {"dm", {{"epsilon", c.dm.epsilon}, {"alpha", c.dm.alpha}, {"n_evecs", c.dm.n_evecs}, {"m", c.dm.m}}},
      {"tiles",
       {{"side", c.tile_side},
        {"stride", c.tile_stride},
        {"display_stride", c.display_stride},
        {"min_cells", c.region.min_cells}}},
      {"boost",
       {{"max_depth", c.boost.max_depth},
        {"eta", c.boost.eta},
        {"rounds", c.boost.rounds},
        {"lambda", c.boost.lambda},
        {"min_child_weight", c.boost.min_child_weight},
        {"seed", c.boost_seed}}},
      {"structures", c.structures},
      {"test_sections", c.test_sections},
      {"explain",
       {{"section", c.section},
        {"feature", c.explain_feature},
        {"lo", c.explain_lo},
        {"hi", c.explain_hi},
        {"high_margin", c.margins.high},
        {"low_margin", c.margins.low}}},
  };
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidArgument("config section '" + where + "' must be an object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      throw InvalidArgument("unknown config key '" + where + (where.empty() ? "" : ".") + item.key() + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, fs::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

}  // namespace

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  try {
    check_keys(j, "", {"paths", "resolution_um", "synth", "segment", "patch_size", "kmeans", "dm", "tiles", "boost",
                       "structures", "test_sections", "explain"});
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      check_keys(p, "paths", {"output", "images", "annotations", "reference_model"});
      read_path(p, "output", c.output_dir);
      read_path(p, "images", c.images_dir);
      read_path(p, "annotations", c.annotations_path);
      read_path(p, "reference_model", c.reference_model);
    }
    read(j, "resolution_um", c.resolution_um);
    if (j.contains("synth")) {
      check_keys(j["synth"], "synth", {"sections"});
      read(j["synth"], "sections", c.synth_sections);
    }
    if (j.contains("segment")) {
      const auto& s = j["segment"];
      check_keys(s, "segment", {"block_size", "c", "min_area", "max_area", "bright_cells"});
      read(s, "block_size", c.segment.block_size);
      read(s, "c", c.segment.c);
      read(s, "min_area", c.segment.min_area);
      read(s, "max_area", c.segment.max_area);
      read(s, "bright_cells", c.segment.bright_cells);
    }
    read(j, "patch_size", c.patch_size);
    if (j.contains("kmeans")) {
      const auto& s = j["kmeans"];
      check_keys(s, "kmeans", {"k", "min_cluster", "seed", "reservoir_size", "chunk_size", "refinement_passes"});
      read(s, "k", c.kmeans.k);
      read(s, "min_cluster", c.kmeans.min_cluster);
      read(s, "seed", c.kmeans.seed);
      read(s, "reservoir_size", c.kmeans.reservoir_size);
      read(s, "chunk_size", c.kmeans.chunk_size);
      read(s, "refinement_passes", c.kmeans.refinement_passes);
    }
    if (j.contains("dm")) {
      const auto& s = j["dm"];
      check_keys(s, "dm", {"epsilon", "alpha", "n_evecs", "m"});
      read(s, "epsilon", c.dm.epsilon);
      read(s, "alpha", c.dm.alpha);
      read(s, "n_evecs", c.dm.n_evecs);
      read(s, "m", c.dm.m);
    }
    if (j.contains("tiles")) {
      const auto& s = j["tiles"];
      check_keys(s, "tiles", {"side", "stride", "display_stride", "min_cells"});
      read(s, "side", c.tile_side);
      read(s, "stride", c.tile_stride);
      read(s, "display_stride", c.display_stride);
      read(s, "min_cells", c.region.min_cells);
    }
    if (j.contains("boost")) {
      const auto& s = j["boost"];
      check_keys(s, "boost", {"max_depth", "eta", "rounds", "lambda", "min_child_weight", "seed"});
      read(s, "max_depth", c.boost.max_depth);
      read(s, "eta", c.boost.eta);
      read(s, "rounds", c.boost.rounds);
      read(s, "lambda", c.boost.lambda);
      read(s, "min_child_weight", c.boost.min_child_weight);
      read(s, "seed", c.boost_seed);
    }
    read(j, "structures", c.structures);
    read(j, "test_sections", c.test_sections);
    if (j.contains("explain")) {
      const auto& s = j["explain"];
      check_keys(s, "explain", {"section", "feature", "lo", "hi", "high_margin", "low_margin"});
      read(s, "section", c.section);
      read(s, "feature", c.explain_feature);
      read(s, "lo", c.explain_lo);
      read(s, "hi", c.explain_hi);
      read(s, "high_margin", c.margins.high);
      read(s, "low_margin", c.margins.low);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidArgument("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::vector<SynthConfig> fixture_sections(int size, std::uint64_t seed) {
  const double s = size / 2048.0;
  // Irregular hexagon covering roughly a third of the section.
  const Polygon inner = {{560 * s, 420 * s},  {1380 * s, 380 * s}, {1660 * s, 900 * s},
                         {1500 * s, 1560 * s}, {820 * s, 1680 * s}, {430 * s, 1100 * s}};
  // Cells per pixel, shared by both populations so density carries no signal.
  const double density = 1.0 / 900.0;
  const double inner_area = polygon_area(inner);
  const double total = static_cast<double>(size) * size;
  std::vector<SynthConfig> out;
  for (int k = 0; k < 2; ++k) {
    SynthConfig c;
    c.section_id = k == 0 ? "fixture_a" : "fixture_b";
    c.width = c.height = size;
    c.seed = seed + static_cast<std::uint64_t>(k);
    PopulationSpec surround;
    surround.name = "surround";
    surround.count = static_cast<int>(std::lround(density * (total - inner_area)));
    surround.orientation_concentration = 0.0;
    PopulationSpec sc = surround;
    sc.name = "inner";
    sc.structure = "SC";
    sc.count = static_cast<int>(std::lround(density * inner_area));
    sc.orientation_mean_deg = -30.0;
    sc.orientation_concentration = 8.0;
    sc.region = inner;
    c.populations = {surround, sc};
    out.push_back(c);
  }
  return out;
}

std::string artifact_name(const std::string& name) {
  std::string out;
  for (char ch : name) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '-' ||
                    ch == '_' || ch == '.';
    out.push_back(ok ? ch : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

// ---------------------------------------------------------------- region matrix

int RegionMatrix::structure_index(const std::string& name) const {
  auto it = std::find(structures.begin(), structures.end(), name);
  return it == structures.end() ? -1 : static_cast<int>(it - structures.begin());
}

void save_region_matrix(const RegionMatrix& m, const fs::path& path) {
  BinaryArchive ar;
  ar.header = {{"kind", "region_matrix"},
               {"version", 1},
               {"sections", m.sections},
               {"structures", m.structures},
               {"tile_side", m.side},
               {"stride", m.stride},
               {"feature_length", kRegionFeatureLength}};
  std::vector<std::int32_t> rows, cols, sec, low;
  std::vector<std::uint64_t> counts;
  for (std::size_t t = 0; t < m.tiles.size(); ++t) {
    rows.push_back(m.tiles[t].row);
    cols.push_back(m.tiles[t].col);
    sec.push_back(m.section_index[t]);
    low.push_back(m.low_support[t]);
    counts.push_back(m.cell_count[t]);
  }
  ar.put_i32("tile_row", rows);
  ar.put_i32("tile_col", cols);
  ar.put_i32("section_index", sec);
  ar.put_i32("low_support", low);
  ar.put_u64("cell_count", counts);
  ar.put_f64("features", m.features.data);
  for (std::size_t s = 0; s < m.structures.size(); ++s) {
    std::vector<std::int32_t> lab(m.labels[s].begin(), m.labels[s].end());
    ar.put_i32("label/" + m.structures[s], lab);
  }
  ar.save(path);
}

RegionMatrix load_region_matrix(const fs::path& path) {
  const BinaryArchive ar = BinaryArchive::load(path);
  if (ar.header.value("kind", "") != "region_matrix") throw IoError(path.string() + " is not a region matrix");
  RegionMatrix m;
  m.sections = ar.header.at("sections").get<std::vector<std::string>>();
  m.structures = ar.header.at("structures").get<std::vector<std::string>>();
  m.side = ar.header.at("tile_side").get<int>();
  m.stride = ar.header.at("stride").get<int>();
  const auto rows = ar.get_i32("tile_row");
  const auto cols = ar.get_i32("tile_col");
  const auto sec = ar.get_i32("section_index");
  const auto low = ar.get_i32("low_support");
  const auto counts = ar.get_u64("cell_count");
  const std::size_t n = rows.size();
  if (cols.size() != n || sec.size() != n || low.size() != n || counts.size() != n) {
    throw IoError("region matrix blocks disagree in length");
  }
  m.features.cols = kRegionFeatureLength;
  m.features.rows = n;
  m.features.data = ar.get_f64("features");
  if (m.features.data.size() != n * kRegionFeatureLength) throw IoError("region matrix has a malformed feature block");
  for (std::size_t t = 0; t < n; ++t) {
    if (sec[t] < 0 || static_cast<std::size_t>(sec[t]) >= m.sections.size()) throw IoError("bad section index");
    m.tiles.push_back({m.sections[sec[t]], rows[t], cols[t], m.side});
    m.section_index.push_back(sec[t]);
    m.low_support.push_back(low[t]);
    m.cell_count.push_back(counts[t]);
  }
  for (const auto& s : m.structures) {
    const auto lab = ar.get_i32("label/" + s);
    if (lab.size() != n) throw IoError("label block for " + s + " has the wrong length");
    m.labels.emplace_back(lab.begin(), lab.end());
  }
  return m;
}

std::string region_matrix_csv(const RegionMatrix& m, const std::vector<std::string>& names) {
  std::string out = "section_id,tile_row,tile_col,cell_count,low_support";
  for (const auto& s : m.structures) out += ",label:" + s;
  for (const auto& n : names) out += "," + n;
  out += "\n";
  char buf[64];
  for (std::size_t t = 0; t < m.tiles.size(); ++t) {
    out += m.tiles[t].section_id + "," + std::to_string(m.tiles[t].row) + "," + std::to_string(m.tiles[t].col) + "," +
           std::to_string(m.cell_count[t]) + "," + std::to_string(m.low_support[t]);
    for (const auto& lab : m.labels) out += "," + std::to_string(lab[t]);
    for (double v : m.features.row(t)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------- stage plumbing

namespace {

std::string display_path(const PipelineConfig& config, const fs::path& p) {
  const fs::path rel = p.lexically_relative(config.output_dir);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

void require(const fs::path& path, const std::string& what, const std::string& command) {
  if (!fs::exists(path)) {
    throw MissingArtifact("missing " + what + " (" + path.string() + "); run `cytoarch " + command + "` first",
                          command);
  }
}

// Records inputs and outputs of one command and writes its run manifest.
class Stage {
 public:
  Stage(const PipelineConfig& config, std::string name, json params)
      : config_(config), params_(std::move(params)) {
    report_.command = std::move(name);
  }

  void input(const fs::path& path) { inputs_[display_path(config_, path)] = sha256_file(path); }

  void output(const fs::path& path, std::string_view text) {
    write_atomic(path, text);
    record(path, sha256_hex(text));
  }
  void output(const fs::path& path, std::span<const std::uint8_t> bytes) {
    write_atomic(path, bytes);
    record(path, sha256_hex(bytes));
  }
  void output_json(const fs::path& path, const json& j) { output(path, j.dump(2) + "\n"); }
  // For files written by library savers.
  void written(const fs::path& path) { record(path, sha256_file(path)); }

  json& summary() { return report_.summary; }

  CommandReport finish(const std::string& manifest_name = {}) {
    const std::string params_text = params_.dump();
    json manifest = {{"command", report_.command},
                     {"version", kVersion},
                     {"params", params_},
                     {"params_hash", sha256_hex(params_text)},
                     {"inputs", inputs_},
                     {"outputs", outputs_},
                     {"summary", report_.summary}};
    const fs::path path =
        config_.output_dir / "manifests" / ((manifest_name.empty() ? report_.command : manifest_name) + ".json");
    write_atomic(path, manifest.dump(2) + "\n");
    report_.outputs.push_back(path);
    return report_;
  }

 private:
  void record(const fs::path& path, std::string hash) {
    outputs_[display_path(config_, path)] = std::move(hash);
    report_.outputs.push_back(path);
  }

  const PipelineConfig& config_;
  json params_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  CommandReport report_;
};

struct ArtifactPaths {
  fs::path out;
  explicit ArtifactPaths(const PipelineConfig& c) : out(c.output_dir) {}
  fs::path segments(const std::string& id) const { return out / "segments" / (id + ".ndjson"); }
  fs::path representatives() const { return out / "kmeans" / "representatives.bin"; }
  fs::path diffusion() const { return out / "model" / "diffusion.bin"; }
  fs::path affine() const { return out / "model" / "affine.bin"; }
  fs::path cells() const { return out / "features" / "cells.db"; }
  fs::path grid() const { return out / "regional" / "grid.json"; }
  fs::path tiles() const { return out / "regional" / "tiles.bin"; }
  fs::path model(const std::string& s) const { return out / "models" / (artifact_name(s) + ".json"); }
  fs::path probmap(const std::string& s, const std::string& section) const {
    return out / "probmap" / artifact_name(s) / (section + ".json");
  }
};

std::vector<fs::path> list_images(const PipelineConfig& config) {
  const fs::path dir = config.images();
  const std::string expected = "expected *.png or *.pgm section images in " + dir.string() +
                               " (set paths.images or run `cytoarch synth`)";
  if (!fs::is_directory(dir)) throw MissingArtifact("image directory not found; " + expected, "synth");
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".pgm") images.push_back(entry.path());
  }
  if (images.empty()) throw MissingArtifact("no section images found; " + expected, "synth");
  std::sort(images.begin(), images.end());
  for (std::size_t i = 1; i < images.size(); ++i) {
    if (images[i].stem() == images[i - 1].stem()) {
      throw InvalidArgument("two images share the section id '" + images[i].stem().string() + "'");
    }
  }
  return images;
}

SectionImage load_section(const PipelineConfig& config, const fs::path& path) {
  SectionImage img = read_image(path);
  img.resolution_um = config.resolution_um;
  return img;
}

struct LoadedSection {
  SectionImage image;
  std::vector<CellSegment> segments;
};

std::vector<LoadedSection> load_segmented(const PipelineConfig& config, Stage& stage) {
  const ArtifactPaths paths(config);
  std::vector<LoadedSection> out;
  for (const auto& p : list_images(config)) {
    LoadedSection s;
    s.image = load_section(config, p);
    const fs::path seg = paths.segments(s.image.section_id);
    require(seg, "segments for section " + s.image.section_id, "segment");
    stage.input(p);
    stage.input(seg);
    s.segments = segments_from_ndjson(read_text(seg));
    out.push_back(std::move(s));
  }
  return out;
}

// Rotation-normalized patches of every segment of every section, in order.
class PatchStream : public VectorStream {
 public:
  PatchStream(const std::vector<LoadedSection>& sections, int patch_size)
      : sections_(sections), size_(patch_size) {}
  std::size_t dim() const override { return static_cast<std::size_t>(size_) * size_; }
  void rewind() override { section_ = cell_ = 0; }
  std::size_t read(std::size_t max_rows, VectorSet& out) override {
    out.dim = dim();
    out.data.clear();
    std::size_t n = 0;
    while (n < max_rows && section_ < sections_.size()) {
      const auto& s = sections_[section_];
      if (cell_ >= s.segments.size()) {
        ++section_;
        cell_ = 0;
        continue;
      }
      const CellPatch patch = extract_patch(s.image, s.segments[cell_++], size_);
      out.push_back(patch.pixels);
      ++n;
    }
    return n;
  }

 private:
  const std::vector<LoadedSection>& sections_;
  int size_;
  std::size_t section_ = 0;
  std::size_t cell_ = 0;
};

std::vector<StructureAnnotation> load_annotations(const PipelineConfig& config, Stage& stage) {
  const fs::path path = config.annotations();
  require(path, "structure annotations", "synth");
  stage.input(path);
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("annotations " + path.string() + " are not valid JSON: " + e.what());
  }
  return annotations_from_json(j);
}

std::vector<std::string> selected_structures(const PipelineConfig& config, const std::vector<std::string>& available) {
  if (config.structures.empty()) return available;
  for (const auto& s : config.structures) {
    if (std::find(available.begin(), available.end(), s) == available.end()) {
      throw InvalidArgument("structure '" + s + "' has no annotations");
    }
  }
  return config.structures;
}

std::set<std::string> held_out_sections(const PipelineConfig& config, const std::vector<std::string>& sections) {
  std::set<std::string> test(config.test_sections.begin(), config.test_sections.end());
  for (const auto& s : test) {
    if (std::find(sections.begin(), sections.end(), s) == sections.end()) {
      throw InvalidArgument("test section '" + s + "' is not in the region matrix");
    }
  }
  if (test.empty() && sections.size() >= 2) test.insert(sections.back());
  return test;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RgbImage render_roc(const std::vector<RocPoint>& curve) {
  constexpr int kSize = 256, kMargin = 16, kPlot = kSize - 2 * kMargin;
  RgbImage img(kSize, kSize);
  std::fill(img.pixels.begin(), img.pixels.end(), 255);
  auto plot = [&](double x, double y, std::uint8_t v) {
    const int c = kMargin + static_cast<int>(std::lround(x * kPlot));
    const int r = kMargin + kPlot - static_cast<int>(std::lround(y * kPlot));
    if (r >= 0 && r < kSize && c >= 0 && c < kSize) std::fill_n(img.at(r, c), 3, v);
  };
  auto line = [&](double x0, double y0, double x1, double y1, std::uint8_t v) {
    const int steps = 2 * kPlot;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      plot(x0 + t * (x1 - x0), y0 + t * (y1 - y0), v);
    }
  };
  line(0, 0, 1, 0, 0);
  line(0, 0, 0, 1, 0);
  line(0, 0, 1, 1, 190);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    line(curve[i - 1].fpr, curve[i - 1].tpr, curve[i].fpr, curve[i].tpr, 0);
  }
  return img;
}

}  // namespace

// ---------------------------------------------------------------- commands

CommandReport cmd_synth(const PipelineConfig& config) {
  const auto sections = config.synth_sections.empty() ? fixture_sections() : config.synth_sections;
  Stage stage(config, "synth", {{"sections", sections}, {"images", display_path(config, config.images())}});
  std::vector<StructureAnnotation> annotations;
  std::set<std::string> ids;
  for (const auto& sc : sections) {
    sc.validate();
    if (!ids.insert(sc.section_id).second) throw InvalidArgument("duplicate section id '" + sc.section_id + "'");
    const SynthResult result = generate_synthetic_section(sc);
    stage.output(config.images() / (sc.section_id + ".png"), encode_png(result.image));
    stage.output_json(config.output_dir / "ground_truth" / (sc.section_id + ".json"), ground_truth_json(sc, result));
    for (std::size_t p = 0; p < sc.populations.size(); ++p) {
      if (sc.populations[p].structure.empty()) continue;
      annotations.push_back({sc.section_id, sc.populations[p].structure, {result.regions[p]}});
    }
    stage.summary()[sc.section_id] = {{"cells", result.cells.size()}};
  }
  stage.output_json(config.annotations(), annotations_to_json(annotations));
  return stage.finish();
}

CommandReport cmd_segment(const PipelineConfig& config) {
  const auto images = list_images(config);
  SegmentParams params = config.segment;
  Stage stage(config, "segment",
              {{"segment", config_to_json(config)["segment"]}, {"resolution_um", config.resolution_um}});
  for (const auto& p : images) {
    stage.input(p);
    const SectionImage img = load_section(config, p);
    const auto segments = segment_section(img, params);
    stage.output(ArtifactPaths(config).segments(img.section_id), segments_to_ndjson(segments));
    stage.summary()[img.section_id] = {{"cells", segments.size()}};
  }
  return stage.finish();
}

CommandReport cmd_kmeans(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  Stage stage(config, "kmeans", {{"kmeans", config_to_json(config)["kmeans"]}, {"patch_size", config.patch_size}});
  const auto sections = load_segmented(config, stage);
  PatchStream stream(sections, config.patch_size);
  const KMeansResult result = streaming_kmeans(stream, config.kmeans);
  if (result.representatives.size() == 0) {
    throw InvalidArgument("no cluster reached min_cluster members; lower kmeans.min_cluster or add sections");
  }
  BinaryArchive ar;
  ar.header = {{"kind", "representatives"},
               {"version", 1},
               {"patch_size", config.patch_size},
               {"count", result.representatives.size()},
               {"stream_size", result.stream_size},
               {"seeded_centers", result.seeded_centers},
               {"final_cost", result.final_cost},
               {"cost_history", result.cost_history}};
  const std::vector<double> patches(result.representatives.data.begin(), result.representatives.data.end());
  std::vector<std::uint64_t> counts(result.counts.begin(), result.counts.end());
  ar.put_f64("patches", patches);
  ar.put_u64("counts", counts);
  stage.output(paths.representatives(), ar.serialize());
  stage.summary() = {{"patches", result.stream_size},
                     {"representatives", result.representatives.size()},
                     {"final_cost", result.final_cost}};
  return stage.finish();
}

CommandReport cmd_dmfit(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.representatives(), "representative patches", "kmeans");
  Stage stage(config, "dmfit", {{"dm", config_to_json(config)["dm"]}});
  stage.input(paths.representatives());
  const BinaryArchive ar = BinaryArchive::load(paths.representatives());
  const int size = ar.header.at("patch_size").get<int>();
  VectorSet reps(static_cast<std::size_t>(size) * size);
  for (double v : ar.get_f64("patches")) reps.data.push_back(static_cast<float>(v));
  const DiffusionModel model = fit_diffusion_map(reps, size, config.dm);
  save_diffusion_model(model, paths.diffusion());
  stage.written(paths.diffusion());
  stage.summary() = {{"representatives", reps.size()}, {"eigenvalues", model.eigenvalues}};
  return stage.finish();
}

CommandReport cmd_align(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.diffusion(), "diffusion model", "dmfit");
  Stage stage(config, "align", {{"reference_model", config.reference_model.generic_string()}});
  stage.input(paths.diffusion());
  const DiffusionModel model = load_diffusion_model(paths.diffusion());
  AffineMap map = AffineMap::identity(model.m);
  std::string id = "identity";
  if (!config.reference_model.empty()) {
    if (!fs::exists(config.reference_model)) {
      throw InvalidArgument("reference model not found: " + config.reference_model.string());
    }
    stage.input(config.reference_model);
    const DiffusionModel reference = load_diffusion_model(config.reference_model);
    map = align_brain_features(model, reference);
    id = sha256_file(config.reference_model).substr(0, 16);
  }
  save_affine_map(map, paths.affine(), id);
  stage.written(paths.affine());
  stage.summary() = {{"map_id", id}};
  return stage.finish();
}

CommandReport cmd_embed(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.diffusion(), "diffusion model", "dmfit");
  require(paths.affine(), "affine map", "align");
  Stage stage(config, "embed", json::object());
  const auto sections = load_segmented(config, stage);
  stage.input(paths.diffusion());
  stage.input(paths.affine());
  const DiffusionModel model = load_diffusion_model(paths.diffusion());
  const AffineMap map = load_affine_map(paths.affine());
  std::vector<SectionCells> cells;
  for (const auto& s : sections) cells.push_back({&s.image, &s.segments});
  DbBuildStats stats;
  CellFeatureDB db = build_cell_db(cells, model, map, &stats);
  db.alignment_map_id = BinaryArchive::load(paths.affine()).header.value("id", "");
  db.save(paths.cells());
  stage.written(paths.cells());
  stage.output(config.output_dir / "features" / "cells.csv", db.to_csv());
  stage.summary() = {{"cells", stats.cells}, {"skipped_isolated", stats.skipped_isolated}};
  return stage.finish();
}

CommandReport cmd_regionize(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.cells(), "cell feature database", "embed");
  Stage stage(config, "regionize", {{"tiles", config_to_json(config)["tiles"]}});
  stage.input(paths.cells());
  const CellFeatureDB db = CellFeatureDB::load(paths.cells());
  const auto annotations = load_annotations(config, stage);

  const ThresholdGrid grid = fit_threshold_grid(db);
  stage.output_json(paths.grid(), threshold_grid_json(grid));

  RegionMatrix m;
  m.side = config.tile_side;
  m.stride = config.tile_stride;
  m.features.cols = kRegionFeatureLength;
  std::set<std::string> structures;
  for (const auto& a : annotations) structures.insert(a.structure);
  m.structures.assign(structures.begin(), structures.end());
  m.labels.resize(m.structures.size());
  for (const auto& info : db.sections()) {
    const int si = static_cast<int>(m.sections.size());
    m.sections.push_back(info.section_id);
    const auto tiles = tile_section(info.section_id, info.width, info.height, config.tile_side, config.tile_stride);
    for (std::size_t s = 0; s < m.structures.size(); ++s) {
      std::vector<bool> lab(tiles.size(), false);
      for (const auto& a : annotations) {
        if (a.section_id != info.section_id || a.structure != m.structures[s]) continue;
        lab = label_tiles(tiles, a, info.width, info.height);
      }
      m.labels[s].insert(m.labels[s].end(), lab.begin(), lab.end());
    }
    for (const auto& tile : tiles) {
      const RegionFeatureVector v = region_feature(db, info.section_id, tile.region(), grid, config.region);
      m.tiles.push_back(tile);
      m.section_index.push_back(si);
      m.features.append_row(v.values);
      m.cell_count.push_back(v.cell_count);
      m.low_support.push_back(v.low_support ? 1 : 0);
    }
  }
  save_region_matrix(m, paths.tiles());
  stage.written(paths.tiles());
  stage.output(config.output_dir / "regional" / "tiles.csv", region_matrix_csv(m, region_feature_names(grid)));
  json per = json::object();
  for (std::size_t s = 0; s < m.structures.size(); ++s) {
    per[m.structures[s]] = std::count(m.labels[s].begin(), m.labels[s].end(), 1);
  }
  stage.summary() = {{"tiles", m.tiles.size()},
                     {"low_support", std::count(m.low_support.begin(), m.low_support.end(), 1)},
                     {"positive_tiles", per}};
  return stage.finish();
}

CommandReport cmd_train(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.tiles(), "region feature matrix", "regionize");
  require(paths.grid(), "threshold grid", "regionize");
  Stage stage(config, "train",
              {{"boost", config_to_json(config)["boost"]},
               {"structures", config.structures},
               {"test_sections", config.test_sections}});
  stage.input(paths.tiles());
  stage.input(paths.grid());
  const RegionMatrix m = load_region_matrix(paths.tiles());
  const ThresholdGrid grid = threshold_grid_from_json(json::parse(read_text(paths.grid())));
  const auto names = region_feature_names(grid);
  const auto test = held_out_sections(config, m.sections);

  for (const auto& structure : selected_structures(config, m.structures)) {
    const int s = m.structure_index(structure);
    FeatureMatrix x;
    x.cols = kRegionFeatureLength;
    std::vector<int> y;
    for (std::size_t t = 0; t < m.tiles.size(); ++t) {
      if (m.low_support[t] || test.count(m.sections[m.section_index[t]])) continue;
      x.append_row(m.features.row(t));
      y.push_back(m.labels[s][t]);
    }
    TrainingTrace trace;
    BoostedModel model;
    try {
      model = train_detector(x, y, config.boost, config.boost_seed, &trace);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("cannot train '" + structure + "': " + e.what());
    }
    model.feature_names = names;
    stage.output_json(paths.model(structure), model_to_json(model));

    std::string loss = "round,log_loss\n";
    for (std::size_t r = 0; r < trace.loss.size(); ++r) loss += std::to_string(r) + "," + csv_number(trace.loss[r]) + "\n";
    stage.output(config.output_dir / "models" / (artifact_name(structure) + "_training.csv"), loss);

    const ImportanceReport imp = feature_importance(model);
    std::string csv = "rank,index,name,gain,cover,splits\n";
    for (std::size_t r = 0; r < imp.features.size(); ++r) {
      const auto& f = imp.features[r];
      csv += std::to_string(r + 1) + "," + std::to_string(f.index) + "," + f.name + "," + csv_number(f.gain) + "," +
             csv_number(f.cover) + "," + std::to_string(f.splits) + "\n";
    }
    stage.output(config.output_dir / "models" / (artifact_name(structure) + "_importance.csv"), csv);
    stage.summary()[structure] = {{"samples", y.size()},
                                  {"positives", std::count(y.begin(), y.end(), 1)},
                                  {"final_log_loss", trace.loss.back()},
                                  {"top_feature", imp.features.empty() ? "" : imp.features.front().name}};
  }
  return stage.finish();
}

CommandReport cmd_eval(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.tiles(), "region feature matrix", "regionize");
  Stage stage(config, "eval", {{"structures", config.structures}, {"test_sections", config.test_sections}});
  stage.input(paths.tiles());
  const RegionMatrix m = load_region_matrix(paths.tiles());
  const auto test = held_out_sections(config, m.sections);
  std::string report = "structure,tiles,positives,negatives,roc_auc\n";
  for (const auto& structure : selected_structures(config, m.structures)) {
    require(paths.model(structure), "detector for " + structure, "train");
    stage.input(paths.model(structure));
    const BoostedModel model = model_from_json(json::parse(read_text(paths.model(structure))));
    const int s = m.structure_index(structure);
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t t = 0; t < m.tiles.size(); ++t) {
      if (!test.empty() && !test.count(m.sections[m.section_index[t]])) continue;
      scores.push_back(predict_score(model, m.features.row(t)));
      labels.push_back(m.labels[s][t]);
    }
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    const auto neg = static_cast<long>(labels.size()) - pos;
    if (pos == 0 || neg == 0) {
      throw InvalidArgument("evaluation tiles for '" + structure + "' contain a single class");
    }
    const double auc = roc_auc(scores, labels);
    report += structure + "," + std::to_string(labels.size()) + "," + std::to_string(pos) + "," + std::to_string(neg) +
              "," + csv_number(auc) + "\n";
    const auto curve = roc_curve(scores, labels);
    std::string roc = "threshold,fpr,tpr\n";
    for (const auto& p : curve) roc += csv_number(p.threshold) + "," + csv_number(p.fpr) + "," + csv_number(p.tpr) + "\n";
    stage.output(config.output_dir / "eval" / ("roc_" + artifact_name(structure) + ".csv"), roc);
    stage.output(config.output_dir / "eval" / ("roc_" + artifact_name(structure) + ".png"),
                 encode_png(render_roc(curve)));
    stage.summary()[structure] = {{"roc_auc", auc}, {"held_out", !test.empty()}};
  }
  stage.output(config.output_dir / "eval" / "auc.csv", report);
  return stage.finish();
}

namespace {

std::vector<std::string> target_sections(const PipelineConfig& config, const CellFeatureDB& db) {
  if (!config.section.empty()) {
    if (!db.has_section(config.section)) throw InvalidArgument("unknown section '" + config.section + "'");
    return {config.section};
  }
  std::vector<std::string> out;
  for (const auto& s : db.sections()) out.push_back(s.section_id);
  return out;
}

std::vector<std::string> trained_structures(const PipelineConfig& config, const ArtifactPaths& paths) {
  if (!config.structures.empty()) return config.structures;
  std::vector<std::string> out;
  const fs::path dir = paths.out / "models";
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".json") continue;
      const json j = json::parse(read_text(e.path()), nullptr, false);
      if (j.is_discarded() || j.value("kind", "") != "boosted_model") continue;
      out.push_back(e.path().stem().string());
    }
  }
  if (out.empty()) throw MissingArtifact("no trained detectors in " + dir.string() + "; run `cytoarch train` first", "train");
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

CommandReport cmd_probmap(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.cells(), "cell feature database", "embed");
  require(paths.grid(), "threshold grid", "regionize");
  Stage stage(config, "probmap",
              {{"tile_side", config.tile_side},
               {"display_stride", config.display_stride},
               {"min_cells", config.region.min_cells},
               {"section", config.section},
               {"structures", config.structures}});
  stage.input(paths.cells());
  stage.input(paths.grid());
  const CellFeatureDB db = CellFeatureDB::load(paths.cells());
  const ThresholdGrid grid = threshold_grid_from_json(json::parse(read_text(paths.grid())));
  for (const auto& structure : trained_structures(config, paths)) {
    require(paths.model(structure), "detector for " + structure, "train");
    stage.input(paths.model(structure));
    const BoostedModel model = model_from_json(json::parse(read_text(paths.model(structure))));
    for (const auto& section : target_sections(config, db)) {
      const ProbabilityMap map = probability_map(db.section(section), db, grid, model, config.tile_side,
                                                 config.display_stride, config.region);
      const fs::path json_path = paths.probmap(structure, section);
      stage.output(fs::path(json_path).replace_extension(".png"), encode_png(map.render()));
      stage.output_json(json_path, map.sidecar());
      stage.summary()[structure][section] = {{"tiles", map.tiles.size()},
                                             {"flagged", std::count(map.flagged.begin(), map.flagged.end(), true)}};
    }
  }
  return stage.finish();
}

CommandReport cmd_explain(const PipelineConfig& config) {
  const ArtifactPaths paths(config);
  require(paths.cells(), "cell feature database", "embed");
  if (cell_feature_index(config.explain_feature) < 0) {
    throw InvalidArgument("unknown cell feature '" + config.explain_feature + "'");
  }
  Stage stage(config, "explain",
              {{"explain", config_to_json(config)["explain"]}, {"structures", config.structures}});
  stage.input(paths.cells());
  const CellFeatureDB db = CellFeatureDB::load(paths.cells());
  std::map<std::string, fs::path> images;
  for (const auto& p : list_images(config)) images[p.stem().string()] = p;
  const auto structures = trained_structures(config, paths);
  for (const auto& section : target_sections(config, db)) {
    auto it = images.find(section);
    if (it == images.end()) throw MissingArtifact("no image for section " + section, "synth");
    stage.input(it->second);
    const SectionImage image = load_section(config, it->second);
    const Highlight hl = explain_highlight(image, db, config.explain_feature, config.explain_lo, config.explain_hi);
    const fs::path dir = config.output_dir / "explain";
    stage.output(dir / (section + "_" + artifact_name(config.explain_feature) + "_overlay.png"),
                 encode_png(hl.overlay));
    stage.summary()[section] = {{"tinted_cells", hl.tinted.size()}};
    for (const auto& structure : structures) {
      const fs::path pm = paths.probmap(structure, section);
      require(pm, "probability map for " + structure + " on " + section, "probmap");
      stage.input(pm);
      const ProbabilityMap map = probability_map_from_json(json::parse(read_text(pm)));
      const CdfComparison cmp = compare_cdfs(db, map, config.explain_feature, config.margins);
      stage.output(dir / artifact_name(structure) / (section + "_" + artifact_name(config.explain_feature) + "_cdf.csv"),
                   cdf_comparison_csv(cmp));
      stage.summary()[section][structure] = {{"high_cells", cmp.high.samples}, {"low_cells", cmp.low.samples}};
    }
  }
  return stage.finish();
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth", "segment", "kmeans",   "dmfit", "align",  "embed",
                                                 "regionize", "train", "eval", "probmap", "explain"};
  return names;
}

CommandReport run_command(const std::string& name, const PipelineConfig& config) {
  config.validate();
  if (name == "synth") return cmd_synth(config);
  if (name == "segment") return cmd_segment(config);
  if (name == "kmeans") return cmd_kmeans(config);
  if (name == "dmfit") return cmd_dmfit(config);
  if (name == "align") return cmd_align(config);
  if (name == "embed") return cmd_embed(config);
  if (name == "regionize") return cmd_regionize(config);
  if (name == "train") return cmd_train(config);
  if (name == "eval") return cmd_eval(config);
  if (name == "probmap") return cmd_probmap(config);
  if (name == "explain") return cmd_explain(config);
  throw InvalidArgument("unknown command '" + name + "'");
}

}  // namespace cytoarch
