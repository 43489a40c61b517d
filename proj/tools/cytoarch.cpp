#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cytoarch/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitMissingArtifact = 3;

struct Overrides {
  std::string config;
  std::optional<std::string> out, images, annotations, reference_model;
  std::optional<double> resolution;
  std::optional<int> block_size, min_area, max_area, patch_size, k, min_cluster, n_evecs, m;
  std::optional<double> c, epsilon, alpha;
  std::optional<std::uint64_t> seed, boost_seed;
  std::optional<int> tile_side, stride, display_stride, max_depth, rounds;
  std::optional<std::size_t> min_cells;
  std::optional<double> eta, lambda, min_child_weight;
  std::vector<std::string> structures, test_sections;
  std::optional<std::string> section, feature;
  std::vector<double> range;
  std::optional<double> high_margin, low_margin;
  bool bright_cells = false;
};

template <class T, class U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = static_cast<U>(*v);
}

cytoarch::PipelineConfig build_config(const Overrides& o) {
  cytoarch::PipelineConfig c;
  if (!o.config.empty()) c = cytoarch::load_config(o.config);
  apply(o.out, c.output_dir);
  apply(o.images, c.images_dir);
  apply(o.annotations, c.annotations_path);
  apply(o.reference_model, c.reference_model);
  apply(o.resolution, c.resolution_um);
  apply(o.block_size, c.segment.block_size);
  apply(o.c, c.segment.c);
  apply(o.min_area, c.segment.min_area);
  apply(o.max_area, c.segment.max_area);
  if (o.bright_cells) c.segment.bright_cells = true;
  apply(o.patch_size, c.patch_size);
  apply(o.k, c.kmeans.k);
  apply(o.min_cluster, c.kmeans.min_cluster);
  apply(o.seed, c.kmeans.seed);
  apply(o.epsilon, c.dm.epsilon);
  apply(o.alpha, c.dm.alpha);
  apply(o.n_evecs, c.dm.n_evecs);
  apply(o.m, c.dm.m);
  apply(o.tile_side, c.tile_side);
  apply(o.stride, c.tile_stride);
  apply(o.display_stride, c.display_stride);
  apply(o.min_cells, c.region.min_cells);
  apply(o.max_depth, c.boost.max_depth);
  apply(o.eta, c.boost.eta);
  apply(o.rounds, c.boost.rounds);
  apply(o.lambda, c.boost.lambda);
  apply(o.min_child_weight, c.boost.min_child_weight);
  apply(o.boost_seed, c.boost_seed);
  if (!o.structures.empty()) c.structures = o.structures;
  if (!o.test_sections.empty()) c.test_sections = o.test_sections;
  apply(o.section, c.section);
  apply(o.feature, c.explain_feature);
  if (o.range.size() == 2) {
    c.explain_lo = o.range[0];
    c.explain_hi = o.range[1];
  }
  apply(o.high_margin, c.margins.high);
  apply(o.low_margin, c.margins.low);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell-feature pipeline for detecting brain structures in section images.\n"
               "Each command reads the artifacts of earlier ones from the output directory."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", cytoarch::kVersion);

  Overrides o;
  app.add_option("--config", o.config, "JSON config file; flags override its values");
  app.add_option("--out", o.out, "Output directory (default: cytoarch_out)");
  app.add_option("--images", o.images, "Directory of *.png / *.pgm sections (default: <out>/images)");
  app.add_option("--annotations", o.annotations, "Structure annotations JSON (default: <out>/annotations.json)");
  app.add_option("--reference-model", o.reference_model,
                 "Diffusion model of the reference brain for `align` (default: identity map)");
  app.add_option("--resolution", o.resolution, "Micrometers per pixel (default: 0.5)");

  auto* seg = app.add_option_group("Segmentation");
  seg->add_option("--block-size", o.block_size, "Adaptive-threshold Gaussian block size (default: 101)");
  seg->add_option("--c", o.c, "Adaptive-threshold offset C (default: -12)");
  seg->add_option("--min-area", o.min_area, "Smallest kept component in pixels (default: 20)");
  seg->add_option("--max-area", o.max_area, "Largest kept component in pixels (default: 5000)");
  seg->add_flag("--bright-cells", o.bright_cells, "Cells are brighter than background (fluorescent stains)");

  auto* shape = app.add_option_group("Cell shape embedding");
  shape->add_option("--patch-size", o.patch_size, "Cell patch side in pixels (default: 64)");
  shape->add_option("--k", o.k, "K-means clusters (default: 2000)");
  shape->add_option("--min-cluster", o.min_cluster, "Smallest kept cluster (default: 5)");
  shape->add_option("--seed", o.seed, "K-means seed (default: 0)");
  shape->add_option("--epsilon", o.epsilon, "Diffusion kernel bandwidth (default: 5000)");
  shape->add_option("--alpha", o.alpha, "Diffusion density normalization (default: 1.0)");
  shape->add_option("--n-evecs", o.n_evecs, "Eigenvectors computed (default: 100)");
  shape->add_option("--m", o.m, "Diffusion coordinates kept per cell (default: 10)");

  auto* tiles = app.add_option_group("Tiling");
  tiles->add_option("--tile-side", o.tile_side, "Tile side in pixels (default: 224)");
  tiles->add_option("--stride", o.stride, "Tile stride for training and evaluation (default: 224)");
  tiles->add_option("--display-stride", o.display_stride, "Tile stride for probability maps (default: 112)");
  tiles->add_option("--min-cells", o.min_cells, "Cells below which a tile is flagged low-support (default: 5)");

  auto* boost = app.add_option_group("Boosting");
  boost->add_option("--max-depth", o.max_depth, "Tree depth (default: 3)");
  boost->add_option("--eta", o.eta, "Shrinkage (default: 0.2)");
  boost->add_option("--rounds", o.rounds, "Boosting rounds (default: 100)");
  boost->add_option("--lambda", o.lambda, "L2 penalty on leaf weights (default: 1.0)");
  boost->add_option("--min-child-weight", o.min_child_weight, "Minimum hessian per child (default: 1.0)");
  boost->add_option("--boost-seed", o.boost_seed, "Recorded training seed (default: 0)");
  boost->add_option("--structure", o.structures, "Restrict to these structures (default: all annotated)");
  boost->add_option("--test-section", o.test_sections, "Held-out sections (default: the last section)");

  auto* ex = app.add_option_group("Explanation");
  ex->add_option("--section", o.section, "Section for probmap/explain (default: all)");
  ex->add_option("--feature", o.feature, "Cell feature to highlight (default: rotation)");
  ex->add_option("--range", o.range, "Highlighted value range LO HI (default: -65 11.3)")->expected(2);
  ex->add_option("--high-margin", o.high_margin, "Tiles with margin above this form the high group (default: 1)");
  ex->add_option("--low-margin", o.low_margin, "Tiles with margin below this form the low group (default: -1)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Render synthetic sections, ground truth and annotations"},
      {"segment", "Segment cells by adaptive thresholding and connected components"},
      {"kmeans", "Cluster rotation-normalized cell patches into representatives"},
      {"dmfit", "Fit the diffusion map on the representative patches"},
      {"align", "Fit the affine map onto a reference brain's feature space"},
      {"embed", "Compute the 20 features of every cell into the cell database"},
      {"regionize", "Fit the threshold grid and compute labeled tile features"},
      {"train", "Train one detector per structure"},
      {"eval", "Report ROC AUC of the detectors on held-out tiles"},
      {"probmap", "Render per-tile probability maps"},
      {"explain", "Highlight cells by feature range and compare feature CDFs"},
      {"config", "Print the effective configuration as JSON"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const cytoarch::PipelineConfig config = build_config(o);
    if (command == "config") {
      config.validate();
      std::printf("%s\n", cytoarch::config_to_json(config).dump(2).c_str());
      return kExitOk;
    }
    const cytoarch::CommandReport report = cytoarch::run_command(command, config);
    std::printf("%s: wrote %zu files\n%s\n", command.c_str(), report.outputs.size(), report.summary.dump(2).c_str());
    return kExitOk;
  } catch (const cytoarch::MissingArtifact& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingArtifact;
  } catch (const cytoarch::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const cytoarch::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: malformed artifact: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}
