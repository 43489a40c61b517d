#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cytoarch/boosting.hpp"
#include "cytoarch/diffusion_map.hpp"
#include "cytoarch/error.hpp"
#include "cytoarch/explain.hpp"
#include "cytoarch/kmeans.hpp"
#include "cytoarch/regional.hpp"
#include "cytoarch/segmentation.hpp"
#include "cytoarch/synth.hpp"

namespace cytoarch {

inline constexpr const char* kVersion = "0.1.0";

// An artifact that an earlier command produces is absent.
class MissingArtifact : public Error {
 public:
  MissingArtifact(const std::string& what, std::string command)
      : Error(what), required_command_(std::move(command)) {}
  const std::string& required_command() const { return required_command_; }

 private:
  std::string required_command_;
};

struct PipelineConfig {
  std::filesystem::path output_dir = "cytoarch_out";
  std::filesystem::path images_dir;        // empty: <output>/images
  std::filesystem::path annotations_path;  // empty: <output>/annotations.json
  std::filesystem::path reference_model;   // empty: identity alignment
  double resolution_um = 0.5;

  std::vector<SynthConfig> synth_sections;  // empty: fixture_sections()

  SegmentParams segment;
  int patch_size = kDefaultPatchSize;
  KMeansParams kmeans;
  DiffusionParams dm;

  int tile_side = 224;
  int tile_stride = 224;
  int display_stride = 112;
  RegionParams region;

  BoostParams boost;
  std::uint64_t boost_seed = 0;
  std::vector<std::string> structures;     // empty: every annotated structure
  std::vector<std::string> test_sections;  // empty: last section when there are several

  std::string section;  // probmap/explain target; empty: every section
  std::string explain_feature = "rotation";
  double explain_lo = -65.0;
  double explain_hi = 11.3;
  MarginSplit margins;

  std::filesystem::path images() const;
  std::filesystem::path annotations() const;
  void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& config);
// Keys absent from `j` keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);

// Two 2048 x 2048 sections: an inner polygon ("SC") of cells oriented at
// -30 degrees with high concentration inside an isotropic surround.
std::vector<SynthConfig> fixture_sections(int size = 2048, std::uint64_t seed = 7);

struct CommandReport {
  std::string command;
  std::vector<std::filesystem::path> outputs;
  nlohmann::json summary = nlohmann::json::object();
};

CommandReport cmd_synth(const PipelineConfig& config);
CommandReport cmd_segment(const PipelineConfig& config);
CommandReport cmd_kmeans(const PipelineConfig& config);
CommandReport cmd_dmfit(const PipelineConfig& config);
CommandReport cmd_align(const PipelineConfig& config);
CommandReport cmd_embed(const PipelineConfig& config);
CommandReport cmd_regionize(const PipelineConfig& config);
CommandReport cmd_train(const PipelineConfig& config);
CommandReport cmd_eval(const PipelineConfig& config);
CommandReport cmd_probmap(const PipelineConfig& config);
CommandReport cmd_explain(const PipelineConfig& config);

const std::vector<std::string>& command_names();
CommandReport run_command(const std::string& name, const PipelineConfig& config);

// Tile features of one regionize run.
struct RegionMatrix {
  std::vector<std::string> sections;
  std::vector<std::string> structures;
  int side = 0;
  int stride = 0;
  std::vector<Tile> tiles;
  std::vector<int> section_index;
  FeatureMatrix features;  // tiles x 1982
  std::vector<std::size_t> cell_count;
  std::vector<int> low_support;
  std::vector<std::vector<int>> labels;  // per structure, per tile

  int structure_index(const std::string& name) const;
};

void save_region_matrix(const RegionMatrix& m, const std::filesystem::path& path);
RegionMatrix load_region_matrix(const std::filesystem::path& path);
std::string region_matrix_csv(const RegionMatrix& m, const std::vector<std::string>& feature_names);

// Filesystem-safe form of a structure name.
std::string artifact_name(const std::string& name);

}  // namespace cytoarch
