#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cytoarch {

// Dense row-major design matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  void append_row(std::span<const double> values);
};

struct BoostParams {
  int max_depth = 3;
  double eta = 0.2;
  int rounds = 100;
  double lambda = 1.0;
  double min_child_weight = 1.0;

  void validate() const;
};

struct TreeNode {
  int feature = -1;        // -1 for leaves
  double threshold = 0.0;  // go left iff x[feature] < threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf weight -G / (H + lambda), before shrinkage
  double gain = 0.0;   // loss reduction of the split
  double cover = 0.0;  // hessian sum reaching the node
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
};

struct BoostedModel {
  BoostParams params;
  double base_score = 0.0;  // log-odds
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;
  std::vector<std::string> feature_names;  // optional manifest
  std::uint64_t seed = 0;

  // base_score + eta * sum of tree outputs.
  double margin(std::span<const double> x) const;
  double margin(std::span<const double> x, std::size_t first_trees) const;
};

double sigmoid(double z);

// Second-order gradient boosting on logistic loss with exact greedy splits.
// Tree outputs are added with shrinkage eta, starting from the log-odds of the
// positive rate. The seed is recorded but training has no random choices.
struct TrainingTrace {
  std::vector<double> loss;  // mean log-loss before the first round and after every round
};

BoostedModel train_detector(const FeatureMatrix& x, std::span<const int> y, const BoostParams& params,
                            std::uint64_t seed = 0, TrainingTrace* trace = nullptr);

// sigmoid(margin). Throws on a length mismatch.
double predict_score(const BoostedModel& model, std::span<const double> x);

double log_loss(std::span<const double> probabilities, std::span<const int> y);

struct FeatureImportance {
  int index = 0;
  std::string name;
  double gain = 0.0;
  double cover = 0.0;
  int splits = 0;
};

// Features used by at least one split, ordered by gain (descending) then index.
struct ImportanceReport {
  std::vector<FeatureImportance> features;
  double total_gain = 0.0;
};

ImportanceReport feature_importance(const BoostedModel& model);

nlohmann::json model_to_json(const BoostedModel& model);
BoostedModel model_from_json(const nlohmann::json& j);

}  // namespace cytoarch
