#include "cytoarch/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cytoarch/error.hpp"

namespace cytoarch {

void FeatureMatrix::append_row(std::span<const double> values) {
  if (rows == 0 && cols == 0) cols = values.size();
  if (values.size() != cols) throw InvalidArgument("row length does not match matrix width");
  data.insert(data.end(), values.begin(), values.end());
  ++rows;
}

void BoostParams::validate() const {
  if (rounds < 0) throw InvalidArgument("rounds must be non-negative");
  if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("eta must be in (0, 1]");
  if (max_depth < 1) throw InvalidArgument("max_depth must be >= 1");
  if (lambda < 0.0 || min_child_weight < 0.0) throw InvalidArgument("lambda and min_child_weight must be >= 0");
}

double RegressionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (!nodes[i].is_leaf()) i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

int RegressionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

double BoostedModel::margin(std::span<const double> x) const { return margin(x, trees.size()); }

double BoostedModel::margin(std::span<const double> x, std::size_t first_trees) const {
  double sum = 0.0;
  for (std::size_t t = 0; t < first_trees && t < trees.size(); ++t) sum += trees[t].predict(x);
  return base_score + params.eta * sum;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_loss(std::span<const double> p, std::span<const int> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], 1e-15, 1.0 - 1e-15);
    s -= y[i] ? std::log(q) : std::log(1.0 - q);
  }
  return s / static_cast<double>(p.size());
}

namespace {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

double score(double g, double h, double lambda) { return g * g / (h + lambda); }

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, const std::vector<std::vector<std::uint32_t>>& sorted, const BoostParams& params)
      : x_(x), sorted_(sorted), params_(params) {}

  RegressionTree build(const std::vector<double>& grad, const std::vector<double>& hess) {
    const std::size_t n = x_.rows;
    RegressionTree tree;
    std::vector<int> node_of(n, 0);
    TreeNode root;
    root.cover = 0.0;
    double g0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g0 += grad[i];
      root.cover += hess[i];
    }
    tree.nodes.push_back(root);
    std::vector<double> node_g{g0};
    std::vector<int> frontier{0};

    for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
      const std::size_t total_nodes = tree.nodes.size();
      std::vector<SplitCandidate> best(total_nodes);
      std::vector<double> gl(total_nodes), hl(total_nodes), last(total_nodes);
      std::vector<char> started(total_nodes), active(total_nodes, 0);
      for (int v : frontier) active[v] = 1;

      for (std::size_t f = 0; f < x_.cols; ++f) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(started.begin(), started.end(), 0);
        for (std::uint32_t i : sorted_[f]) {
          const int v = node_of[i];
          if (!active[v]) continue;
          const double value = x_(i, f);
          if (started[v] && value > last[v]) {
            // Left = instances of v with x < value.
            const double g_total = node_g[v], h_total = tree.nodes[v].cover;
            const double gr = g_total - gl[v], hr = h_total - hl[v];
            if (hl[v] >= params_.min_child_weight && hr >= params_.min_child_weight) {
              const double gain = 0.5 * (score(gl[v], hl[v], params_.lambda) + score(gr, hr, params_.lambda) -
                                         score(g_total, h_total, params_.lambda));
              if (gain > best[v].gain) best[v] = {gain, static_cast<int>(f), value};
            }
          }
          started[v] = 1;
          last[v] = value;
          gl[v] += grad[i];
          hl[v] += hess[i];
        }
      }

      std::vector<int> next;
      for (int v : frontier) {
        if (best[v].feature < 0 || !(best[v].gain > kMinGain)) continue;
        TreeNode& node = tree.nodes[v];
        node.feature = best[v].feature;
        node.threshold = best[v].threshold;
        node.gain = best[v].gain;
        node.left = static_cast<int>(tree.nodes.size());
        node.right = node.left + 1;
        TreeNode child;
        child.depth = depth + 1;
        tree.nodes.push_back(child);
        tree.nodes.push_back(child);
        node_g.push_back(0.0);
        node_g.push_back(0.0);
        next.push_back(tree.nodes[v].left);
        next.push_back(tree.nodes[v].right);
      }
      if (next.empty()) break;
      for (std::size_t i = 0; i < n; ++i) {
        const TreeNode& node = tree.nodes[node_of[i]];
        if (node.is_leaf() || !active[node_of[i]]) continue;
        const int child = x_(i, node.feature) < node.threshold ? node.left : node.right;
        node_of[i] = child;
        node_g[child] += grad[i];
        tree.nodes[child].cover += hess[i];
      }
      frontier = std::move(next);
    }
    for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
      auto& node = tree.nodes[v];
      if (node.is_leaf()) node.value = -node_g[v] / (node.cover + params_.lambda);
    }
    return tree;
  }

 private:
  static constexpr double kMinGain = 1e-12;
  const FeatureMatrix& x_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const BoostParams& params_;
};

}  // namespace

BoostedModel train_detector(const FeatureMatrix& x, std::span<const int> y, const BoostParams& params,
                            std::uint64_t seed, TrainingTrace* trace) {
  params.validate();
  const std::size_t n = x.rows;
  if (n != y.size()) throw InvalidArgument("feature rows and labels differ in length");
  if (n < 2) throw InvalidArgument("training needs at least two samples");
  const auto positives = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](int v) { return v != 0; }));
  if (positives == 0 || positives == n) throw InvalidArgument("training labels contain a single class");

  BoostedModel model;
  model.params = params;
  model.n_features = x.cols;
  model.seed = seed;
  const double rate = static_cast<double>(positives) / static_cast<double>(n);
  model.base_score = std::log(rate / (1.0 - rate));

  std::vector<std::vector<std::uint32_t>> sorted(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto& idx = sorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }

  std::vector<double> margin(n, model.base_score), grad(n), hess(n);
  auto record = [&] {
    if (!trace) return;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = y[i] ? -margin[i] : margin[i];
      s += z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    trace->loss.push_back(s / static_cast<double>(n));
  };
  record();
  TreeBuilder builder(x, sorted, params);
  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - (y[i] ? 1.0 : 0.0);
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    RegressionTree tree = builder.build(grad, hess);
    for (std::size_t i = 0; i < n; ++i) margin[i] += params.eta * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
    record();
  }
  return model;
}

double predict_score(const BoostedModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw InvalidArgument("feature vector has length " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(model.n_features));
  }
  return sigmoid(model.margin(x));
}

ImportanceReport feature_importance(const BoostedModel& model) {
  std::vector<FeatureImportance> per(model.n_features);
  for (std::size_t f = 0; f < model.n_features; ++f) {
    per[f].index = static_cast<int>(f);
    per[f].name = f < model.feature_names.size() ? model.feature_names[f] : "f" + std::to_string(f);
  }
  ImportanceReport report;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      auto& fi = per[static_cast<std::size_t>(node.feature)];
      fi.gain += node.gain;
      fi.cover += node.cover;
      fi.splits += 1;
      report.total_gain += node.gain;
    }
  }
  for (auto& fi : per) {
    if (fi.splits > 0) report.features.push_back(std::move(fi));
  }
  std::stable_sort(report.features.begin(), report.features.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) { return a.gain > b.gain; });
  return report;
}

nlohmann::json model_to_json(const BoostedModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array(),
                   gain = nlohmann::json::array(), cover = nlohmann::json::array(), depth = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
      gain.push_back(n.gain);
      cover.push_back(n.cover);
      depth.push_back(n.depth);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                     {"value", value}, {"gain", gain}, {"cover", cover}, {"depth", depth}});
  }
  return {{"kind", "boosted_model"},
          {"version", 1},
          {"params",
           {{"max_depth", model.params.max_depth},
            {"eta", model.params.eta},
            {"rounds", model.params.rounds},
            {"lambda", model.params.lambda},
            {"min_child_weight", model.params.min_child_weight},
            {"objective", "binary:logistic"}}},
          {"seed", model.seed},
          {"base_score", model.base_score},
          {"n_features", model.n_features},
          {"feature_names", model.feature_names},
          {"trees", trees}};
}

BoostedModel model_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "boosted_model") throw IoError("not a boosted model file");
  if (j.value("version", 0) != 1) throw IoError("unsupported boosted model version");
  BoostedModel m;
  const auto& p = j.at("params");
  m.params.max_depth = p.at("max_depth").get<int>();
  m.params.eta = p.at("eta").get<double>();
  m.params.rounds = p.at("rounds").get<int>();
  m.params.lambda = p.at("lambda").get<double>();
  m.params.min_child_weight = p.at("min_child_weight").get<double>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.base_score = j.at("base_score").get<double>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.feature_names = j.value("feature_names", std::vector<std::string>{});
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    const std::size_t count = t.at("feature").size();
    for (std::size_t i = 0; i < count; ++i) {
      TreeNode n;
      n.feature = t.at("feature")[i].get<int>();
      n.threshold = t.at("threshold")[i].get<double>();
      n.left = t.at("left")[i].get<int>();
      n.right = t.at("right")[i].get<int>();
      n.value = t.at("value")[i].get<double>();
      n.gain = t.at("gain")[i].get<double>();
      n.cover = t.at("cover")[i].get<double>();
      n.depth = t.at("depth")[i].get<int>();
      if (!n.is_leaf() && (n.feature >= static_cast<int>(m.n_features) || n.left <= 0 || n.right <= 0 ||
                           n.left >= static_cast<int>(count) || n.right >= static_cast<int>(count))) {
        throw IoError("malformed tree node");
      }
      tree.nodes.push_back(n);
    }
    if (tree.nodes.empty()) throw IoError("empty tree in model file");
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace cytoarch
