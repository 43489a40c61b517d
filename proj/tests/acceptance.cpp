#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "cytoarch/alignment.hpp"
#include "cytoarch/boosting.hpp"
#include "cytoarch/diffusion_map.hpp"
#include "cytoarch/fileio.hpp"
#include "cytoarch/kmeans.hpp"
#include "cytoarch/metrics.hpp"
#include "cytoarch/patch.hpp"
#include "cytoarch/pipeline.hpp"
#include "cytoarch/regional.hpp"
#include "cytoarch/segmentation.hpp"
#include "cytoarch/synth.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cytoarch;

namespace {

// Tolerances.
constexpr double kExactFitError = 1e-9;
constexpr double kOracleCostSlack = 1e-6;
constexpr double kAlignmentSeconds = 1.0;
constexpr double kModalityReduction = 10.0;
constexpr double kSelfAlignment = 1e-6;
constexpr double kFixtureAuc = 0.90;
constexpr double kFixtureSeconds = 300.0;
constexpr double kEigenvalueBound = 1.0 + 1e-9;
constexpr double kNystromRelative = 1e-6;
constexpr double kManifoldSpearman = 0.95;
// Non-increasing loss up to summation rounding once leaves shrink to ~1e-8.
constexpr double kLossUlps = 1e-14;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome affine_exactness() {
  Outcome out;
  std::mt19937 rng(101);
  const int trials = 100, d = 10, n = 200;
  double max_error = 0, worst_gap = -1e300, fit_seconds = 0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::MatrixXd a = oracle::random_matrix(n, d, rng);
    const Eigen::MatrixXd m = oracle::random_matrix(d, d, rng);
    const Eigen::VectorXd mu = oracle::random_matrix(d, 1, rng);
    const Eigen::MatrixXd b = (a * m.transpose()).rowwise() + mu.transpose();
    const Eigen::MatrixXd noisy = b + oracle::random_matrix(n, d, rng, 0.1);
    const auto t0 = std::chrono::steady_clock::now();
    const AffineMap exact = fit_affine_alignment(a, b);
    const AffineMap fit = fit_affine_alignment(a, noisy);
    fit_seconds += seconds_since(t0);
    max_error = std::max({max_error, (exact.M - m).cwiseAbs().maxCoeff(), (exact.mu - mu).cwiseAbs().maxCoeff()});
    const double gd = alignment_cost(oracle::gradient_descent_fit(a, noisy), a, noisy);
    worst_gap = std::max(worst_gap, alignment_cost(fit, a, noisy) - gd);
  }
  out.require(max_error <= kExactFitError, "noiseless recovery");
  out.require(worst_gap <= kOracleCostSlack, "noisy cost vs gradient descent");
  out.require(fit_seconds < kAlignmentSeconds, "runtime");
  out.note("max error " + fmt("%.2e", max_error) + ", cost - oracle <= " + fmt("%.2e", worst_gap) + ", " +
           fmt("%.3f", fit_seconds) + " s for 200 fits");
  return out;
}

Outcome cross_modality() {
  Outcome out;
  SynthConfig dark;
  dark.section_id = "modality_a";
  dark.width = dark.height = 1024;
  dark.seed = 3;
  PopulationSpec cells;
  cells.name = "cells";
  cells.count = 1200;
  cells.size_spread = 2.0;
  dark.populations = {cells};
  SynthConfig bright = dark;
  bright.section_id = "modality_b";
  bright.bright_cells = true;
  const SectionImage img_a = generate_synthetic_section(dark).image;
  const SectionImage img_b = generate_synthetic_section(bright).image;
  SegmentParams sp;
  const auto seg_a = segment_section(img_a, sp);
  sp.bright_cells = true;
  const auto seg_b = segment_section(img_b, sp);

  const int size = 32;
  VectorSet pa(size * size), pb(size * size);
  for (const auto& s : seg_a) pa.push_back(extract_patch(img_a, s, size).pixels);
  for (const auto& s : seg_b) pb.push_back(extract_patch(img_b, s, size).pixels);
  std::map<std::pair<long, long>, std::size_t> by_centroid;
  for (std::size_t j = 0; j < seg_b.size(); ++j)
    by_centroid[{std::lround(seg_b[j].centroid.row * 100), std::lround(seg_b[j].centroid.col * 100)}] = j;

  KMeansParams kp;
  kp.k = 200;
  kp.min_cluster = 2;
  InMemoryStream sa(pa), sb(pb);
  const DiffusionParams dp{50000.0, 1.0, 20, 10};
  const DiffusionModel ma = fit_diffusion_map(streaming_kmeans(sa, kp).representatives, size, dp);
  DiffusionModel mb = fit_diffusion_map(streaming_kmeans(sb, kp).representatives, size, dp);
  // Arbitrary eigen-axis order and signs in the second modality.
  const std::vector<int> perm = {3, 0, 7, 1, 9, 2, 5, 8, 4, 6};
  const DiffusionModel mb_raw = mb;
  for (int k = 0; k < 10; ++k) {
    mb.eigenvalues[k] = mb_raw.eigenvalues[perm[k]];
    mb.eigenvectors.col(k) = (k % 3 ? 1.0 : -1.0) * mb_raw.eigenvectors.col(perm[k]);
  }

  std::vector<Eigen::VectorXd> ea, eb;
  for (std::size_t i = 0; i < seg_a.size(); ++i) {
    const auto it = by_centroid.find({std::lround(seg_a[i].centroid.row * 100), std::lround(seg_a[i].centroid.col * 100)});
    if (it == by_centroid.end()) continue;
    try {
      Eigen::VectorXd x = embed_patch(ma, pa.row(i)), y = embed_patch(mb, pb.row(it->second));
      ea.push_back(x);
      eb.push_back(y);
    } catch (const NumericalError&) {
    }
  }
  const int n = int(ea.size()), half = n / 2;
  Eigen::MatrixXd a(n, 10), b(n, 10);
  for (int i = 0; i < n; ++i) a.row(i) = ea[i].transpose(), b.row(i) = eb[i].transpose();
  // Fit on one half of the matched cells, score the other half.
  const AffineMap fit = fit_affine_alignment(a.topRows(half), b.topRows(half));
  const Eigen::MatrixXd ta = a.bottomRows(n - half), tb = b.bottomRows(n - half);
  const double before = (ta - tb).squaredNorm() / double(n - half);
  const double after = alignment_cost(fit, ta, tb);
  const AffineMap self = align_brain_features(ma, ma);
  const double self_err =
      std::max((self.M - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), self.mu.cwiseAbs().maxCoeff());
  out.require(n >= 500, "matched cells");
  out.require(before >= kModalityReduction * after, "MSE reduction");
  out.require(self_err <= kSelfAlignment, "self alignment");
  out.note(std::to_string(n) + " matched cells, MSE " + fmt("%.4f", before) + " -> " + fmt("%.4f", after) + " (" +
           fmt("%.1f", before / after) + "x), self ||M-I|| " + fmt("%.1e", self_err));
  return out;
}

Outcome cdf_features() {
  Outcome out;
  std::mt19937 rng(303);
  std::uniform_real_distribution<double> pos(0, 996), u(0, 1);
  std::normal_distribution<double> nd(0, 1);
  CellFeatureDB db;
  db.add_section({"s", 1000, 1000, 0.5});
  for (int i = 0; i < 3000; ++i) {
    CellFeatures f;
    for (int j = 0; j < kCellFeatureCount; ++j) f[j] = j % 4 == 0 ? std::round(nd(rng) * 3) : nd(rng) * (j + 1);
    const double r = pos(rng), c = pos(rng);
    const std::vector<PixelRun> runs{{int(r), int(c), 3}};
    db.add_cell("s", std::uint64_t(i), {r, c}, 3, f, runs);
  }
  const ThresholdGrid grid = fit_threshold_grid(db);
  int mismatches = 0, violations = 0;
  for (int t = 0; t < 50; ++t) {
    const double x = u(rng) * 700, y = u(rng) * 700, w = 30 + u(rng) * 270, h = 30 + u(rng) * 270;
    const Region reg = t % 2 ? Region::from_rect({x, y, x + w, y + h})
                             : Region::from_polygon({{x, y}, {x + w, y + h / 5}, {x + w / 2, y + h}, {x - 20, y + h / 2}});
    const auto v = region_feature(db, "s", reg, grid);
    const auto ref = oracle::nested_loop_cdf(db, "s", reg, grid);
    for (int e = 0; e < kCdfEntries; ++e) mismatches += v.values[e] != ref[e];
    for (int j = 0; j < kCellFeatureCount; ++j)
      for (int k = 1; k < kCdfPoints; ++k) violations += v.cdf(j, k) < v.cdf(j, k - 1);
  }
  out.require(mismatches == 0, "oracle agreement");
  out.require(violations == 0, "monotonicity");
  out.note("50 regions x 1980 entries, " + std::to_string(mismatches) + " mismatches, " + std::to_string(violations) +
           " monotonicity violations");
  return out;
}

PipelineConfig fixture_config(const fs::path& dir) {
  PipelineConfig c;
  c.output_dir = dir;
  c.patch_size = 32;
  c.kmeans.k = 300;
  c.dm.epsilon = 50000;
  c.dm.n_evecs = 20;
  c.tile_stride = 112;
  return c;
}

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = sha256_file(e.path());
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cytoarch_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

Outcome end_to_end(const fs::path& dir) {
  Outcome out;
  const PipelineConfig c = fixture_config(dir);
  const auto t0 = std::chrono::steady_clock::now();
  nlohmann::json eval;
  for (const auto& command : command_names()) {
    const CommandReport r = run_command(command, c);
    if (command == "eval") eval = r.summary;
  }
  const double seconds = seconds_since(t0);
  const double auc = eval.at("SC").at("roc_auc").get<double>();
  const BoostedModel model = model_from_json(nlohmann::json::parse(read_text(dir / "models" / "SC.json")));
  const ImportanceReport report = feature_importance(model);
  const std::string top = report.features.empty() ? "" : report.features.front().name;
  const std::string family = top.substr(0, top.find("–"));
  out.require(eval.at("SC").at("held_out").get<bool>(), "held-out evaluation");
  out.require(auc >= kFixtureAuc, "AUC");
  out.require(family == "rotation", "top feature family");
  out.require(seconds < kFixtureSeconds, "runtime");
  out.note("held-out AUC " + fmt("%.4f", auc) + ", top feature " + top + ", " + fmt("%.1f", seconds) + " s");
  return out;
}

Outcome boosting() {
  Outcome out;
  std::mt19937 rng(505);
  std::uniform_real_distribution<double> u(0, 1);
  auto matrix = [&](std::size_t rows, std::size_t cols) {
    FeatureMatrix x(rows, cols);
    for (auto& v : x.data) v = u(rng);
    return x;
  };
  const std::vector<std::function<int(std::span<const double>)>> rules = {
      [](auto r) { return int(r[0] > 0.37); },
      [&](auto) { return int(u(rng) < 0.5); },
      [](auto r) { return int((r[1] > 0.5) != (r[2] > 0.5)); },
      [](auto r) { return int(r[3] + 0.5 * r[4] + 0.3 * std::sin(9 * r[0]) > 0.8); },
  };
  int rises = 0, datasets = 0;
  for (const auto& rule : rules) {
    const FeatureMatrix x = matrix(200, 6);
    std::vector<int> y;
    for (std::size_t i = 0; i < x.rows; ++i) y.push_back(rule(x.row(i)));
    y[0] = 0, y[1] = 1;
    TrainingTrace trace;
    train_detector(x, y, {}, 0, &trace);
    ++datasets;
    if (trace.loss.size() != 101) ++rises;
    for (std::size_t r = 1; r < trace.loss.size(); ++r) rises += trace.loss[r] > trace.loss[r - 1] * (1 + kLossUlps);
  }

  FeatureMatrix four(4, 1);
  four.data = {0, 1, 2, 3};
  BoostParams stump;
  stump.rounds = 1;
  stump.max_depth = 1;
  stump.min_child_weight = 0.1;
  const BoostedModel m4 = train_detector(four, std::vector<int>{0, 0, 1, 1}, stump);
  // g = p - y = +-1/2, h = 1/4 per point, so each leaf is -(+-1)/(1/2 + 1).
  const auto& nodes = m4.trees.at(0).nodes;
  const bool leaves = nodes.size() == 3 && std::abs(nodes[nodes[0].left].value + 1.0 / 1.5) < 1e-15 &&
                      std::abs(nodes[nodes[0].right].value - 1.0 / 1.5) < 1e-15;

  const FeatureMatrix x = matrix(400, 8);
  std::vector<int> y;
  for (std::size_t i = 0; i < x.rows; ++i) y.push_back(x(i, 2) + 0.5 * x(i, 5) + 0.2 * u(rng) > 0.9);
  const BoostedModel model = train_detector(x, y, {});
  const FeatureMatrix probe = matrix(1000, 8);
  int walk_mismatch = 0;
  for (std::size_t i = 0; i < probe.rows; ++i)
    walk_mismatch += predict_score(model, probe.row(i)) != sigmoid(oracle::walk_margin(model, probe.row(i)));
  out.require(rises == 0, "monotone loss");
  out.require(leaves, "hand-computed leaf weights");
  out.require(walk_mismatch == 0, "tree-walk agreement");
  out.note(std::to_string(datasets) + " datasets x 100 rounds with " + std::to_string(rises) +
           " loss increases, stump leaves " + (leaves ? "exact" : "wrong") + ", " + std::to_string(walk_mismatch) +
           "/1000 tree-walk mismatches");
  return out;
}

Outcome auc() {
  Outcome out;
  std::mt19937 rng(606);
  std::uniform_int_distribution<int> coarse(0, 9), label(0, 1), length(10, 200);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = length(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) s[i] = coarse(rng) * 0.1, y[i] = label(rng);
    y[0] = 0, y[1] = 1;
    mismatches += roc_auc(s, y) != oracle::pairwise_auc(s, y);
  }
  const double flat = roc_auc(std::vector<double>(7, 0.42), std::vector<int>{0, 1, 1, 0, 0, 1, 0});
  const double perfect = roc_auc(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 0, 1, 1});
  const double reversed = roc_auc(std::vector<double>{4, 3, 2, 1}, std::vector<int>{0, 0, 1, 1});
  out.require(mismatches == 0, "pairwise agreement");
  out.require(flat == 0.5 && perfect == 1.0 && reversed == 0.0, "degenerate cases");
  out.note("100 tied instances, " + std::to_string(mismatches) + " mismatches; all-equal " + fmt("%.2f", flat));
  return out;
}

Outcome diffusion() {
  Outcome out;
  std::mt19937 rng(707);
  std::uniform_real_distribution<double> major(2, 7), angle(-90, 90);
  VectorSet reps(16 * 16);
  for (int i = 0; i < 120; ++i) {
    const double a = major(rng), t = angle(rng) * M_PI / 180;
    std::vector<float> p(reps.dim, 0.0f);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) {
        const double x = c + 0.5 - 8, yy = 8 - (r + 0.5);
        const double u1 = x * std::cos(t) + yy * std::sin(t), u2 = -x * std::sin(t) + yy * std::cos(t);
        if (u1 * u1 / (a * a) + u2 * u2 / (a * a / 4) <= 1) p[r * 16 + c] = 90.0f;
      }
    reps.push_back(p);
  }
  const DiffusionModel m = fit_diffusion_map(reps, 16, {20000.0, 1.0, 20, 10});
  bool descending = true, bounded = true;
  for (std::size_t k = 0; k < m.eigenvalues.size(); ++k) {
    if (k && m.eigenvalues[k] > m.eigenvalues[k - 1]) descending = false;
    if (std::abs(m.eigenvalues[k]) > kEigenvalueBound) bounded = false;
  }
  double worst = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const Eigen::VectorXd e = embed_patch(m, reps.row(i)), t = m.embedding(i);
    worst = std::max(worst, (e - t).norm() / std::max(t.norm(), 1e-300));
  }
  std::vector<double> param;
  const VectorSet bars = oracle::bar_manifold(16, 40, param);
  const DiffusionModel line = fit_diffusion_map(bars, 16, {20000.0, 1.0, 10, 10});
  std::vector<double> first;
  for (std::size_t i = 0; i < bars.size(); ++i) first.push_back(line.embedding(i)[0]);
  const double rho = std::abs(oracle::spearman(first, param));
  out.require(descending, "descending eigenvalues");
  out.require(bounded, "eigenvalue bound");
  out.require(worst <= kNystromRelative, "Nystrom self-consistency");
  out.require(rho >= kManifoldSpearman, "1-D manifold");
  out.note("lambda1 " + fmt("%.6f", m.eigenvalues[0]) + ", Nystrom rel. error " + fmt("%.1e", worst) +
           ", manifold Spearman " + fmt("%.4f", rho));
  return out;
}

Outcome determinism(const fs::path& first) {
  Outcome out;
  const fs::path second = scratch("rerun");
  const PipelineConfig c = fixture_config(second);
  const auto reference = tree_hashes(first);
  int differing = 0;
  for (const auto& command : command_names()) {
    const CommandReport r = run_command(command, c);
    for (const auto& path : r.outputs) {
      const std::string rel = fs::relative(path, second).string();
      const auto it = reference.find(rel);
      differing += it == reference.end() || it->second != sha256_file(path);
    }
  }
  const auto rerun = tree_hashes(second);
  // Same directory again: every artifact is rewritten with identical bytes.
  for (const auto& command : command_names()) run_command(command, c);
  const auto again = tree_hashes(second);
  out.require(differing == 0 && rerun == reference, "fresh rerun");
  out.require(again == reference, "in-place rerun");
  out.note(std::to_string(reference.size()) + " artifacts across " + std::to_string(command_names().size()) +
           " stages, " + std::to_string(differing) + " differing");
  fs::remove_all(second);
  return out;
}

}  // namespace

int main() {
  const fs::path fixture = scratch("fixture");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"affine alignment exactness", affine_exactness},
      {"cross-modality alignment", cross_modality},
      {"CDF regional features", cdf_features},
      {"end-to-end structure detection", [&] { return end_to_end(fixture); }},
      {"boosting correctness", boosting},
      {"ROC AUC", auc},
      {"diffusion map", diffusion},
      {"determinism", [&] { return determinism(fixture); }},
  };
  int passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    passed += o.pass;
    std::printf("%s %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());
  fs::remove_all(fixture);
  return passed == int(criteria.size()) ? 0 : 1;
}
