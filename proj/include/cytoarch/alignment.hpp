#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "cytoarch/diffusion_map.hpp"

namespace cytoarch {

// v -> mu + M v, mapping one brain's diffusion coordinates onto the
// reference brain's.
struct AffineMap {
  Eigen::VectorXd mu;
  Eigen::MatrixXd M;

  static AffineMap identity(int d);
  int dim() const { return static_cast<int>(mu.size()); }
};

Eigen::VectorXd apply_affine(const AffineMap& map, const Eigen::VectorXd& v);

// Rows of `a` and `b` are paired samples a_i, b_i.
// cost = (1/n) sum_i ||mu + M a_i - b_i||^2
double alignment_cost(const AffineMap& map, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Closed-form minimizer of alignment_cost: Cov(a) M^T = Cov(a, b) on centered
// data and mu = mean(b) - M mean(a). Needs n >= d + 1 and a nonsingular
// Cov(a); otherwise throws, naming the deficient directions.
AffineMap fit_affine_alignment(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Embeds the reference model's representatives under both models
// (a_i = new model, b_i = reference) and fits the map between them.
// Representatives the new model cannot embed (isolated kernel rows) are
// left out of the fit.
AffineMap align_brain_features(const DiffusionModel& new_model, const DiffusionModel& reference_model);

void save_affine_map(const AffineMap& map, const std::filesystem::path& path, const std::string& id = {});
AffineMap load_affine_map(const std::filesystem::path& path);

}  // namespace cytoarch
