#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cytoarch/kmeans.hpp"
#include "cytoarch/patch.hpp"

namespace cytoarch {

struct DiffusionParams {
  double epsilon = 5000.0;
  double alpha = 1.0;
  int n_evecs = 100;
  int m = 10;
};

// Trained diffusion map over representative patches.
//
// Kernel k(x, y) = exp(-||x - y||^2 / epsilon) on flattened patches, followed
// by alpha-normalization k_a(x, y) = k(x, y) / (q(x)^alpha q(y)^alpha) with
// q the kernel row sums, then row-stochastic normalization P = D^-1 K_a.
// `eigenvectors` holds the right eigenvectors psi of P for the n_evecs
// largest non-trivial eigenvalues, scaled so that sum_i d_i psi_k(i)^2 = 1,
// with the largest-magnitude entry of each vector positive.
struct DiffusionModel {
  int patch_size = 0;
  VectorSet representatives;
  double epsilon = 0.0;
  double alpha = 1.0;
  int n_evecs = 0;
  int m = 0;
  std::vector<double> eigenvalues;  // descending, length n_evecs
  Eigen::MatrixXd eigenvectors;     // representatives x n_evecs
  std::vector<double> kernel_sums;  // q for every representative

  // Training embedding of representative i: lambda_k psi_k(i), k < m.
  Eigen::VectorXd embedding(std::size_t i) const;
};

// Dense Gaussian kernel over a vector set (before any normalization).
Eigen::MatrixXd gaussian_kernel_matrix(const VectorSet& points, double epsilon);

// Needs at least n_evecs + 1 representatives. Throws NumericalError when the
// eigensolver fails or its residual is too large.
DiffusionModel fit_diffusion_map(const VectorSet& representatives, int patch_size, const DiffusionParams& params);

// Nystrom extension: the normalized kernel row of `patch` against the
// representatives, projected onto the eigenvectors. Returns m coordinates.
// For a training representative this reproduces its training embedding.
Eigen::VectorXd embed_patch(const DiffusionModel& model, std::span<const float> patch);
Eigen::VectorXd embed_patch(const DiffusionModel& model, const CellPatch& patch);

void save_diffusion_model(const DiffusionModel& model, const std::filesystem::path& path);
DiffusionModel load_diffusion_model(const std::filesystem::path& path);

}  // namespace cytoarch
