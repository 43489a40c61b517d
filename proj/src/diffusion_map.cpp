#include "cytoarch/diffusion_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cytoarch/binary_io.hpp"
#include "cytoarch/error.hpp"

namespace cytoarch {

namespace {

constexpr double kDegenerateKernel = 1e-300;

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

Eigen::VectorXd DiffusionModel::embedding(std::size_t i) const {
  Eigen::VectorXd out(m);
  for (int k = 0; k < m; ++k) out[k] = eigenvalues[k] * eigenvectors(static_cast<Eigen::Index>(i), k);
  return out;
}

Eigen::MatrixXd gaussian_kernel_matrix(const VectorSet& points, double epsilon) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::exp(-squared_distance(points.row(i), points.row(j)) / epsilon);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

DiffusionModel fit_diffusion_map(const VectorSet& representatives, int patch_size, const DiffusionParams& params) {
  const auto n = static_cast<Eigen::Index>(representatives.size());
  if (params.epsilon <= 0.0) throw InvalidArgument("epsilon must be positive");
  if (params.n_evecs < 1 || params.m < 1 || params.m > params.n_evecs) {
    throw InvalidArgument("need 1 <= m <= n_evecs");
  }
  if (n < params.n_evecs + 1) {
    throw InvalidArgument("diffusion map needs at least n_evecs + 1 = " + std::to_string(params.n_evecs + 1) +
                          " representatives, got " + std::to_string(n));
  }
  if (static_cast<std::size_t>(patch_size) * patch_size != representatives.dim) {
    throw InvalidArgument("representative length does not match patch size");
  }

  const Eigen::MatrixXd kernel = gaussian_kernel_matrix(representatives, params.epsilon);
  const Eigen::VectorXd q = kernel.rowwise().sum();
  const Eigen::VectorXd q_alpha = q.array().pow(params.alpha);
  Eigen::MatrixXd k_alpha = kernel;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) k_alpha(i, j) /= q_alpha[i] * q_alpha[j];
  }
  const Eigen::VectorXd d = k_alpha.rowwise().sum();
  const Eigen::VectorXd d_inv_sqrt = d.array().rsqrt();
  const Eigen::MatrixXd sym = d_inv_sqrt.asDiagonal() * k_alpha * d_inv_sqrt.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("diffusion map eigensolver did not converge");
  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& evecs = solver.eigenvectors();

  DiffusionModel model;
  model.patch_size = patch_size;
  model.representatives = representatives;
  model.epsilon = params.epsilon;
  model.alpha = params.alpha;
  model.n_evecs = params.n_evecs;
  model.m = params.m;
  model.kernel_sums.assign(q.data(), q.data() + n);
  model.eigenvectors.resize(n, params.n_evecs);

  double worst_residual = 0.0;
  // Column n-1 is the trivial eigenpair (eigenvalue 1, psi constant).
  for (int k = 0; k < params.n_evecs; ++k) {
    const Eigen::Index col = n - 2 - k;
    const double lambda = evals[col];
    const Eigen::VectorXd v = evecs.col(col);
    worst_residual = std::max(worst_residual, (sym * v - lambda * v).norm());
    Eigen::VectorXd psi = d_inv_sqrt.cwiseProduct(v);
    Eigen::Index arg = 0;
    psi.cwiseAbs().maxCoeff(&arg);
    if (psi[arg] < 0) psi = -psi;
    model.eigenvalues.push_back(lambda);
    model.eigenvectors.col(k) = psi;
  }
  if (!(worst_residual < 1e-6)) {
    std::ostringstream msg;
    msg << "diffusion map eigenpairs inaccurate: max residual ||S v - lambda v|| = " << worst_residual;
    throw NumericalError(msg.str());
  }
  return model;
}

Eigen::VectorXd embed_patch(const DiffusionModel& model, std::span<const float> patch) {
  if (patch.size() != model.representatives.dim) throw InvalidArgument("patch size does not match the diffusion model");
  if (std::all_of(patch.begin(), patch.end(), [](float v) { return v == 0.0f; })) {
    throw NumericalError("all-zero patch has no kernel mass");
  }
  const std::size_t n = model.representatives.size();
  std::vector<double> dist(n);
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    dist[j] = squared_distance(patch, model.representatives.row(j));
    min_dist = std::min(min_dist, dist[j]);
  }
  if (std::exp(-min_dist / model.epsilon) < kDegenerateKernel) {
    throw NumericalError("patch is isolated from every representative (kernel weights below 1e-300)");
  }
  std::vector<double> k(n);
  double q = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    k[j] = std::exp(-dist[j] / model.epsilon);
    q += k[j];
  }
  const double q_alpha = std::pow(q, model.alpha);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    k[j] /= q_alpha * std::pow(model.kernel_sums[j], model.alpha);
    total += k[j];
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.m);
  for (std::size_t j = 0; j < n; ++j) {
    const double p = k[j] / total;
    for (int c = 0; c < model.m; ++c) out[c] += p * model.eigenvectors(static_cast<Eigen::Index>(j), c);
  }
  return out;
}

Eigen::VectorXd embed_patch(const DiffusionModel& model, const CellPatch& patch) {
  return embed_patch(model, std::span<const float>(patch.pixels));
}

void save_diffusion_model(const DiffusionModel& model, const std::filesystem::path& path) {
  BinaryArchive ar;
  ar.header = {{"kind", "diffusion_model"},
               {"version", 1},
               {"patch_size", model.patch_size},
               {"epsilon", model.epsilon},
               {"alpha", model.alpha},
               {"n_evecs", model.n_evecs},
               {"m", model.m},
               {"representatives", model.representatives.size()}};
  std::vector<double> reps(model.representatives.data.begin(), model.representatives.data.end());
  ar.put_f64("representatives", reps);
  ar.put_f64("eigenvalues", model.eigenvalues);
  ar.put_f64("kernel_sums", model.kernel_sums);
  std::vector<double> vecs(model.eigenvectors.data(), model.eigenvectors.data() + model.eigenvectors.size());
  ar.put_f64("eigenvectors_colmajor", vecs);
  ar.save(path);
}

DiffusionModel load_diffusion_model(const std::filesystem::path& path) {
  const BinaryArchive ar = BinaryArchive::load(path);
  if (ar.header.value("kind", "") != "diffusion_model") throw IoError(path.string() + " is not a diffusion model");
  if (ar.header.value("version", 0) != 1) throw IoError(path.string() + ": unsupported diffusion model version");
  DiffusionModel model;
  model.patch_size = ar.header.at("patch_size").get<int>();
  model.epsilon = ar.header.at("epsilon").get<double>();
  model.alpha = ar.header.at("alpha").get<double>();
  model.n_evecs = ar.header.at("n_evecs").get<int>();
  model.m = ar.header.at("m").get<int>();
  model.representatives = VectorSet(static_cast<std::size_t>(model.patch_size) * model.patch_size);
  for (double v : ar.get_f64("representatives")) model.representatives.data.push_back(static_cast<float>(v));
  model.eigenvalues = ar.get_f64("eigenvalues");
  model.kernel_sums = ar.get_f64("kernel_sums");
  const auto vecs = ar.get_f64("eigenvectors_colmajor");
  const auto n = static_cast<Eigen::Index>(model.representatives.size());
  if (static_cast<Eigen::Index>(vecs.size()) != n * model.n_evecs) throw IoError("eigenvector block has wrong size");
  model.eigenvectors = Eigen::Map<const Eigen::MatrixXd>(vecs.data(), n, model.n_evecs);
  return model;
}

}  // namespace cytoarch
