#include "cytoarch/alignment.hpp"

#include <sstream>
#include <vector>

#include "cytoarch/binary_io.hpp"
#include "cytoarch/error.hpp"

namespace cytoarch {

AffineMap AffineMap::identity(int d) { return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)}; }

Eigen::VectorXd apply_affine(const AffineMap& map, const Eigen::VectorXd& v) {
  if (v.size() != map.mu.size()) {
    throw InvalidArgument("affine map of dimension " + std::to_string(map.mu.size()) + " applied to vector of length " +
                          std::to_string(v.size()));
  }
  return map.mu + map.M * v;
}

double alignment_cost(const AffineMap& map, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd residual = (a * map.M.transpose()).rowwise() + map.mu.transpose() - b;
  return residual.squaredNorm() / static_cast<double>(a.rows());
}

AffineMap fit_affine_alignment(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index n = a.rows(), d = a.cols();
  if (b.rows() != n || b.cols() != d) throw InvalidArgument("paired samples must have matching shapes");
  if (n < d + 1) {
    throw InvalidArgument("affine fit needs at least d + 1 = " + std::to_string(d + 1) + " pairs, got " +
                          std::to_string(n));
  }
  const Eigen::RowVectorXd mean_a = a.colwise().mean();
  const Eigen::RowVectorXd mean_b = b.colwise().mean();
  const Eigen::MatrixXd ac = a.rowwise() - mean_a;
  const Eigen::MatrixXd bc = b.rowwise() - mean_b;
  const Eigen::MatrixXd cov_a = ac.transpose() * ac / static_cast<double>(n);
  const Eigen::MatrixXd cov_ab = ac.transpose() * bc / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_a);
  const double top = eig.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> deficient;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(eig.eigenvalues()[i] > 1e-12 * std::max(top, 0.0)) || top <= 0.0) deficient.push_back(i);
  }
  if (!deficient.empty()) {
    std::ostringstream msg;
    msg << "covariance of the source coordinates is singular; deficient directions:";
    for (auto i : deficient) {
      msg << " [eigenvalue " << eig.eigenvalues()[i] << ", direction";
      for (Eigen::Index k = 0; k < d; ++k) msg << ' ' << eig.eigenvectors()(k, i);
      msg << ']';
    }
    throw NumericalError(msg.str());
  }

  const Eigen::MatrixXd mt = cov_a.ldlt().solve(cov_ab);
  AffineMap map;
  map.M = mt.transpose();
  map.mu = mean_b.transpose() - map.M * mean_a.transpose();
  return map;
}

AffineMap align_brain_features(const DiffusionModel& new_model, const DiffusionModel& reference_model) {
  if (new_model.patch_size != reference_model.patch_size) throw InvalidArgument("models use different patch sizes");
  if (new_model.m != reference_model.m) throw InvalidArgument("models retain different embedding dimensions");
  const std::size_t n = reference_model.representatives.size();
  std::vector<Eigen::VectorXd> as, bs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto patch = reference_model.representatives.row(i);
    try {
      as.push_back(embed_patch(new_model, patch));
    } catch (const NumericalError&) {
      continue;
    }
    bs.push_back(embed_patch(reference_model, patch));
  }
  const int d = new_model.m;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(as.size()), d), b(static_cast<Eigen::Index>(bs.size()), d);
  for (std::size_t i = 0; i < as.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) = as[i].transpose();
    b.row(static_cast<Eigen::Index>(i)) = bs[i].transpose();
  }
  return fit_affine_alignment(a, b);
}

void save_affine_map(const AffineMap& map, const std::filesystem::path& path, const std::string& id) {
  BinaryArchive ar;
  ar.header = {{"kind", "affine_map"}, {"version", 1}, {"dim", map.dim()}, {"id", id}};
  ar.put_f64("mu", std::vector<double>(map.mu.data(), map.mu.data() + map.mu.size()));
  ar.put_f64("M_colmajor", std::vector<double>(map.M.data(), map.M.data() + map.M.size()));
  ar.save(path);
}

AffineMap load_affine_map(const std::filesystem::path& path) {
  const BinaryArchive ar = BinaryArchive::load(path);
  if (ar.header.value("kind", "") != "affine_map") throw IoError(path.string() + " is not an affine map");
  const int d = ar.header.at("dim").get<int>();
  const auto mu = ar.get_f64("mu");
  const auto m = ar.get_f64("M_colmajor");
  if (static_cast<int>(mu.size()) != d || static_cast<int>(m.size()) != d * d) throw IoError("affine map blocks have wrong size");
  AffineMap map;
  map.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), d);
  map.M = Eigen::Map<const Eigen::MatrixXd>(m.data(), d, d);
  return map;
}

}  // namespace cytoarch
