#include "cytoarch/kmeans.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <random>

#include "cytoarch/error.hpp"

namespace cytoarch {

std::size_t InMemoryStream::read(std::size_t max_rows, VectorSet& out) {
  const std::size_t n = std::min(max_rows, set_.size() - pos_);
  out.data.insert(out.data.end(), set_.data.begin() + static_cast<std::ptrdiff_t>(pos_ * set_.dim),
                  set_.data.begin() + static_cast<std::ptrdiff_t>((pos_ + n) * set_.dim));
  pos_ += n;
  return n;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

RowMatrix to_matrix(const VectorSet& set) {
  RowMatrix m(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim));
  for (std::size_t i = 0; i < set.data.size(); ++i) m.data()[i] = set.data[i];
  return m;
}

// Per-cluster accumulators for one Lloyd pass.
struct PassStats {
  Eigen::MatrixXd sums;  // k x dim
  std::vector<std::size_t> counts;
  std::vector<double> sq_norms;
  double cost = 0.0;

  PassStats(Eigen::Index k, Eigen::Index dim) : sums(Eigen::MatrixXd::Zero(k, dim)), counts(k, 0), sq_norms(k, 0.0) {}
};

PassStats lloyd_pass(VectorStream& stream, const RowMatrix& centers, std::size_t chunk_size) {
  const Eigen::Index k = centers.rows();
  PassStats stats(k, centers.cols());
  const Eigen::VectorXd center_norms = centers.rowwise().squaredNorm();
  stream.rewind();
  VectorSet chunk(stream.dim());
  while (true) {
    chunk.data.clear();
    if (stream.read(chunk_size, chunk) == 0) break;
    const RowMatrix x = to_matrix(chunk);
    const Eigen::MatrixXd cross = x * centers.transpose();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double xn = x.row(i).squaredNorm();
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = xn - 2.0 * cross(i, c) + center_norms[c];
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      stats.sums.row(best) += x.row(i);
      stats.counts[best] += 1;
      stats.sq_norms[best] += xn;
      stats.cost += std::max(0.0, best_d);
    }
  }
  return stats;
}

}  // namespace

std::vector<std::size_t> kmeans_plus_plus(const VectorSet& points, int k, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (n == 0) throw InvalidArgument("k-means++ on an empty set");
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), points.row(chosen[0]));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (static_cast<int>(chosen.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) break;  // every point coincides with a chosen center
    const double target = unif(rng) * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(pick)));
  }
  return chosen;
}

KMeansResult streaming_kmeans(VectorStream& stream, const KMeansParams& params) {
  if (params.k < 1) throw InvalidArgument("k must be >= 1");
  if (params.min_cluster < 1) throw InvalidArgument("min_cluster must be >= 1");
  if (params.chunk_size == 0) throw InvalidArgument("chunk_size must be positive");
  const std::size_t dim = stream.dim();
  const std::size_t reservoir_cap =
      params.reservoir_size ? params.reservoir_size : std::max<std::size_t>(5 * static_cast<std::size_t>(params.k), 1000);

  // Pass 0: uniform reservoir sample (Algorithm R).
  std::mt19937_64 rng(params.seed);
  VectorSet reservoir(dim);
  VectorSet chunk(dim);
  std::size_t seen = 0;
  stream.rewind();
  while (true) {
    chunk.data.clear();
    const std::size_t got = stream.read(params.chunk_size, chunk);
    if (got == 0) break;
    for (std::size_t i = 0; i < got; ++i, ++seen) {
      if (reservoir.size() < reservoir_cap) {
        reservoir.push_back(chunk.row(i));
      } else {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, seen)(rng);
        if (j < reservoir_cap) {
          auto dst = reservoir.row(j);
          auto src = chunk.row(i);
          std::copy(src.begin(), src.end(), dst.begin());
        }
      }
    }
  }
  if (seen == 0) throw InvalidArgument("k-means input stream is empty");

  const auto seeds = kmeans_plus_plus(reservoir, params.k, rng());
  RowMatrix centers(static_cast<Eigen::Index>(seeds.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < seeds.size(); ++c) {
    auto src = reservoir.row(seeds[c]);
    for (std::size_t d = 0; d < dim; ++d) centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) = src[d];
  }

  KMeansResult result;
  result.stream_size = seen;
  result.seeded_centers = static_cast<int>(seeds.size());
  for (int pass = 0; pass <= params.refinement_passes; ++pass) {
    const PassStats stats = lloyd_pass(stream, centers, params.chunk_size);
    result.cost_history.push_back(stats.cost);
    // Empty clusters keep their previous center.
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      if (stats.counts[c] > 0) centers.row(c) = stats.sums.row(c) / static_cast<double>(stats.counts[c]);
    }
    if (pass < params.refinement_passes) continue;

    result.representatives = VectorSet(dim);
    result.final_cost = 0.0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      if (stats.counts[c] == 0) continue;
      result.final_cost += std::max(
          0.0, stats.sq_norms[c] - stats.sums.row(c).squaredNorm() / static_cast<double>(stats.counts[c]));
      if (stats.counts[c] < static_cast<std::size_t>(params.min_cluster)) continue;
      for (Eigen::Index d = 0; d < centers.cols(); ++d) {
        result.representatives.data.push_back(static_cast<float>(centers(c, d)));
      }
      result.counts.push_back(stats.counts[c]);
    }
  }
  return result;
}

}  // namespace cytoarch
