#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cytoarch {

// Row-major set of equal-length float vectors (flattened patches).
struct VectorSet {
  std::size_t dim = 0;
  std::vector<float> data;

  VectorSet() = default;
  explicit VectorSet(std::size_t d) : dim(d) {}

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  void push_back(std::span<const float> v) { data.insert(data.end(), v.begin(), v.end()); }
};

// A re-readable source of vectors that need not fit in memory.
class VectorStream {
 public:
  virtual ~VectorStream() = default;
  virtual std::size_t dim() const = 0;
  virtual void rewind() = 0;
  // Appends up to max_rows vectors to out.data; returns the number appended,
  // 0 once the stream is exhausted.
  virtual std::size_t read(std::size_t max_rows, VectorSet& out) = 0;
};

class InMemoryStream : public VectorStream {
 public:
  explicit InMemoryStream(const VectorSet& set) : set_(set) {}
  std::size_t dim() const override { return set_.dim; }
  void rewind() override { pos_ = 0; }
  std::size_t read(std::size_t max_rows, VectorSet& out) override;

 private:
  const VectorSet& set_;
  std::size_t pos_ = 0;
};

struct KMeansParams {
  int k = 2000;
  int min_cluster = 5;
  std::uint64_t seed = 0;
  // Reservoir sampled in one pass for k-means++ seeding; 0 = max(5k, 1000).
  std::size_t reservoir_size = 0;
  std::size_t chunk_size = 10000;
  // Lloyd refinement passes over the stream before the final mean pass.
  int refinement_passes = 3;
};

struct KMeansResult {
  VectorSet representatives;            // cluster means with >= min_cluster members
  std::vector<std::size_t> counts;      // members per kept cluster
  std::size_t stream_size = 0;
  int seeded_centers = 0;               // <= k; fewer when the data has < k distinct points
  // Assignment cost sum_i ||x_i - c(x_i)||^2 at the start of every Lloyd pass
  // (including the final mean pass); non-increasing.
  std::vector<double> cost_history;
  // Cost of the final assignment measured against the final means, all clusters.
  double final_cost = 0.0;
};

// k-means++ seeding over a uniform reservoir sample, then Lloyd passes in
// which each pass streams every chunk, accumulates per-cluster sums and
// updates all centers at the end of the pass. Deterministic given seed and
// stream order. Throws on an empty stream.
KMeansResult streaming_kmeans(VectorStream& stream, const KMeansParams& params);

// k-means++ seeding on an in-memory set; returns indices into `points`.
std::vector<std::size_t> kmeans_plus_plus(const VectorSet& points, int k, std::uint64_t seed);

}  // namespace cytoarch
