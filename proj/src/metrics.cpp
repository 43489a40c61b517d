#include "cytoarch/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "cytoarch/error.hpp"

namespace cytoarch {

namespace {

void check(std::span<const double> scores, std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int v) { return v != 0; }));
  neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("ROC AUC needs both classes");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check(scores, labels, pos, neg);
  const auto idx = order_by_score(scores);
  // Twice the positive rank sum, so midranks stay integral.
  long double twice_rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const long double twice_mid = static_cast<long double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]]) twice_rank_sum += twice_mid;
    }
    i = j;
  }
  const long double p = static_cast<long double>(pos);
  const long double u2 = twice_rank_sum - p * (p + 1);
  return static_cast<double>(u2 / (2.0L * p * static_cast<long double>(neg)));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check(scores, labels, pos, neg);
  auto idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      (labels[idx[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({s, static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return curve;
}

}  // namespace cytoarch
