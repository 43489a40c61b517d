#pragma once

#include <span>
#include <vector>

namespace cytoarch {

// Probability that a random positive outranks a random negative, ties counted 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

// One point per distinct score (descending), preceded by (inf, 0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

}  // namespace cytoarch
