#pragma once

#include <span>
#include <vector>

namespace ordsr {

// Ranks starting at 1; values within `tie_tolerance` of their sorted
// neighbour share the average rank of their group.
std::vector<double> average_ranks(std::span<const double> values,
                                  double tie_tolerance = 0.0);

// Spearman rank correlation (Pearson correlation of average ranks). Returns 0
// when either side has no rank variance.
double spearman(std::span<const double> a, std::span<const double> b,
                double tie_tolerance = 0.0);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace ordsr
