#pragma once

// Token-probability uncertainty: the alpha-quantile of a completion's
// per-token sampling probabilities. Low values mean the model was unsure.

#include <map>
#include <span>
#include <vector>

namespace edgecloud {

inline constexpr double kDefaultAlpha = 0.8;

/// Quantile of `probs` at level `alpha` using linear interpolation between
/// order statistics at rank (n - 1) * alpha. alpha = 0 is the minimum,
/// alpha = 1 the maximum.
double alpha_quantile(std::span<const double> probs, double alpha);

/// Sub-task indices hardest first: ascending score, ties by ascending index.
std::vector<int> rank_by_difficulty(const std::map<int, double>& scores);

}  // namespace edgecloud
