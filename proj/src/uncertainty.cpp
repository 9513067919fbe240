#include "edgecloud/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "edgecloud/error.hpp"

namespace edgecloud {

double alpha_quantile(std::span<const double> probs, double alpha) {
  if (probs.empty()) throw PreconditionError("alpha_quantile needs at least one probability");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError(fmt::format("alpha {} outside [0, 1]", alpha));
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = static_cast<double>(sorted.size() - 1) * alpha;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  // Convex combination stays within [sorted[lo], sorted[hi]].
  return std::clamp(sorted[lo] + frac * (sorted[hi] - sorted[lo]), sorted[lo], sorted[hi]);
}

std::vector<int> rank_by_difficulty(const std::map<int, double>& scores) {
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(scores.size());
  for (const auto& [idx, s] : scores) keyed.emplace_back(s, idx);
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> out;
  out.reserve(keyed.size());
  for (const auto& [_, idx] : keyed) out.push_back(idx);
  return out;
}

}  // namespace edgecloud
