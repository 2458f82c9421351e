#pragma once

// Two-bag split of a lattice by attention probability. Forward-only: the
// result is a pair of index sets and carries no gradient.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace iag {

enum class DeviationNorm {
  L1,       // sum of |p - mean| per cluster
  Squared,  // sum of (p - mean)^2, the k-means objective
};

struct Separation {
  std::vector<std::size_t> foreground;  // high-attention bag, pseudo-label 1
  std::vector<std::size_t> background;  // pseudo-label 0
  double threshold = 0.0;               // midpoint between the two boundary values
  double cost = 0.0;

  static constexpr int kForegroundLabel = 1;
  static constexpr int kBackgroundLabel = 0;
};

/// Minimum spread (max - min) below which a field counts as degenerate.
inline constexpr double kDegenerateSpread = 1e-6;

/// Exact minimiser of the two-cluster cost over all threshold splits of the
/// sorted values. Returns nullopt for degenerate input (fewer than two values
/// or spread below kDegenerateSpread); the caller skips the sample.
std::optional<Separation> separate_regions(std::span<const double> probs,
                                           DeviationNorm norm = DeviationNorm::L1);

/// Cost of an explicit two-cluster partition. Throws on an empty cluster.
double clustering_cost(std::span<const std::size_t> first, std::span<const std::size_t> second,
                       std::span<const double> probs, DeviationNorm norm = DeviationNorm::L1);

}  // namespace iag
