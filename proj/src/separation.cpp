#include "iag/separation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "iag/error.hpp"

namespace iag {

namespace {

// Cost of the contiguous run sorted[a, b) using prefix sums.
double run_cost(std::span<const double> sorted, std::span<const double> prefix, std::span<const double> prefix_sq,
                std::size_t a, std::size_t b, DeviationNorm norm) {
  const double n = static_cast<double>(b - a);
  const double total = prefix[b] - prefix[a];
  const double m = total / n;
  if (norm == DeviationNorm::Squared)
    return std::max(0.0, (prefix_sq[b] - prefix_sq[a]) - total * total / n);
  const auto split = static_cast<std::size_t>(
      std::upper_bound(sorted.begin() + static_cast<std::ptrdiff_t>(a), sorted.begin() + static_cast<std::ptrdiff_t>(b), m) -
      sorted.begin());
  const double below = m * static_cast<double>(split - a) - (prefix[split] - prefix[a]);
  const double above = (prefix[b] - prefix[split]) - m * static_cast<double>(b - split);
  return below + above;
}

}  // namespace

std::optional<Separation> separate_regions(std::span<const double> probs, DeviationNorm norm) {
  const std::size_t n = probs.size();
  if (n < 2) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(probs.begin(), probs.end());
  if (*hi - *lo < kDegenerateSpread) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });

  std::vector<double> sorted(n), prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sorted[i] = probs[order[i]];
    prefix[i + 1] = prefix[i] + sorted[i];
    prefix_sq[i + 1] = prefix_sq[i] + sorted[i] * sorted[i];
  }

  // Only splits between distinct values give a strict threshold.
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t s = 1; s < n; ++s) {
    if (!(sorted[s - 1] < sorted[s])) continue;
    const double c = run_cost(sorted, prefix, prefix_sq, 0, s, norm) + run_cost(sorted, prefix, prefix_sq, s, n, norm);
    if (c < best_cost) {
      best_cost = c;
      best = s;
    }
  }

  Separation out;
  out.background.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best));
  out.foreground.assign(order.begin() + static_cast<std::ptrdiff_t>(best), order.end());
  std::sort(out.background.begin(), out.background.end());
  std::sort(out.foreground.begin(), out.foreground.end());
  out.threshold = 0.5 * (sorted[best - 1] + sorted[best]);
  out.cost = clustering_cost(out.foreground, out.background, probs, norm);
  return out;
}

double clustering_cost(std::span<const std::size_t> first, std::span<const std::size_t> second,
                       std::span<const double> probs, DeviationNorm norm) {
  if (first.empty() || second.empty()) throw InvalidArgument("clustering_cost: empty cluster");
  double cost = 0.0;
  for (auto cluster : {first, second}) {
    double m = 0.0;
    for (auto i : cluster) {
      if (i >= probs.size()) throw InvalidArgument("clustering_cost: index out of range");
      m += probs[i];
    }
    m /= static_cast<double>(cluster.size());
    for (auto i : cluster) {
      const double d = probs[i] - m;
      cost += norm == DeviationNorm::L1 ? std::abs(d) : d * d;
    }
  }
  return cost;
}

}  // namespace iag
