#pragma once
// Independent reference computations used by the unit tests. Nothing here
// calls into the library's numeric code.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double bce(double p, std::uint8_t y) {
  const double c = 1e-12;
  return y ? -std::log(std::max(p, c)) : -std::log(std::max(1.0 - p, c));
}

/// Six-nested-loop same-padded cross-correlation.
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& ker, std::size_t cout, std::size_t k,
                                  const std::vector<double>& bias) {
  std::vector<double> out(cout * h * w);
  const long pad = static_cast<long>(k / 2);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = bias[o];
        for (std::size_t i = 0; i < cin; ++i)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long sy = static_cast<long>(y + ky) - pad, sx = static_cast<long>(x + kx) - pad;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
              acc += ker[((o * cin + i) * k + ky) * k + kx] * in[(i * h + sy) * w + sx];
            }
        out[(o * h + y) * w + x] = acc;
      }
  return out;
}

/// Central difference of f around x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double step = 1e-5) {
  const double saved = x[i];
  x[i] = saved + step;
  const double up = f(x);
  x[i] = saved - step;
  const double down = f(x);
  return (up - down) / (2.0 * step);
}

inline double rel_err(double a, double b) {
  const double s = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / s;
}

/// Cost of a two-cluster partition, written directly from the definition.
inline double cluster_cost(const std::vector<double>& p, const std::vector<bool>& in_first, bool squared) {
  double cost = 0.0;
  for (bool side : {true, false}) {
    double mean = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (in_first[i] == side) {
        mean += p[i];
        ++n;
      }
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (in_first[i] == side) cost += squared ? (p[i] - mean) * (p[i] - mean) : std::abs(p[i] - mean);
  }
  return cost;
}

/// Minimum cost over every threshold split p >= t, enumerated exhaustively
/// over the distinct values.
inline double brute_force_min_cost(const std::vector<double>& p, bool squared) {
  double best = INFINITY;
  for (double t : p) {
    std::vector<bool> fg(p.size());
    std::size_t n_fg = 0;
    for (std::size_t i = 0; i < p.size(); ++i) n_fg += (fg[i] = p[i] >= t);
    if (n_fg == 0 || n_fg == p.size()) continue;
    best = std::min(best, cluster_cost(p, fg, squared));
  }
  return best;
}

}  // namespace oracle
