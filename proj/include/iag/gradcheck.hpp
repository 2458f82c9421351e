#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "iag/training.hpp"

namespace iag {

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor index>[<entry>]" of the worst entry
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Entries whose +/- probe flipped a relu input across zero; the central
  // difference is meaningless there, so they are excluded from the maximum.
  std::size_t kink_skipped = 0;
};

/// Relative error |a - n| / max(|a|, |n|), zero when both vanish. Entries
/// whose magnitudes are both below `floor` are compared against `floor`.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Compares reverse-mode gradients of the per-sample objective against
/// central differences for every parameter entry. Bags and lambda from the
/// unperturbed pass are held fixed. Gradients smaller than `floor` are
/// compared in absolute terms against `floor`: with a 1e-5 step the central
/// difference itself carries roundoff around 1e-11, so relative error on
/// entries near 1e-8 says nothing about the backward pass.
GradCheckReport check_sample_gradients(const VolumeSample& sample, const ModelParams& params,
                                       std::span<const std::size_t> slices, const LossPaths& paths,
                                       const PositiveCounts& counts, double beta, double step = 1e-5,
                                       double floor = 1e-6);

}  // namespace iag
