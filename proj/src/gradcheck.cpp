#include "iag/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "iag/error.hpp"
#include "iag/ops.hpp"

namespace iag {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport check_sample_gradients(const VolumeSample& sample, const ModelParams& params,
                                       std::span<const std::size_t> slices, const LossPaths& paths,
                                       const PositiveCounts& counts, double beta, double step,
                                       double floor) {
  ModelParams work = params.clone();

  std::vector<std::vector<double>> analytic;
  std::optional<FrozenBags> frozen;
  {
    Tape tape;
    for (Tensor* t : work.tensors()) tape.watch(*t);
    const SampleLoss loss = sample_loss(sample, work, slices, paths, counts, beta);
    if (!loss.total.defined()) throw InvalidArgument("gradient check: no loss term is active for this sample");
    if (loss.separation) frozen = FrozenBags{*loss.separation, loss.lambda};
    tape.backward(loss.total);
    for (const Tensor* t : work.tensors()) analytic.emplace_back(t->grad().begin(), t->grad().end());
  }

  auto evaluate = [&](std::vector<bool>* pattern) {
    ReluTrace trace;
    const SampleLoss loss =
        sample_loss(sample, work, slices, paths, counts, beta, DeviationNorm::L1, frozen ? &*frozen : nullptr);
    if (pattern) *pattern = trace.pattern();
    return loss.total.item();
  };
  std::vector<bool> base_pattern, probe_pattern;
  evaluate(&base_pattern);

  GradCheckReport report;
  auto tensors = work.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto values = tensors[k]->mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(&probe_pattern);
      bool kink = probe_pattern != base_pattern;
      values[i] = saved - step;
      const double down = evaluate(&probe_pattern);
      kink = kink || probe_pattern != base_pattern;
      values[i] = saved;
      if (kink) {
        ++report.kink_skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[k][i], numeric, floor);
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst = std::to_string(k) + "[" + std::to_string(i) + "]";
        report.worst_analytic = analytic[k][i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace iag
