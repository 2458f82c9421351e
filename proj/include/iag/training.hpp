#pragma once

// Joint training loop: one randomly drawn volume per iteration, branch on its
// supervision kind, assemble global + beta * local, one gradient step.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "iag/backbone.hpp"
#include "iag/local_classifier.hpp"
#include "iag/separation.hpp"
#include "iag/variants.hpp"

namespace iag {

struct TrainConfig {
  double beta = 20.0;
  double lr = 1e-2;
  double decay_gamma = 0.99;
  std::size_t decay_interval = 0;  // 0 selects max(1, max_iters / 100)
  std::size_t max_iters = 3000;
  std::uint64_t seed = 0;
  std::size_t min_slice_interval = 1;
  std::size_t max_slice_interval = 5;
  double momentum = 0.0;
  // Rescale the joint parameter gradient to this L2 norm when it is larger.
  // 0 disables clipping.
  double clip_norm = 0.0;
  DeviationNorm separation_norm = DeviationNorm::L1;
  BackboneConfig backbone{};
  VariantConfig variant{};

  std::size_t effective_decay_interval() const;
  void validate() const;
};

struct LossRecord {
  std::size_t iteration = 0;
  double global_loss = 0.0;           // l_G
  double labeled_local_loss = 0.0;    // l_att + l_L^l
  double unlabeled_local_loss = 0.0;  // l_L^u
  double total = 0.0;                 // assembled per-sample objective
  double lr = 0.0;
  bool grad_norm_clipped = false;
};

struct TrainState {
  ModelParams params;
  std::size_t iteration = 0;
  std::mt19937_64 rng;
  std::vector<LossRecord> history;
  std::size_t unlabeled_branch_count = 0;
  std::size_t skipped_separations = 0;
};

/// Per-sample loss with its components. `total` is undefined when no path
/// contributes (e.g. a negative volume with the global stream disabled).
struct SampleLoss {
  Tensor total;
  double global_loss = 0.0;
  double labeled_local_loss = 0.0;
  double unlabeled_local_loss = 0.0;
  bool unlabeled_branch = false;
  bool separation_skipped = false;
  double lambda = 0.0;
  std::optional<Separation> separation;  // bags used by the unlabeled branch
};

/// Bags and lambda to reuse instead of recomputing them from the current
/// attention field; lets finite-difference checks hold the stop-gradient
/// quantities fixed.
struct FrozenBags {
  Separation separation;
  double lambda = 0.0;
};

/// L_IAG for one volume: l_G + beta * local_loss(...). Either side may be
/// absent (undefined); the result is undefined only when both are.
Tensor overall_loss(const Tensor& global_term, const Tensor& local_term, double beta);

/// Builds every active loss term for one volume over the given slices.
SampleLoss sample_loss(const VolumeSample& sample, const ModelParams& params, std::span<const std::size_t> slices,
                       const LossPaths& paths, const PositiveCounts& counts, double beta,
                       DeviationNorm norm = DeviationNorm::L1, const FrozenBags* frozen = nullptr);

/// Interval k uniform in [lo, hi]; returns {0, k, 2k, ...} below depth.
std::vector<std::size_t> sample_slices(std::size_t depth, std::mt19937_64& rng, std::size_t lo = 1,
                                       std::size_t hi = 5);

/// p <- p - lr * grad for every tensor. Every tensor must carry a gradient.
void sgd_step(ModelParams& params, double lr);

/// Step-size multiplier min(1, clip_norm / ||g||) over all parameter
/// gradients; 1 when clipping is disabled.
double clip_factor(const ModelParams& params, double clip_norm);

PositiveCounts count_positives(std::span<const VolumeSample> dataset);

using IterationCallback = std::function<void(const TrainState&)>;

/// Trains from `init` (or a seeded initialisation when absent).
TrainState train(std::span<const VolumeSample> dataset, const TrainConfig& config,
                 const ModelParams* init = nullptr, const IterationCallback& on_iteration = {});

/// CSV with columns iteration,global_loss,labeled_local_loss,unlabeled_local_loss,lr.
void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path);

/// Mean of the trailing `window` totals ending at `end` (exclusive).
double smoothed_total(const std::vector<LossRecord>& history, std::size_t end, std::size_t window);

}  // namespace iag
