#pragma once

// Ablation runs and the per-voxel pseudo-label (teacher/student) baseline.

#include <cstddef>
#include <span>
#include <vector>

#include "iag/evaluation.hpp"
#include "iag/training.hpp"

namespace iag {

/// Keeps the first `labeled` voxel-labeled positives, the first `unlabeled`
/// unlabeled positives and every negative, in dataset order.
std::vector<VolumeSample> subset_supervision(std::span<const VolumeSample> dataset, std::size_t labeled,
                                             std::size_t unlabeled);

struct PvplResult {
  ModelParams teacher;
  ModelParams student;
  std::size_t pseudo_labeled = 0;  // unlabeled positives that received a nonempty pseudo mask
  std::vector<LossRecord> teacher_history;
  std::vector<LossRecord> student_history;
};

inline constexpr double kPseudoLabelThreshold = 0.5;
inline constexpr double kTeacherBudget = 0.4;

/// Per-voxel pseudo masks p_x >= 0.5 over all slices.
std::vector<std::uint8_t> pseudo_label_mask(const VolumeSample& volume, const ModelParams& teacher);

/// Teacher: attention + global streams on the labeled set plus the
/// unlabeled set's image labels. Pseudo-labels: teacher p_x thresholded at
/// 0.5 on unlabeled positives. Student: same objective retrained from the
/// same initialisation on labeled + pseudo-labeled data. Iteration budget is
/// split 40/60 between the stages.
PvplResult pvpl_self_training(std::span<const VolumeSample> labeled, std::span<const VolumeSample> unlabeled,
                              const TrainConfig& config);

struct VariantRun {
  ModelParams params;
  MetricsReport report;
  std::vector<LossRecord> history;
  std::size_t unlabeled_branch_count = 0;
};

/// Trains `config.variant` on `train_set` and evaluates it on `test_set`
/// with the variant's own decision rules.
VariantRun run_variant(std::span<const VolumeSample> train_set, std::span<const VolumeSample> test_set,
                       const TrainConfig& config);

EvalOptions eval_options_for(const VariantConfig& variant);

}  // namespace iag
