#include "iag/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "iag/error.hpp"
#include "iag/model.hpp"

namespace iag {

std::vector<VolumeSample> subset_supervision(std::span<const VolumeSample> dataset, std::size_t labeled,
                                             std::size_t unlabeled) {
  std::vector<VolumeSample> out;
  std::size_t kept_l = 0, kept_u = 0;
  for (const auto& s : dataset) {
    if (!s.positive()) {
      out.push_back(s);
    } else if (s.has_voxel_labels) {
      if (kept_l++ < labeled) out.push_back(s);
    } else if (kept_u++ < unlabeled) {
      out.push_back(s);
    }
  }
  if (kept_l < labeled || kept_u < unlabeled)
    throw InvalidArgument("subset_supervision: dataset has " + std::to_string(kept_l) + " labeled and " +
                          std::to_string(kept_u) + " unlabeled positives");
  return out;
}

std::vector<std::uint8_t> pseudo_label_mask(const VolumeSample& volume, const ModelParams& teacher) {
  const auto slices = all_slices(volume);
  const auto fwd = forward_image(volume, teacher, slices, GlobalPooling::Attention);
  std::vector<std::uint8_t> mask(fwd.attention.size());
  const auto p = fwd.attention.values();
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = p[i] >= kPseudoLabelThreshold ? 1 : 0;
  return mask;
}

PvplResult pvpl_self_training(std::span<const VolumeSample> labeled, std::span<const VolumeSample> unlabeled,
                              const TrainConfig& config) {
  if (labeled.empty()) throw InvalidArgument("pvpl_self_training: empty labeled set");
  for (const auto& s : labeled)
    if (!s.has_voxel_labels) throw InvalidArgument("pvpl_self_training: labeled set holds " + s.id + " without voxel labels");

  TrainConfig stage = config;
  stage.variant.variant = Variant::Pvpl;
  const auto teacher_iters = static_cast<std::size_t>(std::llround(kTeacherBudget * static_cast<double>(config.max_iters)));

  std::vector<VolumeSample> teacher_set(labeled.begin(), labeled.end());
  teacher_set.insert(teacher_set.end(), unlabeled.begin(), unlabeled.end());
  stage.max_iters = teacher_iters;
  TrainState teacher = train(teacher_set, stage);

  PvplResult result;
  std::vector<VolumeSample> student_set(labeled.begin(), labeled.end());
  for (const auto& s : unlabeled) {
    VolumeSample copy = s;
    if (s.positive() && !s.has_voxel_labels) {
      auto mask = pseudo_label_mask(s, teacher.params);
      if (std::find(mask.begin(), mask.end(), 1) != mask.end()) {
        copy.mask = std::move(mask);
        copy.has_voxel_labels = true;
        ++result.pseudo_labeled;
      }
    }
    student_set.push_back(std::move(copy));
  }

  stage.max_iters = config.max_iters - teacher_iters;
  TrainState student = train(student_set, stage);

  result.teacher = std::move(teacher.params);
  result.student = std::move(student.params);
  result.teacher_history = std::move(teacher.history);
  result.student_history = std::move(student.history);
  return result;
}

EvalOptions eval_options_for(const VariantConfig& variant) {
  const LossPaths paths = apply_variant(variant);
  EvalOptions opt;
  opt.pooling = paths.pooling;
  opt.voxel_rule = paths.voxel_rule;
  return opt;
}

VariantRun run_variant(std::span<const VolumeSample> train_set, std::span<const VolumeSample> test_set,
                       const TrainConfig& config) {
  VariantRun run;
  if (config.variant.variant == Variant::Pvpl) {
    std::vector<VolumeSample> labeled, unlabeled;
    for (const auto& s : train_set) (s.has_voxel_labels ? labeled : unlabeled).push_back(s);
    auto pvpl = pvpl_self_training(labeled, unlabeled, config);
    run.params = std::move(pvpl.student);
    run.history = std::move(pvpl.teacher_history);
    run.history.insert(run.history.end(), pvpl.student_history.begin(), pvpl.student_history.end());
  } else {
    auto state = train(train_set, config);
    run.params = std::move(state.params);
    run.history = std::move(state.history);
    run.unlabeled_branch_count = state.unlabeled_branch_count;
  }
  run.report = evaluate(test_set, run.params, eval_options_for(config.variant));
  return run;
}

}  // namespace iag
