#include <doctest.h>

#include <algorithm>

#include "iag/baselines.hpp"
#include "iag/error.hpp"
#include "iag/model.hpp"

using namespace iag;

namespace {

std::vector<VolumeSample> toy(std::uint64_t seed, std::size_t count = 12) {
  GeneratorConfig g;
  g.count = count;
  g.dims = {4, 8, 8};
  g.seed = seed;
  return generate_dataset(g);
}

TrainConfig quick(std::size_t iters) {
  TrainConfig c;
  c.max_iters = iters;
  c.seed = 5;
  c.backbone.width = 4;
  c.clip_norm = 10.0;
  return c;
}

}  // namespace

TEST_CASE("subset_supervision keeps the first k of each kind plus all negatives") {
  const auto ds = toy(1, 16);
  const auto counts = count_positives(ds);
  REQUIRE(counts.labeled >= 2);
  REQUIRE(counts.unlabeled >= 2);
  const auto sub = subset_supervision(ds, 2, 1);
  const auto c2 = count_positives(sub);
  CHECK(c2.labeled == 2);
  CHECK(c2.unlabeled == 1);
  std::size_t negs = 0;
  for (const auto& s : ds) negs += !s.positive();
  CHECK(sub.size() == negs + 3);
  // Order preserved and the first labeled positive kept.
  const auto first_lab = std::find_if(ds.begin(), ds.end(), [](auto& s) { return s.has_voxel_labels; });
  CHECK(std::any_of(sub.begin(), sub.end(), [&](auto& s) { return s.id == first_lab->id; }));
  CHECK_THROWS_AS(subset_supervision(ds, counts.labeled + 1, 0), InvalidArgument);
}

TEST_CASE("pseudo-label mask thresholds the teacher attention at 0.5") {
  const auto ds = toy(2);
  BackboneConfig b;
  b.width = 4;
  const auto p = init_params(b, 3);
  const auto m = pseudo_label_mask(ds[0], p);
  const auto fwd = forward_image(ds[0], p, all_slices(ds[0]), GlobalPooling::Attention);
  REQUIRE(m.size() == ds[0].mask.size());
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == (fwd.attention.values()[i] >= kPseudoLabelThreshold));
}

TEST_CASE("a teacher with perfect attention reproduces the ground truth masks") {
  // Feature channel 0 of a one-layer identity backbone is the intensity; with
  // w_a large and a bias placing the threshold between organ and lesion
  // levels, p_x >= 0.5 exactly on lesion voxels of the generated phantoms
  // whose intensities do not overlap. We build such a teacher explicitly.
  auto ds = toy(3);
  BackboneConfig b;
  b.width = 1;
  b.depth = 1;
  b.kernel = 1;
  auto p = init_params(b, 1);
  p.layers[0].kernels.mutable_values()[0] = 1.0;
  p.layers[0].bias.mutable_values()[0] = 0.0;
  p.w_attention.mutable_values()[0] = 1.0;
  for (auto& s : ds) {
    if (!s.positive()) continue;
    // Make the phantom cleanly separable: lesion 1, everything else 0.
    for (std::size_t i = 0; i < s.voxels.size(); ++i) s.voxels[i] = s.mask[i] ? 1.0f : -1.0f;
    CHECK(pseudo_label_mask(s, p) == s.mask);
  }
}

TEST_CASE("PVPL with no unlabeled data equals a retrain on the labeled set") {
  const auto ds = toy(4);
  std::vector<VolumeSample> labeled;
  for (const auto& s : ds)
    if (s.has_voxel_labels) labeled.push_back(s);
  const auto cfg = quick(20);
  const auto res = pvpl_self_training(labeled, {}, cfg);
  CHECK(res.pseudo_labeled == 0);
  auto stage = cfg;
  stage.variant.variant = Variant::Pvpl;
  stage.max_iters = 12;  // 60 % of 20
  CHECK(encode_params(res.student) == encode_params(train(labeled, stage).params));
  CHECK(res.teacher_history.size() == 8);
  CHECK(res.student_history.size() == 12);
}

TEST_CASE("PVPL pseudo-labels unlabeled positives and rejects bad input") {
  const auto ds = toy(5);
  std::vector<VolumeSample> labeled, unlabeled;
  for (const auto& s : ds) (s.has_voxel_labels ? labeled : unlabeled).push_back(s);
  const auto res = pvpl_self_training(labeled, unlabeled, quick(10));
  CHECK(res.pseudo_labeled <= count_positives(unlabeled).unlabeled);
  CHECK_THROWS_AS(pvpl_self_training({}, unlabeled, quick(10)), InvalidArgument);
  CHECK_THROWS_AS(pvpl_self_training(unlabeled, labeled, quick(10)), InvalidArgument);
}

TEST_CASE("run_variant uses each variant's decision rules") {
  const auto ds = toy(6);
  CHECK(eval_options_for({Variant::Pvpl}).voxel_rule == VoxelRule::AttentionOnly);
  CHECK(eval_options_for({Variant::AvgPool}).pooling == GlobalPooling::Average);
  CHECK(eval_options_for({Variant::Full}).voxel_rule == VoxelRule::AttentionPlusLocal);
  auto cfg = quick(5);
  cfg.variant.variant = Variant::LabeledOnly;
  const auto run = run_variant(ds, ds, cfg);
  CHECK(run.report.cases.size() == ds.size());
  CHECK(run.unlabeled_branch_count == 0);
  CHECK(run.history.size() == 5);
}
