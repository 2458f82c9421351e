#pragma once

// Local (instance-level) classifier trained by MIL on attention-separated
// bags, plus the per-voxel loss for annotated volumes.

#include <cstddef>
#include <cstdint>
#include <span>

#include "iag/backbone.hpp"

namespace iag {

/// Mean of the member instance vectors, shape [C]. Membership is fixed data.
Tensor bag_feature(const FeatureMap& fm, std::span<const std::size_t> members);

/// P_c = sigmoid(w_l . bag).
Tensor bag_prob(const Tensor& bag, const Tensor& w_local);

/// q_x = sigmoid(w_l . f_x), shape [L,H,W].
Tensor instance_prob(const FeatureMap& fm, const Tensor& w_local);

/// -[log P_fg + log(1 - P_bg)]: the foreground bag carries pseudo-label 1,
/// the background bag pseudo-label 0.
Tensor unlabeled_mil_loss(const Tensor& prob_fg, const Tensor& prob_bg);

/// Summed per-voxel cross-entropy of q against the mask.
Tensor labeled_instance_loss(const Tensor& q, std::span<const std::uint8_t> mask);

/// max_x p_x, used as a constant reliability weight.
double adaptive_lambda(std::span<const double> probs);

/// Counts of positive training volumes with and without voxel labels.
struct PositiveCounts {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
};

/// Per-sample contributions to the local objective. Absent terms are
/// undefined tensors.
struct LocalTerms {
  Tensor attention;        // l_att, labeled positives
  Tensor labeled_local;    // l_L^l, labeled positives
  Tensor unlabeled_local;  // l_L^u, unlabeled positives with a valid separation
  double lambda = 0.0;     // weight applied to unlabeled_local
};

/// Weighted per-sample local loss:
///   labeled:   (l_att + l_L^l) / N_p^l
///   unlabeled: lambda * l_L^u / N_p^u
/// Returns an undefined tensor when nothing contributes (negatives, skipped
/// separations).
Tensor local_loss(const LocalTerms& terms, const PositiveCounts& counts);

}  // namespace iag
