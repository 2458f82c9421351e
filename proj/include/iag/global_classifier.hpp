#pragma once

// Image-level MIL classifier: attention-weighted pooling of instance vectors
// followed by a linear head, plus the max/average score-pooling variants.

#include <cstdint>
#include <string_view>
#include <vector>

#include "iag/backbone.hpp"

namespace iag {

/// h = sum_x alpha_x f_x, shape [C].
Tensor pool_bag_feature(const FeatureMap& fm, const Tensor& weights);

/// P_g = sigmoid(w_g . h).
Tensor global_prob(const Tensor& bag, const Tensor& w_global);

/// Binary cross-entropy of one image-level prediction.
Tensor global_loss(const Tensor& prob, std::uint8_t label);

struct LabeledProb {
  Tensor prob;
  std::uint8_t label = 0;
};

/// Mean of global_loss over a nonempty batch.
Tensor global_loss_dataset(const std::vector<LabeledProb>& batch);

enum class ScorePooling { Max, Average };

ScorePooling parse_score_pooling(std::string_view name);

/// Bag logit taken directly from the attention field: max_x a_x or mean_x a_x.
Tensor pool_score_ablation(const Tensor& raw, ScorePooling mode);

}  // namespace iag
