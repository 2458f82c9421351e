#include "iag/global_classifier.hpp"

#include <string>

#include "iag/error.hpp"
#include "iag/ops.hpp"

namespace iag {

Tensor pool_bag_feature(const FeatureMap& fm, const Tensor& weights) {
  if (weights.size() != fm.size())
    throw ShapeError("pool_bag_feature: " + std::to_string(weights.size()) + " weights for a lattice of " +
                     std::to_string(fm.size()));
  return weighted_row_sum(fm.features, weights);
}

Tensor global_prob(const Tensor& bag, const Tensor& w_global) {
  if (bag.size() != w_global.size())
    throw ShapeError("global_prob: bag feature " + shape_string(bag.shape()) + " vs head " +
                     shape_string(w_global.shape()));
  return sigmoid(dot(w_global, bag));
}

Tensor global_loss(const Tensor& prob, std::uint8_t label) { return binary_cross_entropy(prob, label); }

Tensor global_loss_dataset(const std::vector<LabeledProb>& batch) {
  if (batch.empty()) throw InvalidArgument("global_loss_dataset: empty batch");
  Tensor total = global_loss(batch.front().prob, batch.front().label);
  for (std::size_t i = 1; i < batch.size(); ++i) total = add(total, global_loss(batch[i].prob, batch[i].label));
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

ScorePooling parse_score_pooling(std::string_view name) {
  if (name == "max") return ScorePooling::Max;
  if (name == "average" || name == "avg") return ScorePooling::Average;
  throw InvalidArgument("unknown score pooling mode '" + std::string(name) + "'");
}

Tensor pool_score_ablation(const Tensor& raw, ScorePooling mode) {
  switch (mode) {
    case ScorePooling::Max:
      return max(raw);
    case ScorePooling::Average:
      return mean(raw);
  }
  throw InvalidArgument("unknown score pooling mode");
}

}  // namespace iag
