#include "iag/model.hpp"

#include "iag/attention.hpp"
#include "iag/global_classifier.hpp"
#include "iag/ops.hpp"

namespace iag {

ImageForward forward_image(const VolumeSample& volume, const ModelParams& params,
                           std::span<const std::size_t> slices, GlobalPooling pooling) {
  ImageForward out;
  out.features = extract_features(volume, params, slices);
  out.raw_attention = attention_values(out.features, params.w_attention);
  out.attention = attention_probs(out.raw_attention);
  switch (pooling) {
    case GlobalPooling::Attention: {
      const Tensor weights = attention_weights(out.raw_attention);
      out.global_prob = global_prob(pool_bag_feature(out.features, weights), params.w_global);
      break;
    }
    case GlobalPooling::Max:
      out.global_prob = sigmoid(pool_score_ablation(out.raw_attention, ScorePooling::Max));
      break;
    case GlobalPooling::Average:
      out.global_prob = sigmoid(pool_score_ablation(out.raw_attention, ScorePooling::Average));
      break;
  }
  return out;
}

}  // namespace iag
