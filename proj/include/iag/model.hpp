#pragma once

// Shared forward pass: features, attention field and image-level probability.

#include <span>

#include "iag/backbone.hpp"

namespace iag {

/// How the image-level logit is formed from the lattice.
enum class GlobalPooling {
  Attention,  // softmax(a)-weighted instance features, then w_g
  Max,        // max_x a_x
  Average,    // mean_x a_x
};

struct ImageForward {
  FeatureMap features;
  Tensor raw_attention;  // a_x, [L,H,W]
  Tensor attention;      // p_x
  Tensor global_prob;    // P_g, [1]
};

ImageForward forward_image(const VolumeSample& volume, const ModelParams& params,
                           std::span<const std::size_t> slices, GlobalPooling pooling);

}  // namespace iag
