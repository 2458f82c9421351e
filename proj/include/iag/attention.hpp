#pragma once

// Explicitly learned attention head.

#include <cstdint>
#include <span>
#include <vector>

#include "iag/backbone.hpp"

namespace iag {

/// Raw attention a_x = w_a . f_x for every lattice location, shape [L,H,W].
Tensor attention_values(const FeatureMap& fm, const Tensor& w_attention);

/// p_x = sigmoid(a_x).
Tensor attention_probs(const Tensor& raw);

/// Summed per-location cross-entropy between p_x and voxel labels.
Tensor attention_loss(const Tensor& probs, std::span<const std::uint8_t> mask);

/// Softmax over the whole lattice (max-shifted).
Tensor attention_weights(const Tensor& raw);

/// Plain copy of a field, for reporting.
struct AttentionExport {
  std::size_t slices = 0, height = 0, width = 0;
  std::vector<double> values;
};
AttentionExport export_field(const FeatureMap& fm, const Tensor& field);

}  // namespace iag
