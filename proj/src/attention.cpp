#include "iag/attention.hpp"

#include "iag/error.hpp"
#include "iag/ops.hpp"

namespace iag {

Tensor attention_values(const FeatureMap& fm, const Tensor& w_attention) {
  if (w_attention.size() != fm.channels)
    throw ShapeError("attention_values: w_a has " + std::to_string(w_attention.size()) + " entries, features have " +
                     std::to_string(fm.channels) + " channels");
  return project_rows(fm.features, w_attention);
}

Tensor attention_probs(const Tensor& raw) { return sigmoid(raw); }

Tensor attention_loss(const Tensor& probs, std::span<const std::uint8_t> mask) {
  if (mask.size() != probs.size())
    throw ShapeError("attention_loss: mask has " + std::to_string(mask.size()) + " labels for a lattice of " +
                     std::to_string(probs.size()));
  return binary_cross_entropy(probs, mask);
}

Tensor attention_weights(const Tensor& raw) { return softmax(raw); }

AttentionExport export_field(const FeatureMap& fm, const Tensor& field) {
  if (field.size() != fm.size()) throw ShapeError("export_field: field does not match the lattice");
  return {fm.slices, fm.height, fm.width, std::vector<double>(field.values().begin(), field.values().end())};
}

}  // namespace iag
