#pragma once

// Differentiable primitives. Shapes are checked strictly: apart from
// multiplying by a plain scalar there is no broadcasting.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "iag/tensor.hpp"

namespace iag {

/// Lower bound applied to every logarithm argument.
inline constexpr double kLogClamp = 1e-12;

/// Same-padded 2-D cross-correlation.
/// input [Cin,H,W], kernels [Cout,Cin,k,k] with k odd, bias [Cout] -> [Cout,H,W].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

Tensor relu(const Tensor& x);

/// While alive on the current thread, records which relu inputs were
/// positive, in call order. Used by the gradient checker to spot finite
/// difference probes that straddle a kink.
class ReluTrace {
 public:
  ReluTrace();
  ~ReluTrace();
  ReluTrace(const ReluTrace&) = delete;
  ReluTrace& operator=(const ReluTrace&) = delete;
  const std::vector<bool>& pattern() const { return pattern_; }

 private:
  friend Tensor relu(const Tensor& x);
  std::vector<bool> pattern_;
  ReluTrace* previous_;
};
Tensor sigmoid(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Hard maximum; the gradient goes to the first (lowest index) maximiser.
Tensor max(const Tensor& x);

/// Inner product of two equal-length tensors -> scalar.
Tensor dot(const Tensor& a, const Tensor& b);

/// Max-shifted softmax over all entries; keeps the input shape.
Tensor softmax(const Tensor& x);

// Row operations view a tensor whose last extent is C as a stack of
// C-vectors (one per instance).

/// rows [.., C] times w [C] -> one value per row, shape = rows shape minus C.
Tensor project_rows(const Tensor& rows, const Tensor& w);
/// sum_i weights[i] * rows[i] -> [C]; `weights` holds one entry per row.
Tensor weighted_row_sum(const Tensor& rows, const Tensor& weights);
/// Mean of the selected rows -> [C]. Indices must be valid and nonempty.
Tensor mean_rows(const Tensor& rows, std::span<const std::size_t> indices);

/// Stacks per-slice channel-major maps [C,H,W] into channel-last [L,H,W,C].
Tensor stack_channel_last(const std::vector<Tensor>& slices);

/// -sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)] with clamped logarithms.
Tensor binary_cross_entropy(const Tensor& probs, std::span<const std::uint8_t> targets);
/// Single-probability form of the above.
Tensor binary_cross_entropy(const Tensor& prob, std::uint8_t target);

}  // namespace iag
