#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "iag/tensor.hpp"
#include "iag/volume.hpp"

namespace iag {

struct BackboneConfig {
  std::size_t depth = 3;     // number of conv layers
  std::size_t width = 16;    // channels of every layer, and C of the feature map
  std::size_t kernel = 3;
  std::size_t in_channels = 1;
};

struct ConvLayer {
  Tensor kernels;  // [Cout, Cin, k, k]
  Tensor bias;     // [Cout]
};

/// Backbone weights plus the three linear heads.
struct ModelParams {
  BackboneConfig config;
  std::vector<ConvLayer> layers;
  Tensor w_attention;  // [C]
  Tensor w_global;     // [C]
  Tensor w_local;      // [C]

  std::size_t channels() const { return config.width; }
  /// Every trainable tensor, in serialization order.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  /// Deep copy, detached from any tape.
  ModelParams clone() const;
  /// Throws if shapes are inconsistent or any value is non-finite.
  void validate() const;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every tensor, biases and
/// heads included; a pure function of (config, seed).
ModelParams init_params(const BackboneConfig& config, std::uint64_t seed);

/// Per-location instance vectors of a stack of slices, shape [L, H, W, C].
struct FeatureMap {
  Tensor features;
  std::size_t slices = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return slices * height * width; }
};

/// Runs each selected slice through the conv stack (relu between layers,
/// none after the last) and stacks the outputs along depth.
/// `slice_indices` must be nonempty and strictly increasing.
FeatureMap extract_features(const VolumeSample& volume, const ModelParams& params,
                            std::span<const std::size_t> slice_indices);

/// Every slice of the volume, in order.
std::vector<std::size_t> all_slices(const VolumeSample& volume);

// Model file: "IAGM" | u32 version | u32 depth | u32 width | u32 kernel | u32 in_channels
// followed by each tensor of ModelParams::tensors() as little-endian f64.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_params(const ModelParams& params);
ModelParams decode_params(std::span<const std::uint8_t> bytes);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace iag
