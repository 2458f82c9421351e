#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "iag/model.hpp"

namespace iag {

enum class Variant { Full, GlobalOnly, LocalOnly, MaxPool, AvgPool, ConstLambda, Pvpl, LabeledOnly };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct VariantConfig {
  Variant variant = Variant::Full;
  double lambda_const = 1.0;
};

/// Voxel decision rule used at test time.
enum class VoxelRule {
  AttentionPlusLocal,  // p_x + q_x >= 1
  AttentionOnly,       // p_x >= 0.5
};

/// Which loss paths a run assembles.
struct LossPaths {
  bool global = true;
  GlobalPooling pooling = GlobalPooling::Attention;
  bool attention = true;          // l_att on labeled positives
  bool labeled_local = true;      // l_L^l on labeled positives
  bool unlabeled_local = true;    // separation + l_L^u on unlabeled positives
  std::optional<double> fixed_lambda;  // replaces max_x p_x when set
  VoxelRule voxel_rule = VoxelRule::AttentionPlusLocal;

  bool local() const { return attention || labeled_local || unlabeled_local; }
};

/// Loss assembly for a variant; `Full` enables every path.
LossPaths apply_variant(const VariantConfig& config);

}  // namespace iag
