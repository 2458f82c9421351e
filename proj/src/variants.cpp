#include "iag/variants.hpp"

#include <array>
#include <utility>

#include "iag/error.hpp"

namespace iag {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 8> kNames = {{
    {Variant::Full, "full"},
    {Variant::GlobalOnly, "global_only"},
    {Variant::LocalOnly, "local_only"},
    {Variant::MaxPool, "max_pool"},
    {Variant::AvgPool, "avg_pool"},
    {Variant::ConstLambda, "const_lambda"},
    {Variant::Pvpl, "pvpl"},
    {Variant::LabeledOnly, "labeled_only"},
}};

}  // namespace

Variant parse_variant(std::string_view name) {
  for (const auto& [v, n] : kNames)
    if (n == name) return v;
  throw InvalidArgument("unknown variant '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) {
  for (const auto& [value, n] : kNames)
    if (value == v) return n;
  return "unknown";
}

LossPaths apply_variant(const VariantConfig& config) {
  LossPaths p;
  switch (config.variant) {
    case Variant::Full:
      break;
    case Variant::GlobalOnly:
      p.attention = p.labeled_local = p.unlabeled_local = false;
      break;
    case Variant::LocalOnly:
      p.global = false;
      break;
    case Variant::MaxPool:
      p.pooling = GlobalPooling::Max;
      break;
    case Variant::AvgPool:
      p.pooling = GlobalPooling::Average;
      break;
    case Variant::ConstLambda:
      if (!(config.lambda_const >= 0.0)) throw InvalidArgument("lambda constant must be nonnegative");
      p.fixed_lambda = config.lambda_const;
      break;
    case Variant::Pvpl:
      // Teacher and student both train attention + global streams only.
      p.labeled_local = p.unlabeled_local = false;
      p.voxel_rule = VoxelRule::AttentionOnly;
      break;
    case Variant::LabeledOnly:
      p.unlabeled_local = false;
      break;
    default:
      throw InvalidArgument("unknown variant");
  }
  return p;
}

}  // namespace iag
