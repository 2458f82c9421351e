#pragma once

// Test-time decision rules, segmentation/classification metrics and the
// report files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iag/backbone.hpp"
#include "iag/variants.hpp"

namespace iag {

/// 1 iff P_g >= 0.5.
std::uint8_t predict_image(double global_prob);

/// y_x = 1 iff p_x + q_x >= 1.
std::vector<std::uint8_t> predict_voxels(std::span<const double> attention, std::span<const double> local);

/// 2|A & B| / (|A| + |B|); nullopt when both masks are empty.
std::optional<double> dsc(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

struct ConfusionCounts {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
};

struct ClassificationMetrics {
  ConfusionCounts counts;
  std::optional<double> sensitivity;  // absent without true positives in the truth
  std::optional<double> specificity;  // absent without true negatives in the truth
};

ClassificationMetrics classification_metrics(std::span<const std::uint8_t> predicted,
                                             std::span<const std::uint8_t> truth);

struct DscSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double max = 0.0;
  double median = 0.0;
  std::size_t count = 0;
};

/// Nullopt for an empty list.
std::optional<DscSummary> summarize_dsc(std::span<const double> values);

struct CaseResult {
  std::string case_id;
  std::uint8_t true_label = 0;
  std::uint8_t pred_label = 0;
  double global_prob = 0.0;
  std::optional<double> dsc;  // set only for ground-truth positive cases
};

struct MetricsReport {
  std::vector<CaseResult> cases;
  std::optional<DscSummary> dsc;
  ClassificationMetrics classification;
  std::string config;  // free-form echo of the producing configuration (JSON)

  std::vector<double> dsc_values() const;
};

/// Fills the aggregate fields from `cases`.
void finalize_report(MetricsReport& report);

struct EvalOptions {
  GlobalPooling pooling = GlobalPooling::Attention;
  VoxelRule voxel_rule = VoxelRule::AttentionPlusLocal;
  /// Segment only volumes classified positive (predicted masks of volumes
  /// classified negative are empty).
  bool gate_on_image_label = true;
};

/// Predicted mask and image probability for one volume (all slices).
struct VolumePrediction {
  double global_prob = 0.0;
  std::uint8_t label = 0;
  std::vector<std::uint8_t> mask;
};

VolumePrediction predict_volume(const VolumeSample& volume, const ModelParams& params, const EvalOptions& options);

MetricsReport evaluate(std::span<const VolumeSample> test_set, const ModelParams& params, const EvalOptions& options);

inline constexpr const char* kSummaryName = "summary.json";
inline constexpr const char* kCasesName = "cases.csv";

/// Writes summary.json and cases.csv into `dir`.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir);
/// Re-reads cases.csv (and the config echo) and recomputes the aggregates.
MetricsReport parse_report(const std::filesystem::path& dir);

}  // namespace iag
