#include "iag/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iag/error.hpp"
#include "iag/local_classifier.hpp"
#include "iag/model.hpp"

namespace iag {

std::uint8_t predict_image(double global_prob) { return global_prob >= 0.5 ? 1 : 0; }

std::vector<std::uint8_t> predict_voxels(std::span<const double> attention, std::span<const double> local) {
  if (attention.size() != local.size())
    throw ShapeError("predict_voxels: fields of " + std::to_string(attention.size()) + " and " +
                     std::to_string(local.size()) + " locations");
  std::vector<std::uint8_t> out(attention.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = attention[i] + local[i] >= 1.0 ? 1 : 0;
  return out;
}

std::optional<double> dsc(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) throw ShapeError("dsc: masks differ in size");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    a += pred[i] != 0;
    b += truth[i] != 0;
    both += pred[i] && truth[i];
  }
  if (a + b == 0) return std::nullopt;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

ClassificationMetrics classification_metrics(std::span<const std::uint8_t> predicted,
                                             std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("classification_metrics: label lists differ in length");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i])
      ++(predicted[i] ? m.counts.tp : m.counts.fn);
    else
      ++(predicted[i] ? m.counts.fp : m.counts.tn);
  }
  if (m.counts.tp + m.counts.fn > 0)
    m.sensitivity = static_cast<double>(m.counts.tp) / static_cast<double>(m.counts.tp + m.counts.fn);
  if (m.counts.tn + m.counts.fp > 0)
    m.specificity = static_cast<double>(m.counts.tn) / static_cast<double>(m.counts.tn + m.counts.fp);
  return m;
}

std::optional<DscSummary> summarize_dsc(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  DscSummary s;
  s.count = values.size();
  const double n = static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.max = sorted.back();
  const std::size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

std::vector<double> MetricsReport::dsc_values() const {
  std::vector<double> out;
  for (const auto& c : cases)
    if (c.dsc) out.push_back(*c.dsc);
  return out;
}

void finalize_report(MetricsReport& report) {
  const auto values = report.dsc_values();
  report.dsc = summarize_dsc(values);
  std::vector<std::uint8_t> pred, truth;
  for (const auto& c : report.cases) {
    pred.push_back(c.pred_label);
    truth.push_back(c.true_label);
  }
  report.classification = classification_metrics(pred, truth);
}

VolumePrediction predict_volume(const VolumeSample& volume, const ModelParams& params, const EvalOptions& options) {
  const auto slices = all_slices(volume);
  const ImageForward fwd = forward_image(volume, params, slices, options.pooling);
  VolumePrediction out;
  out.global_prob = fwd.global_prob.item();
  out.label = predict_image(out.global_prob);

  const auto p = fwd.attention.values();
  if (options.voxel_rule == VoxelRule::AttentionPlusLocal) {
    const Tensor q = instance_prob(fwd.features, params.w_local);
    out.mask = predict_voxels(p, q.values());
  } else {
    out.mask.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out.mask[i] = p[i] >= 0.5 ? 1 : 0;
  }
  if (options.gate_on_image_label && !out.label) std::fill(out.mask.begin(), out.mask.end(), 0);
  return out;
}

MetricsReport evaluate(std::span<const VolumeSample> test_set, const ModelParams& params, const EvalOptions& options) {
  MetricsReport report;
  for (const auto& volume : test_set) {
    const auto pred = predict_volume(volume, params, options);
    CaseResult c;
    c.case_id = volume.id;
    c.true_label = volume.image_label;
    c.pred_label = pred.label;
    c.global_prob = pred.global_prob;
    if (volume.positive()) c.dsc = dsc(pred.mask, volume.mask);
    report.cases.push_back(std::move(c));
  }
  finalize_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Report files

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw IoError("cannot parse " + what + " '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::ofstream csv(dir / kCasesName, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (dir / kCasesName).string());
  csv << "case_id,true_label,pred_label,P_g,dsc\n";
  for (const auto& c : report.cases)
    csv << c.case_id << ',' << int(c.true_label) << ',' << int(c.pred_label) << ',' << format_double(c.global_prob)
        << ',' << (c.dsc ? format_double(*c.dsc) : "") << '\n';
  if (!csv) throw IoError("write failed: " + (dir / kCasesName).string());

  nlohmann::json doc;
  if (report.dsc) {
    const auto& d = *report.dsc;
    doc["dsc"] = {{"mean", d.mean}, {"std", d.std}, {"max", d.max}, {"median", d.median}, {"count", d.count}};
    char row[128];
    std::snprintf(row, sizeof row, "%.2f +/- %.2f (%.2f, %.2f)", 100 * d.mean, 100 * d.std, 100 * d.max,
                  100 * d.median);
    doc["dsc_row"] = row;
  } else {
    doc["dsc"] = nullptr;
    doc["dsc_row"] = "absent (no ground-truth positive cases)";
  }
  const auto& cls = report.classification;
  doc["sensitivity"] = optional_json(cls.sensitivity);
  doc["specificity"] = optional_json(cls.specificity);
  doc["confusion"] = {{"tp", cls.counts.tp}, {"fn", cls.counts.fn}, {"tn", cls.counts.tn}, {"fp", cls.counts.fp}};
  if (!report.config.empty()) {
    const auto parsed = nlohmann::json::parse(report.config, nullptr, false);
    doc["config"] = parsed.is_discarded() ? nlohmann::json(report.config) : parsed;
  }

  std::ofstream js(dir / kSummaryName, std::ios::trunc);
  if (!js) throw IoError("cannot write " + (dir / kSummaryName).string());
  js << doc.dump(2) << '\n';
  if (!js) throw IoError("write failed: " + (dir / kSummaryName).string());
}

MetricsReport parse_report(const std::filesystem::path& dir) {
  std::ifstream csv(dir / kCasesName);
  if (!csv) throw IoError("cannot open " + (dir / kCasesName).string());
  MetricsReport report;
  std::string line;
  if (!std::getline(csv, line) || line != "case_id,true_label,pred_label,P_g,dsc")
    throw IoError("unexpected header in " + (dir / kCasesName).string());
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw IoError("malformed case row '" + line + "'");
    CaseResult c;
    c.case_id = f[0];
    c.true_label = static_cast<std::uint8_t>(parse_double(f[1], "true_label") != 0.0);
    c.pred_label = static_cast<std::uint8_t>(parse_double(f[2], "pred_label") != 0.0);
    c.global_prob = parse_double(f[3], "P_g");
    if (!f[4].empty()) c.dsc = parse_double(f[4], "dsc");
    report.cases.push_back(std::move(c));
  }

  std::ifstream js(dir / kSummaryName);
  if (js) {
    const auto doc = nlohmann::json::parse(js, nullptr, false);
    if (!doc.is_discarded() && doc.contains("config")) report.config = doc["config"].dump();
  }
  finalize_report(report);
  return report;
}

}  // namespace iag
