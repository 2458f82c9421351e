#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "iag/error.hpp"
#include "iag/evaluation.hpp"
#include "iag/local_classifier.hpp"
#include "iag/model.hpp"
#include "oracles.hpp"

using namespace iag;
namespace fs = std::filesystem;

TEST_CASE("image-level decision is inclusive at 0.5") {
  CHECK(predict_image(0.5) == 1);
  CHECK(predict_image(0.49) == 0);
  CHECK(predict_image(1.0) == 1);
}

TEST_CASE("voxel decision p + q >= 1") {
  CHECK(predict_voxels(std::vector<double>{0.5}, std::vector<double>{0.5})[0] == 1);
  CHECK(predict_voxels(std::vector<double>{0.4}, std::vector<double>{0.5})[0] == 0);
  std::mt19937_64 rng(1);
  const auto p = oracle::random_vector(200, rng, 0, 1), q = oracle::random_vector(200, rng, 0, 1);
  const auto y = predict_voxels(p, q);
  for (std::size_t i = 0; i < 200; ++i) CHECK(y[i] == (p[i] + q[i] >= 1.0 ? 1 : 0));
  CHECK_THROWS(predict_voxels(p, std::vector<double>{0.1}));
}

TEST_CASE("dice coefficient") {
  const std::vector<std::uint8_t> a{1, 1, 0, 1, 0, 0, 1, 0, 0, 0};
  CHECK(*dsc(a, a) == 1.0);
  std::vector<std::uint8_t> inv(a.size());
  std::transform(a.begin(), a.end(), inv.begin(), [](auto v) { return std::uint8_t(1 - v); });
  CHECK(*dsc(a, inv) == 0.0);
  // |A| = 4, |B| = 6, overlap 3 -> 2*3/10
  const std::vector<std::uint8_t> b{1, 1, 0, 1, 1, 1, 0, 1, 0, 0};
  CHECK(*dsc(a, b) == doctest::Approx(0.6));
  CHECK_FALSE(dsc(std::vector<std::uint8_t>(5, 0), std::vector<std::uint8_t>(5, 0)));
  CHECK(*dsc(std::vector<std::uint8_t>(5, 0), std::vector<std::uint8_t>{1, 0, 0, 0, 0}) == 0.0);
}

TEST_CASE("sensitivity and specificity") {
  auto metrics = [](std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp) {
    std::vector<std::uint8_t> pred, truth;
    for (std::size_t i = 0; i < tp; ++i) pred.push_back(1), truth.push_back(1);
    for (std::size_t i = 0; i < fn; ++i) pred.push_back(0), truth.push_back(1);
    for (std::size_t i = 0; i < tn; ++i) pred.push_back(0), truth.push_back(0);
    for (std::size_t i = 0; i < fp; ++i) pred.push_back(1), truth.push_back(0);
    return classification_metrics(pred, truth);
  };
  auto perfect = metrics(5, 0, 5, 0);
  CHECK(*perfect.sensitivity == 1.0);
  CHECK(*perfect.specificity == 1.0);
  auto all_pos = metrics(5, 0, 0, 5);
  CHECK(*all_pos.sensitivity == 1.0);
  CHECK(*all_pos.specificity == 0.0);
  auto m = metrics(99, 1, 97, 3);
  CHECK(*m.sensitivity == doctest::Approx(0.99));
  CHECK(*m.specificity == doctest::Approx(0.97));
  CHECK(m.counts.fp == 3);
  auto no_neg = metrics(3, 1, 0, 0);
  CHECK_FALSE(no_neg.specificity);
}

TEST_CASE("DSC summary against a loop computation") {
  CHECK_FALSE(summarize_dsc({}));
  std::mt19937_64 rng(2);
  for (std::size_t n : {1u, 2u, 7u, 10u}) {
    const auto v = oracle::random_vector(n, rng, 0, 1);
    const auto s = *summarize_dsc(v);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2;
    CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.std == doctest::Approx(std::sqrt(var / n)).epsilon(1e-12));
    CHECK(s.max == sorted.back());
    CHECK(s.median == doctest::Approx(median).epsilon(1e-12));
    CHECK(s.count == n);
  }
}

TEST_CASE("report files round trip") {
  MetricsReport r;
  r.cases = {{"a", 1, 1, 0.9, 0.71234567890123}, {"b", 1, 0, 0.2, 0.0}, {"c", 0, 0, 0.1, std::nullopt},
             {"d", 0, 1, 0.6, std::nullopt}, {"e", 1, 1, 0.55, 0.333333333333333}};
  r.config = R"({"seed": 3})";
  finalize_report(r);
  const auto dir = fs::temp_directory_path() / "iag_test_report";
  fs::remove_all(dir);
  emit_report(r, dir);
  const auto back = parse_report(dir);
  REQUIRE(back.cases.size() == 5);
  REQUIRE(back.dsc);
  CHECK(std::abs(back.dsc->mean - r.dsc->mean) < 1e-12);
  CHECK(std::abs(back.dsc->std - r.dsc->std) < 1e-12);
  CHECK(std::abs(back.dsc->median - r.dsc->median) < 1e-12);
  CHECK(*back.classification.sensitivity == doctest::Approx(2.0 / 3));
  CHECK(*back.classification.specificity == doctest::Approx(0.5));
  CHECK(back.cases[2].dsc == std::nullopt);
  std::ifstream js(dir / kSummaryName);
  const auto doc = nlohmann::json::parse(js);
  CHECK(doc["config"]["seed"] == 3);
  CHECK(doc["confusion"]["fp"] == 1);
}

TEST_CASE("report without positive cases marks DSC absent") {
  MetricsReport r;
  r.cases = {{"n1", 0, 0, 0.1, std::nullopt}, {"n2", 0, 1, 0.7, std::nullopt}};
  finalize_report(r);
  CHECK_FALSE(r.dsc);
  const auto dir = fs::temp_directory_path() / "iag_test_report_empty";
  fs::remove_all(dir);
  emit_report(r, dir);
  std::ifstream js(dir / kSummaryName);
  const auto doc = nlohmann::json::parse(js);
  CHECK(doc["dsc"].is_null());
  CHECK(doc["sensitivity"].is_null());
  CHECK_FALSE(parse_report(dir).dsc);
  CHECK_THROWS_AS(parse_report(dir / "missing"), IoError);
}

TEST_CASE("volume prediction gating and decision rules") {
  GeneratorConfig g;
  g.count = 4;
  g.dims = {4, 8, 8};
  g.seed = 3;
  const auto ds = generate_dataset(g);
  BackboneConfig b;
  b.width = 4;
  auto p = init_params(b, 4);
  const auto& v = ds[0];
  EvalOptions opt;
  opt.gate_on_image_label = false;
  const auto pred = predict_volume(v, p, opt);
  const auto fwd = forward_image(v, p, all_slices(v), GlobalPooling::Attention);
  const auto q = instance_prob(fwd.features, p.w_local);
  for (std::size_t i = 0; i < pred.mask.size(); ++i)
    CHECK(pred.mask[i] == (fwd.attention.values()[i] + q.values()[i] >= 1.0));
  opt.voxel_rule = VoxelRule::AttentionOnly;
  const auto att = predict_volume(v, p, opt);
  for (std::size_t i = 0; i < att.mask.size(); ++i) CHECK(att.mask[i] == (fwd.attention.values()[i] >= 0.5));

  // Force a negative image decision; the gated mask is empty.
  for (auto& w : p.w_global.mutable_values()) w = 0.0;
  p.w_global.mutable_values()[0] = -1e6;
  opt = EvalOptions{};
  const auto gated = predict_volume(v, p, opt);
  if (gated.label == 0)
    CHECK(std::count(gated.mask.begin(), gated.mask.end(), 1) == 0);
}
