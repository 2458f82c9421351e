#include <doctest.h>

#include <cmath>

#include "iag/attention.hpp"
#include "iag/error.hpp"
#include "iag/global_classifier.hpp"
#include "iag/model.hpp"
#include "iag/ops.hpp"
#include "oracles.hpp"

using namespace iag;

namespace {

FeatureMap random_map(std::size_t l, std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng) {
  FeatureMap fm;
  fm.features = Tensor({l, h, w, c}, oracle::random_vector(l * h * w * c, rng));
  fm.slices = l;
  fm.height = h;
  fm.width = w;
  fm.channels = c;
  return fm;
}

}  // namespace

TEST_CASE("attention values") {
  std::mt19937_64 rng(1);
  auto fm = random_map(2, 3, 4, 5, rng);
  CHECK(attention_values(fm, Tensor({5}, 0.0)).shape() == Shape{2, 3, 4});
  const auto zero = attention_values(fm, Tensor({5}, 0.0));
  for (double a : zero.values()) CHECK(a == 0.0);

  FeatureMap unit;
  std::vector<double> f(1 * 1 * 1 * 3, 0.0);
  f[0] = 1.0;
  unit.features = Tensor({1, 1, 1, 3}, f);
  unit.slices = unit.height = unit.width = 1;
  unit.channels = 3;
  CHECK(attention_values(unit, Tensor({3}, std::vector<double>{2, 3, 4})).item() == 2.0);

  const auto w = oracle::random_vector(5, rng);
  const auto a = attention_values(fm, Tensor({5}, w));
  for (std::size_t x = 0; x < fm.size(); ++x) {
    double d = 0;
    for (std::size_t c = 0; c < 5; ++c) d += fm.features.values()[x * 5 + c] * w[c];
    CHECK(a.values()[x] == doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("attention loss") {
  const std::size_t n = 10;
  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = i % 4 == 1;
  CHECK(attention_loss(Tensor({n}, 0.5), mask).item() == doctest::Approx(n * std::log(2.0)));
  std::vector<double> perfect(mask.begin(), mask.end());
  const double near_zero = attention_loss(Tensor({n}, perfect), mask).item();
  CHECK(near_zero >= 0.0);
  CHECK(near_zero < 1e-6 * n * std::abs(std::log(kLogClamp)));
  std::mt19937_64 rng(2);
  const auto p = oracle::random_vector(n, rng, 0.01, 0.99);
  double expect = 0;
  for (std::size_t i = 0; i < n; ++i) expect += oracle::bce(p[i], mask[i]);
  CHECK(attention_loss(Tensor({n}, p), mask).item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS(attention_loss(Tensor({n}, 0.5), std::vector<std::uint8_t>(n - 1)));
}

TEST_CASE("attention gradient through w_a passes finite differences") {
  std::mt19937_64 rng(3);
  auto fm = random_map(1, 3, 3, 4, rng);
  const auto wv = oracle::random_vector(4, rng);
  std::vector<std::uint8_t> mask(9, 0);
  mask[4] = mask[5] = 1;
  Tensor w({4}, wv);
  Tape tape;
  tape.watch(w);
  tape.backward(attention_loss(attention_probs(attention_values(fm, w)), mask));
  auto loss = [&](const std::vector<double>& v) {
    return attention_loss(attention_probs(attention_values(fm, Tensor({4}, v))), mask).item();
  };
  for (std::size_t i = 0; i < 4; ++i) CHECK(oracle::rel_err(w.grad()[i], oracle::central_difference(loss, wv, i)) < 1e-4);
}

TEST_CASE("softmax pooling weights") {
  std::mt19937_64 rng(4);
  const auto a = oracle::random_vector(30, rng, -5, 5);
  const auto alpha = attention_weights(Tensor({2, 3, 5}, a));
  double s = 0;
  for (double v : alpha.values()) s += v;
  CHECK(std::abs(s - 1.0) < 1e-9);
  auto shifted = a;
  for (auto& v : shifted) v += 123.4;
  const auto beta = attention_weights(Tensor({2, 3, 5}, shifted));
  for (std::size_t i = 0; i < 30; ++i) CHECK(std::abs(alpha.values()[i] - beta.values()[i]) < 1e-12);
}

TEST_CASE("bag feature pooling") {
  std::mt19937_64 rng(5);
  auto fm = random_map(1, 2, 3, 4, rng);
  const std::size_t n = 6;
  const auto uniform = pool_bag_feature(fm, Tensor({1, 2, 3}, 1.0 / n));
  std::vector<double> onehot(n, 0.0);
  onehot[4] = 1.0;
  const auto delta = pool_bag_feature(fm, Tensor({1, 2, 3}, onehot));
  const auto wts = oracle::random_vector(n, rng, 0, 1);
  const auto random = pool_bag_feature(fm, Tensor({1, 2, 3}, wts));
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, r = 0;
    for (std::size_t x = 0; x < n; ++x) {
      m += fm.features.values()[x * 4 + c];
      r += wts[x] * fm.features.values()[x * 4 + c];
    }
    CHECK(uniform.values()[c] == doctest::Approx(m / n).epsilon(1e-12));
    CHECK(delta.values()[c] == fm.features.values()[4 * 4 + c]);
    CHECK(random.values()[c] == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("global probability and loss") {
  std::mt19937_64 rng(6);
  const auto h = oracle::random_vector(4, rng);
  const auto w = oracle::random_vector(4, rng);
  CHECK(global_prob(Tensor({4}, h), Tensor({4}, 0.0)).item() == 0.5);
  CHECK(global_prob(Tensor({4}, std::vector<double>{1, -1, 0, 0}), Tensor({4}, 1.0)).item() == 0.5);
  double d = 0;
  for (int i = 0; i < 4; ++i) d += h[i] * w[i];
  CHECK(global_prob(Tensor({4}, h), Tensor({4}, w)).item() == doctest::Approx(oracle::sigmoid(d)).epsilon(1e-12));

  CHECK(global_loss(Tensor::scalar(0.5), 1).item() == doctest::Approx(std::log(2.0)));
  CHECK(global_loss(Tensor::scalar(1.0 - 1e-15), 1).item() < 1e-12);
  CHECK(global_loss(Tensor::scalar(0.25), 0).item() == doctest::Approx(0.28768207245178).epsilon(1e-12));
}

TEST_CASE("dataset global loss is the batch mean") {
  std::vector<LabeledProb> one{{Tensor::scalar(0.3), 1}};
  CHECK(global_loss_dataset(one).item() == doctest::Approx(-std::log(0.3)));
  std::vector<LabeledProb> two{{Tensor::scalar(0.3), 1}, {Tensor::scalar(0.3), 1}};
  CHECK(global_loss_dataset(two).item() == doctest::Approx(-std::log(0.3)));
  std::mt19937_64 rng(7);
  const auto p = oracle::random_vector(9, rng, 0.05, 0.95);
  std::vector<LabeledProb> batch;
  double expect = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    batch.push_back({Tensor::scalar(p[i]), static_cast<std::uint8_t>(i % 2)});
    expect += oracle::bce(p[i], i % 2);
  }
  CHECK(global_loss_dataset(batch).item() == doctest::Approx(expect / 9).epsilon(1e-12));
  CHECK_THROWS_AS(global_loss_dataset({}), InvalidArgument);
}

TEST_CASE("score pooling ablations") {
  Tensor raw({3}, std::vector<double>{1, 3, 2});
  CHECK(pool_score_ablation(raw, ScorePooling::Max).item() == 3.0);
  CHECK(pool_score_ablation(raw, ScorePooling::Average).item() == 2.0);
  CHECK(parse_score_pooling("max") == ScorePooling::Max);
  CHECK_THROWS_AS(parse_score_pooling("median"), InvalidArgument);
}

TEST_CASE("forward_image wires attention and the pooling choice") {
  BackboneConfig cfg;
  cfg.width = 3;
  const auto p = init_params(cfg, 8);
  VolumeSample v;
  v.id = "v";
  v.dims = {2, 5, 5};
  std::mt19937_64 rng(9);
  for (std::size_t i = 0; i < v.dims.voxels(); ++i) v.voxels.push_back(static_cast<float>(i % 7) / 7.0f);
  v.mask.assign(v.dims.voxels(), 0);
  const auto sl = all_slices(v);
  const auto att = forward_image(v, p, sl, GlobalPooling::Attention);
  const auto avg = forward_image(v, p, sl, GlobalPooling::Average);
  const auto mx = forward_image(v, p, sl, GlobalPooling::Max);
  double mean_a = 0, max_a = -INFINITY;
  for (double a : att.raw_attention.values()) {
    mean_a += a;
    max_a = std::max(max_a, a);
  }
  mean_a /= static_cast<double>(att.raw_attention.size());
  CHECK(avg.global_prob.item() == doctest::Approx(oracle::sigmoid(mean_a)).epsilon(1e-12));
  CHECK(mx.global_prob.item() == doctest::Approx(oracle::sigmoid(max_a)).epsilon(1e-12));
  for (std::size_t i = 0; i < att.raw_attention.size(); ++i)
    CHECK(att.attention.values()[i] == doctest::Approx(oracle::sigmoid(att.raw_attention.values()[i])));
}
