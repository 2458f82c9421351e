#include "iag/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "iag/error.hpp"

namespace iag {

namespace {

using detail::grad_sink;
using detail::Node;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

const std::shared_ptr<Node>& node_of(const Tensor& t) { return TensorAccess::node(t); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

std::size_t row_width(const Tensor& rows, const Tensor& w, const char* op) {
  if (w.rank() != 1) throw ShapeError(std::string(op) + ": weight vector must be rank 1");
  if (rows.shape().back() != w.size())
    throw ShapeError(std::string(op) + ": rows " + shape_string(rows.shape()) +
                     " incompatible with vector " + shape_string(w.shape()));
  return w.size();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 3 || kernels.rank() != 4 || bias.rank() != 1)
    throw ShapeError("conv2d: expected input [Cin,H,W], kernels [Cout,Cin,k,k], bias [Cout]; got " +
                     shape_string(input.shape()) + ", " + shape_string(kernels.shape()) + ", " +
                     shape_string(bias.shape()));
  const std::size_t cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t cout = kernels.shape()[0], k = kernels.shape()[2];
  if (kernels.shape()[1] != cin || kernels.shape()[3] != k || bias.size() != cout || k % 2 == 0)
    throw ShapeError("conv2d: inconsistent shapes input " + shape_string(input.shape()) +
                     ", kernels " + shape_string(kernels.shape()) + ", bias " +
                     shape_string(bias.shape()) + " (kernel extent must be odd)");

  const long pad = static_cast<long>(k / 2);
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  const std::size_t plane = h * w;
  const std::size_t taps = cin * k * k;

  // Calls body(tap row, output offset, input offset, x0, x1) for every row
  // segment of the unfolded input that overlaps the image.
  auto for_segments = [=](auto&& body) {
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t row = (i * k + ky) * k + kx;
          const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
          const long y0 = std::max(0L, -dy), y1 = std::min(H, H - dy);
          const long x0 = std::max(0L, -dx), x1 = std::min(W, W - dx);
          for (long y = y0; y < y1; ++y)
            body(row, static_cast<std::size_t>(y * W), i * plane + static_cast<std::size_t>((y + dy) * W + dx), x0,
                 x1);
        }
  };

  // Unfolded input: one row per (channel, ky, kx) tap, one column per pixel.
  auto cols = std::make_shared<RowMatrix>(RowMatrix::Zero(static_cast<Eigen::Index>(taps),
                                                          static_cast<Eigen::Index>(plane)));
  const double* in = input.values().data();
  for_segments([&](std::size_t row, std::size_t orow, std::size_t irow, long x0, long x1) {
    double* dst = cols->data() + row * plane + orow;
    const double* src = in + irow;
    for (long x = x0; x < x1; ++x) dst[x] = src[x];
  });

  const auto kmat = ConstMap(kernels.values().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(taps));
  const Eigen::Map<const Eigen::VectorXd> bvec(bias.values().data(), static_cast<Eigen::Index>(cout));
  std::vector<double> out(cout * plane);
  MutMap omat(out.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
  omat.noalias() = kmat * *cols;
  omat.colwise() += bvec;

  auto in_n = node_of(input), k_n = node_of(kernels), b_n = node_of(bias);
  return make_result(
      Shape{cout, h, w}, std::move(out), {&input, &kernels, &bias},
      [=](const Node& self) {
        const auto gmat =
            ConstMap(self.grad.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
        if (auto* gb = grad_sink(*b_n)) {
          Eigen::Map<Eigen::VectorXd> gbv(gb->data(), static_cast<Eigen::Index>(cout));
          gbv += gmat.rowwise().sum();
        }
        if (auto* gk = grad_sink(*k_n)) {
          MutMap gkm(gk->data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(taps));
          gkm.noalias() += gmat * cols->transpose();
        }
        if (auto* gin = grad_sink(*in_n)) {
          const auto km = ConstMap(k_n->value.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(taps));
          const RowMatrix gcols = km.transpose() * gmat;
          for_segments([&](std::size_t row, std::size_t orow, std::size_t irow, long x0, long x1) {
            const double* src = gcols.data() + row * plane + orow;
            double* dst = gin->data() + irow;
            for (long x = x0; x < x1; ++x) dst[x] += src[x];
          });
        }
      });
}

namespace {
thread_local ReluTrace* active_trace = nullptr;
}

ReluTrace::ReluTrace() : previous_(active_trace) { active_trace = this; }
ReluTrace::~ReluTrace() { active_trace = previous_; }

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  if (active_trace)
    for (double v : out) active_trace->pattern_.push_back(v > 0.0);
  auto xn = node_of(x);
  return make_result(x.shape(), std::move(out), {&x}, [xn](const Node& self) {
    if (auto* g = grad_sink(*xn))
      for (std::size_t i = 0; i < g->size(); ++i)
        if (xn->value[i] > 0.0) (*g)[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(in[i]);
  auto xn = node_of(x);
  return make_result(x.shape(), std::move(out), {&x}, [xn](const Node& self) {
    if (auto* g = grad_sink(*xn))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double s = self.value[i];
        (*g)[i] += self.grad[i] * s * (1.0 - s);
      }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = node_of(a), bn = node_of(b);
  return make_result(a.shape(), std::move(out), {&a, &b}, [an, bn](const Node& self) {
    if (auto* g = grad_sink(*an))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_sink(*bn))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.values()[i];
  auto xn = node_of(x);
  return make_result(x.shape(), std::move(out), {&x}, [xn, factor](const Node& self) {
    if (auto* g = grad_sink(*xn))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto xn = node_of(x);
  return make_result(Shape{1}, {acc}, {&x}, [xn](const Node& self) {
    if (auto* g = grad_sink(*xn))
      for (auto& gi : *g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor max(const Tensor& x) {
  const auto v = x.values();
  const std::size_t arg = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  auto xn = node_of(x);
  return make_result(Shape{1}, {v[arg]}, {&x}, [xn, arg](const Node& self) {
    if (auto* g = grad_sink(*xn)) (*g)[arg] += self.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw ShapeError("dot: length mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.values()[i] * b.values()[i];
  auto an = node_of(a), bn = node_of(b);
  return make_result(Shape{1}, {acc}, {&a, &b}, [an, bn](const Node& self) {
    const double g0 = self.grad[0];
    if (auto* g = grad_sink(*an))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += g0 * bn->value[i];
    if (auto* g = grad_sink(*bn))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += g0 * an->value[i];
  });
}

Tensor softmax(const Tensor& x) {
  const auto v = x.values();
  const double shift = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - shift);
    z += out[i];
  }
  for (auto& o : out) o /= z;
  auto xn = node_of(x);
  return make_result(x.shape(), std::move(out), {&x}, [xn](const Node& self) {
    auto* g = grad_sink(*xn);
    if (!g) return;
    double inner = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) inner += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.value[i] * (self.grad[i] - inner);
  });
}

Tensor project_rows(const Tensor& rows, const Tensor& w) {
  const std::size_t c = row_width(rows, w, "project_rows");
  const std::size_t n = rows.size() / c;
  const auto r = rows.values();
  const auto wv = w.values();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) acc += wv[ch] * r[j * c + ch];
    out[j] = acc;
  }
  Shape shape(rows.shape().begin(), rows.shape().end() - 1);
  if (shape.empty()) shape = {1};
  auto rn = node_of(rows), wn = node_of(w);
  return make_result(std::move(shape), std::move(out), {&rows, &w}, [rn, wn, c, n](const Node& self) {
    if (auto* g = grad_sink(*rn))
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) (*g)[j * c + ch] += self.grad[j] * wn->value[ch];
    if (auto* g = grad_sink(*wn))
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) (*g)[ch] += self.grad[j] * rn->value[j * c + ch];
  });
}

Tensor weighted_row_sum(const Tensor& rows, const Tensor& weights) {
  const std::size_t c = rows.shape().back();
  const std::size_t n = rows.size() / c;
  if (weights.size() != n)
    throw ShapeError("weighted_row_sum: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(n) + " rows");
  const auto r = rows.values();
  const auto wv = weights.values();
  std::vector<double> out(c, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += wv[j] * r[j * c + ch];
  auto rn = node_of(rows), wn = node_of(weights);
  return make_result(Shape{c}, std::move(out), {&rows, &weights}, [rn, wn, c, n](const Node& self) {
    if (auto* g = grad_sink(*rn))
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) (*g)[j * c + ch] += wn->value[j] * self.grad[ch];
    if (auto* g = grad_sink(*wn))
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) acc += rn->value[j * c + ch] * self.grad[ch];
        (*g)[j] += acc;
      }
  });
}

Tensor mean_rows(const Tensor& rows, std::span<const std::size_t> indices) {
  const std::size_t c = rows.shape().back();
  const std::size_t n = rows.size() / c;
  if (indices.empty()) throw InvalidArgument("mean_rows: empty index set");
  for (auto idx : indices)
    if (idx >= n) throw InvalidArgument("mean_rows: index " + std::to_string(idx) + " out of range");
  const auto r = rows.values();
  std::vector<double> out(c, 0.0);
  for (auto idx : indices)
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += r[idx * c + ch];
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& o : out) o *= inv;
  auto rn = node_of(rows);
  std::vector<std::size_t> members(indices.begin(), indices.end());
  return make_result(Shape{c}, std::move(out), {&rows}, [rn, c, inv, members = std::move(members)](const Node& self) {
    if (auto* g = grad_sink(*rn))
      for (auto idx : members)
        for (std::size_t ch = 0; ch < c; ++ch) (*g)[idx * c + ch] += inv * self.grad[ch];
  });
}

Tensor stack_channel_last(const std::vector<Tensor>& slices) {
  if (slices.empty()) throw InvalidArgument("stack_channel_last: no slices");
  const Shape& first = slices.front().shape();
  if (first.size() != 3) throw ShapeError("stack_channel_last: slices must be [C,H,W]");
  for (const auto& s : slices)
    if (s.shape() != first)
      throw ShapeError("stack_channel_last: slice shape " + shape_string(s.shape()) + " differs from " +
                       shape_string(first));
  const std::size_t c = first[0], plane = first[1] * first[2], l = slices.size();
  std::vector<double> out(l * plane * c);
  for (std::size_t s = 0; s < l; ++s) {
    const auto v = slices[s].values();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) out[(s * plane + p) * c + ch] = v[ch * plane + p];
  }

  std::vector<std::shared_ptr<Node>> parents;
  std::vector<const Tensor*> inputs;
  for (const auto& s : slices) {
    parents.push_back(node_of(s));
    inputs.push_back(&s);
  }
  return make_result(Shape{l, first[1], first[2], c}, std::move(out), inputs,
                     [parents = std::move(parents), c, plane](const Node& self) {
                       for (std::size_t s = 0; s < parents.size(); ++s) {
                         auto* g = grad_sink(*parents[s]);
                         if (!g) continue;
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t p = 0; p < plane; ++p)
                             (*g)[ch * plane + p] += self.grad[(s * plane + p) * c + ch];
                       }
                     });
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const std::uint8_t> targets) {
  if (targets.size() != probs.size())
    throw ShapeError("binary_cross_entropy: " + std::to_string(targets.size()) + " labels for " +
                     std::to_string(probs.size()) + " probabilities");
  const auto p = probs.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double arg = targets[i] ? p[i] : 1.0 - p[i];
    acc -= std::log(std::max(arg, kLogClamp));
  }
  auto pn = node_of(probs);
  std::vector<std::uint8_t> labels(targets.begin(), targets.end());
  return make_result(Shape{1}, {acc}, {&probs}, [pn, labels = std::move(labels)](const Node& self) {
    auto* g = grad_sink(*pn);
    if (!g) return;
    const double g0 = self.grad[0];
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double pi = pn->value[i];
      if (labels[i]) {
        if (pi > kLogClamp) (*g)[i] -= g0 / pi;
      } else {
        if (1.0 - pi > kLogClamp) (*g)[i] += g0 / (1.0 - pi);
      }
    }
  });
}

Tensor binary_cross_entropy(const Tensor& prob, std::uint8_t target) {
  if (prob.size() != 1) throw ShapeError("binary_cross_entropy: expected a single probability");
  const std::uint8_t t[1] = {target};
  return binary_cross_entropy(prob, std::span<const std::uint8_t>(t, 1));
}

}  // namespace iag
