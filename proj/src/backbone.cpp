#include "iag/backbone.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "iag/error.hpp"
#include "iag/ops.hpp"

namespace iag {

namespace {

constexpr std::array<char, 4> kModelMagic = {'I', 'A', 'G', 'M'};

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

void check_config(const BackboneConfig& c) {
  if (c.depth == 0 || c.width == 0 || c.in_channels == 0)
    throw InvalidArgument("backbone depth, width and input channels must be positive");
  if (c.kernel % 2 == 0) throw InvalidArgument("backbone kernel extent must be odd");
}

}  // namespace

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& l : layers) {
    out.push_back(&l.kernels);
    out.push_back(&l.bias);
  }
  out.push_back(&w_attention);
  out.push_back(&w_global);
  out.push_back(&w_local);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers) {
    out.push_back(&l.kernels);
    out.push_back(&l.bias);
  }
  out.push_back(&w_attention);
  out.push_back(&w_global);
  out.push_back(&w_local);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.config = config;
  for (const auto& l : layers) out.layers.push_back({l.kernels.detached(), l.bias.detached()});
  out.w_attention = w_attention.detached();
  out.w_global = w_global.detached();
  out.w_local = w_local.detached();
  return out;
}

void ModelParams::validate() const {
  check_config(config);
  if (layers.size() != config.depth) throw ShapeError("layer count does not match backbone depth");
  std::size_t cin = config.in_channels;
  for (const auto& l : layers) {
    const Shape expect{config.width, cin, config.kernel, config.kernel};
    if (l.kernels.shape() != expect)
      throw ShapeError("conv kernels " + shape_string(l.kernels.shape()) + ", expected " + shape_string(expect));
    if (l.bias.shape() != Shape{config.width}) throw ShapeError("conv bias has wrong shape");
    cin = config.width;
  }
  for (const Tensor* head : {&w_attention, &w_global, &w_local})
    if (head->shape() != Shape{config.width})
      throw ShapeError("head " + shape_string(head->shape()) + " does not match channel width " +
                       std::to_string(config.width));
  for (const Tensor* t : tensors())
    for (double v : t->values())
      if (!std::isfinite(v)) throw NumericError("non-finite model parameter");
}

ModelParams init_params(const BackboneConfig& config, std::uint64_t seed) {
  check_config(config);
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  std::size_t cin = config.in_channels;
  for (std::size_t i = 0; i < config.depth; ++i) {
    const double fan_in = static_cast<double>(cin * config.kernel * config.kernel);
    const double bound = 1.0 / std::sqrt(fan_in);
    ConvLayer layer;
    layer.kernels = uniform_tensor({config.width, cin, config.kernel, config.kernel}, bound, rng);
    layer.bias = uniform_tensor({config.width}, bound, rng);
    p.layers.push_back(std::move(layer));
    cin = config.width;
  }
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(config.width));
  p.w_attention = uniform_tensor({config.width}, head_bound, rng);
  p.w_global = uniform_tensor({config.width}, head_bound, rng);
  p.w_local = uniform_tensor({config.width}, head_bound, rng);
  return p;
}

std::vector<std::size_t> all_slices(const VolumeSample& volume) {
  std::vector<std::size_t> out(volume.dims.depth);
  for (std::size_t z = 0; z < out.size(); ++z) out[z] = z;
  return out;
}

FeatureMap extract_features(const VolumeSample& volume, const ModelParams& params,
                            std::span<const std::size_t> slice_indices) {
  if (slice_indices.empty()) throw InvalidArgument("extract_features: no slices selected");
  for (std::size_t i = 0; i < slice_indices.size(); ++i) {
    if (slice_indices[i] >= volume.dims.depth)
      throw InvalidArgument("extract_features: slice " + std::to_string(slice_indices[i]) + " beyond depth " +
                            std::to_string(volume.dims.depth));
    if (i > 0 && slice_indices[i] <= slice_indices[i - 1])
      throw InvalidArgument("extract_features: slice indices must be strictly increasing");
  }
  if (params.config.in_channels != 1) throw ShapeError("extract_features: volumes have one channel");
  if (params.w_attention.size() != params.channels() || params.w_local.size() != params.channels() ||
      params.w_global.size() != params.channels())
    throw ShapeError("extract_features: head width does not match backbone channels");

  const std::size_t h = volume.dims.height, w = volume.dims.width, plane = h * w;
  std::vector<Tensor> maps;
  maps.reserve(slice_indices.size());
  for (auto z : slice_indices) {
    std::vector<double> pixels(volume.voxels.begin() + static_cast<std::ptrdiff_t>(z * plane),
                               volume.voxels.begin() + static_cast<std::ptrdiff_t>((z + 1) * plane));
    Tensor x(Shape{1, h, w}, std::move(pixels));
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      x = conv2d(x, params.layers[i].kernels, params.layers[i].bias);
      if (i + 1 < params.layers.size()) x = relu(x);
    }
    maps.push_back(std::move(x));
  }

  FeatureMap fm;
  fm.features = stack_channel_last(maps);
  fm.slices = slice_indices.size();
  fm.height = h;
  fm.width = w;
  fm.channels = params.channels();
  return fm;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return std::bit_cast<double>(v);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("model file truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_params(const ModelParams& params) {
  params.validate();
  std::vector<std::uint8_t> out(kModelMagic.begin(), kModelMagic.end());
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.config.depth));
  put_u32(out, static_cast<std::uint32_t>(params.config.width));
  put_u32(out, static_cast<std::uint32_t>(params.config.kernel));
  put_u32(out, static_cast<std::uint32_t>(params.config.in_channels));
  for (const Tensor* t : params.tensors())
    for (double v : t->values()) put_f64(out, v);
  return out;
}

ModelParams decode_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
    throw IoError("not an IAGM model file");
  Reader r(bytes.subspan(4));
  if (const auto version = r.u32(); version != kModelFormatVersion)
    throw IoError("unsupported model version " + std::to_string(version));
  BackboneConfig cfg;
  cfg.depth = r.u32();
  cfg.width = r.u32();
  cfg.kernel = r.u32();
  cfg.in_channels = r.u32();
  if (cfg.depth == 0 || cfg.depth > 64 || cfg.width == 0 || cfg.width > 4096 || cfg.kernel == 0 ||
      cfg.kernel > 31 || cfg.in_channels == 0 || cfg.in_channels > 64)
    throw IoError("model header holds implausible layer shapes");
  std::uint64_t count = 3 * std::uint64_t{cfg.width};
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::uint64_t cin = i == 0 ? cfg.in_channels : cfg.width;
    count += cfg.width * cin * cfg.kernel * cfg.kernel + cfg.width;
  }
  if (bytes.size() != 24 + 8 * count) throw IoError("model payload size does not match its header");
  auto params = init_params(cfg, 0);
  for (Tensor* t : params.tensors())
    for (auto& v : t->mutable_values()) v = r.f64();
  if (!r.done()) throw IoError("trailing bytes in model file");
  params.validate();
  return params;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_params(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_params(bytes);
}

}  // namespace iag
