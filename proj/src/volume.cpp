#include "iag/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <random>

#include <nlohmann/json.hpp>

namespace iag {

namespace {

constexpr std::array<char, 4> kSampleMagic = {'I', 'A', 'G', 'V'};
// Upper bound on voxel count accepted when decoding (256 MiB of f32).
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 26;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

std::uint32_t checked_u32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw FormatError(FormatError::Kind::DimOverflow, "dimension does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> VolumeSample::mask_slices(std::span<const std::size_t> slices) const {
  std::vector<std::uint8_t> out;
  out.reserve(slices.size() * dims.plane());
  for (auto z : slices) {
    if (z >= dims.depth) throw InvalidArgument("slice index " + std::to_string(z) + " out of range");
    auto first = mask.begin() + static_cast<std::ptrdiff_t>(z * dims.plane());
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(dims.plane()));
  }
  return out;
}

void VolumeSample::validate() const {
  const std::size_t n = dims.voxels();
  if (n == 0) throw InvalidArgument(id + ": empty volume");
  if (voxels.size() != n || mask.size() != n) throw InvalidArgument(id + ": voxel/mask size mismatch");
  bool any = false;
  for (auto m : mask) {
    if (m > 1) throw InvalidArgument(id + ": mask values must be 0 or 1");
    any = any || m;
  }
  if (any != positive()) throw InvalidArgument(id + ": image label disagrees with mask");
  for (float v : voxels)
    if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument(id + ": voxel outside [0,1]");
}

std::size_t sample_file_size(const Dims& dims) {
  return kSampleHeaderBytes + 4 * dims.voxels() + dims.voxels();
}

std::vector<std::uint8_t> encode_sample(const VolumeSample& s) {
  const std::size_t n = s.dims.voxels();
  if (s.voxels.size() != n || s.mask.size() != n)
    throw InvalidArgument("encode_sample: payload does not match dims");
  std::vector<std::uint8_t> out;
  out.reserve(sample_file_size(s.dims));
  out.insert(out.end(), kSampleMagic.begin(), kSampleMagic.end());
  out.push_back(kSampleFormatVersion);
  put_u32(out, checked_u32(s.dims.depth));
  put_u32(out, checked_u32(s.dims.height));
  put_u32(out, checked_u32(s.dims.width));
  out.push_back(s.image_label);
  out.push_back(s.has_voxel_labels ? 1 : 0);
  out.push_back(0);
  for (float v : s.voxels) put_u32(out, std::bit_cast<std::uint32_t>(v));
  out.insert(out.end(), s.mask.begin(), s.mask.end());
  return out;
}

VolumeSample decode_sample(std::span<const std::uint8_t> bytes, std::string id) {
  using Kind = FormatError::Kind;
  if (bytes.size() < kSampleHeaderBytes) {
    if (bytes.size() >= 4 && !std::equal(kSampleMagic.begin(), kSampleMagic.end(), bytes.begin()))
      throw FormatError(Kind::BadMagic, "not an IAGV sample file");
    throw FormatError(Kind::Truncated, "sample header truncated");
  }
  if (!std::equal(kSampleMagic.begin(), kSampleMagic.end(), bytes.begin()))
    throw FormatError(Kind::BadMagic, "not an IAGV sample file");
  if (bytes[4] != kSampleFormatVersion)
    throw FormatError(Kind::UnsupportedVersion, "unsupported sample version " + std::to_string(bytes[4]));

  const std::uint64_t d = get_u32(&bytes[5]), h = get_u32(&bytes[9]), w = get_u32(&bytes[13]);
  if (d == 0 || h == 0 || w == 0) throw FormatError(Kind::BadPayload, "zero dimension");
  if (d > kMaxVoxels || h > kMaxVoxels || w > kMaxVoxels || d * h > kMaxVoxels || d * h * w > kMaxVoxels)
    throw FormatError(Kind::DimOverflow, "volume dimensions too large");

  VolumeSample s;
  s.id = std::move(id);
  s.dims = {static_cast<std::size_t>(d), static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
  s.image_label = bytes[17];
  s.has_voxel_labels = bytes[18] != 0;
  if (s.image_label > 1 || bytes[18] > 1) throw FormatError(Kind::BadPayload, "invalid label byte");

  const std::size_t n = s.dims.voxels();
  if (bytes.size() < sample_file_size(s.dims)) throw FormatError(Kind::Truncated, "sample payload truncated");
  if (bytes.size() > sample_file_size(s.dims)) throw FormatError(Kind::BadPayload, "trailing bytes after payload");

  s.voxels.resize(n);
  const std::uint8_t* p = bytes.data() + kSampleHeaderBytes;
  for (std::size_t i = 0; i < n; ++i, p += 4) s.voxels[i] = std::bit_cast<float>(get_u32(p));
  s.mask.assign(p, p + n);
  return s;
}

void save_sample(const VolumeSample& sample, const std::filesystem::path& path) {
  const auto bytes = encode_sample(sample);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

VolumeSample load_sample(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_sample(bytes, path.stem().string());
}

double normalize_intensity(double raw, double lo, double hi) {
  if (!(lo < hi)) throw InvalidArgument("normalize_intensity: lower bound must be below upper bound");
  return (std::clamp(raw, lo, hi) - lo) / (hi - lo);
}

std::vector<double> normalize_intensity(std::span<const double> raw, double lo, double hi) {
  if (!(lo < hi)) throw InvalidArgument("normalize_intensity: lower bound must be below upper bound");
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [=](double v) { return normalize_intensity(v, lo, hi); });
  return out;
}

// ---------------------------------------------------------------------------
// Phantom generator

namespace {

struct Ellipsoid {
  std::array<double, 3> center;  // z, y, x in voxel units
  std::array<double, 3> radii;

  double radius_at(std::size_t z, std::size_t y, std::size_t x) const {
    const double dz = (static_cast<double>(z) - center[0]) / radii[0];
    const double dy = (static_cast<double>(y) - center[1]) / radii[1];
    const double dx = (static_cast<double>(x) - center[2]) / radii[2];
    return std::sqrt(dz * dz + dy * dy + dx * dx);
  }
};

bool six_connected(const std::vector<std::uint8_t>& mask, const Dims& dims) {
  const auto first = std::find(mask.begin(), mask.end(), 1);
  if (first == mask.end()) return false;
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::queue<std::size_t> todo;
  const auto start = static_cast<std::size_t>(first - mask.begin());
  todo.push(start);
  seen[start] = 1;
  std::size_t reached = 0;
  const std::size_t plane = dims.plane();
  while (!todo.empty()) {
    const std::size_t i = todo.front();
    todo.pop();
    ++reached;
    const std::size_t z = i / plane, y = (i / dims.width) % dims.height, x = i % dims.width;
    auto visit = [&](std::size_t j) {
      if (mask[j] && !seen[j]) {
        seen[j] = 1;
        todo.push(j);
      }
    };
    if (z > 0) visit(i - plane);
    if (z + 1 < dims.depth) visit(i + plane);
    if (y > 0) visit(i - dims.width);
    if (y + 1 < dims.height) visit(i + dims.width);
    if (x > 0) visit(i - 1);
    if (x + 1 < dims.width) visit(i + 1);
  }
  return reached == static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

constexpr double kNoiseSigma = 0.05;
constexpr double kOrganEdgeSoftness = 0.05;
constexpr double kLesionContainment = 0.85;  // lesion voxels stay within this organ radius
constexpr int kPlacementAttempts = 200;

VolumeSample make_phantom(const GeneratorConfig& cfg, std::size_t index, bool positive, bool labeled) {
  const Dims& dims = cfg.dims;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  const std::array<double, 3> extent = {static_cast<double>(dims.depth), static_cast<double>(dims.height),
                                        static_cast<double>(dims.width)};
  Ellipsoid organ{};
  for (int a = 0; a < 3; ++a) {
    organ.center[a] = (extent[a] - 1.0) / 2.0 + uniform(-0.06, 0.06) * extent[a];
    organ.radii[a] = uniform(0.30, 0.38) * extent[a];
  }
  const double background = uniform(0.05, 0.20);
  const double organ_level = uniform(0.45, 0.55);

  VolumeSample s;
  s.id = cfg.id_prefix + "_" + std::to_string(index);
  s.dims = dims;
  s.image_label = positive ? 1 : 0;
  s.has_voxel_labels = labeled;
  s.mask.assign(dims.voxels(), 0);

  std::vector<double> organ_radius(dims.voxels());
  std::size_t organ_voxels = 0;
  for (std::size_t z = 0, i = 0; z < dims.depth; ++z)
    for (std::size_t y = 0; y < dims.height; ++y)
      for (std::size_t x = 0; x < dims.width; ++x, ++i) {
        organ_radius[i] = organ.radius_at(z, y, x);
        organ_voxels += organ_radius[i] <= 1.0;
      }

  double lesion_level = 0.0;
  if (positive) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double fraction = uniform(0.05, 0.15);
      const double scale = std::cbrt(fraction);
      Ellipsoid lesion{};
      std::array<double, 3> jitter{};
      double prod = 1.0;
      for (auto& j : jitter) {
        j = uniform(0.85, 1.15);
        prod *= j;
      }
      const double renorm = std::cbrt(prod);
      for (int a = 0; a < 3; ++a) {
        lesion.radii[a] = organ.radii[a] * scale * jitter[a] / renorm;
        const double room = std::max(0.0, organ.radii[a] * kLesionContainment - lesion.radii[a]);
        lesion.center[a] = std::round(organ.center[a] + uniform(-room, room));
        lesion.center[a] = std::clamp(lesion.center[a], 0.0, extent[a] - 1.0);
      }

      std::fill(s.mask.begin(), s.mask.end(), 0);
      bool contained = true;
      for (std::size_t z = 0, i = 0; z < dims.depth; ++z)
        for (std::size_t y = 0; y < dims.height; ++y)
          for (std::size_t x = 0; x < dims.width; ++x, ++i)
            if (lesion.radius_at(z, y, x) <= 1.0) {
              s.mask[i] = 1;
              contained = contained && organ_radius[i] <= kLesionContainment;
            }
      placed = contained && six_connected(s.mask, dims);
    }
    if (!placed)
      throw InvalidArgument("generate_dataset: dims " + std::to_string(dims.depth) + "x" +
                            std::to_string(dims.height) + "x" + std::to_string(dims.width) +
                            " too small to place a lesion inside the organ");
    lesion_level = uniform(0.65, 0.85);
  }
  if (organ_voxels == 0) throw InvalidArgument("generate_dataset: dims too small for the organ");

  std::normal_distribution<double> noise(0.0, kNoiseSigma);
  s.voxels.resize(dims.voxels());
  for (std::size_t i = 0; i < s.voxels.size(); ++i) {
    const double w = 1.0 / (1.0 + std::exp((organ_radius[i] - 1.0) / kOrganEdgeSoftness));
    double v = s.mask[i] ? lesion_level : background + (organ_level - background) * w;
    v += noise(rng);
    s.voxels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return s;
}

}  // namespace

std::vector<VolumeSample> generate_dataset(const GeneratorConfig& cfg) {
  if (cfg.count < 2) throw InvalidArgument("generate_dataset: need at least 2 samples");
  if (!(cfg.positive_fraction > 0.0 && cfg.positive_fraction < 1.0))
    throw InvalidArgument("generate_dataset: positive fraction must lie in (0,1)");
  if (!(cfg.labeled_fraction >= 0.0 && cfg.labeled_fraction <= 1.0))
    throw InvalidArgument("generate_dataset: labeled fraction must lie in [0,1]");
  if (std::min({cfg.dims.depth, cfg.dims.height, cfg.dims.width}) < 4)
    throw InvalidArgument("generate_dataset: every dimension must be at least 4");

  const auto n = cfg.count;
  const auto positives = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.positive_fraction)), 1, n - 1);
  const auto labeled = static_cast<std::size_t>(std::llround(static_cast<double>(positives) * cfg.labeled_fraction));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::uint8_t> is_positive(n, 0), is_labeled(n, 0);
  for (std::size_t r = 0; r < positives; ++r) {
    is_positive[order[r]] = 1;
    is_labeled[order[r]] = r < labeled;
  }

  std::vector<VolumeSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_phantom(cfg, i, is_positive[i], is_labeled[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::size_t DatasetManifest::labeled_positives() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [](const auto& r) { return r.image_label && r.has_voxel_labels; }));
}

std::size_t DatasetManifest::unlabeled_positives() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [](const auto& r) { return r.image_label && !r.has_voxel_labels; }));
}

std::size_t DatasetManifest::negatives() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.image_label; }));
}

DatasetManifest write_dataset(const std::vector<VolumeSample>& samples, const GeneratorConfig& config,
                              const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.generator = config;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& s : samples) {
    const std::string rel = s.id + ".iagv";
    save_sample(s, dir / rel);
    manifest.records.push_back({s.id, rel, s.image_label, s.has_voxel_labels});
    records.push_back({{"id", s.id},
                       {"path", rel},
                       {"image_label", s.image_label},
                       {"has_voxel_labels", s.has_voxel_labels}});
  }
  nlohmann::json doc = {
      {"version", manifest.version},
      {"generator",
       {{"seed", config.seed},
        {"count", config.count},
        {"positive_fraction", config.positive_fraction},
        {"labeled_fraction", config.labeled_fraction},
        {"dims", {config.dims.depth, config.dims.height, config.dims.width}},
        {"id_prefix", config.id_prefix}}},
      {"samples", records}};

  std::ofstream out(dir / kManifestName, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << doc.dump(2) << '\n';
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw IoError("cannot open " + (dir / kManifestName).string());
  nlohmann::json doc;
  try {
    in >> doc;
    DatasetManifest m;
    m.version = doc.at("version").get<int>();
    if (m.version != 1) throw IoError("unsupported manifest version " + std::to_string(m.version));
    const auto& g = doc.at("generator");
    m.generator.seed = g.at("seed").get<std::uint64_t>();
    m.generator.count = g.at("count").get<std::size_t>();
    m.generator.positive_fraction = g.at("positive_fraction").get<double>();
    m.generator.labeled_fraction = g.at("labeled_fraction").get<double>();
    const auto dims = g.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw IoError("manifest dims must have three entries");
    m.generator.dims = {dims[0], dims[1], dims[2]};
    m.generator.id_prefix = g.value("id_prefix", std::string("case"));
    for (const auto& r : doc.at("samples"))
      m.records.push_back({r.at("id").get<std::string>(), r.at("path").get<std::string>(),
                           r.at("image_label").get<std::uint8_t>(), r.at("has_voxel_labels").get<bool>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

std::vector<VolumeSample> load_dataset(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  std::vector<VolumeSample> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    auto s = load_sample(dir / r.path);
    s.id = r.id;
    if (s.image_label != r.image_label || s.has_voxel_labels != r.has_voxel_labels)
      throw IoError("sample " + r.id + " disagrees with the manifest");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace iag
