#pragma once

// Volumes, the synthetic phantom generator, and the on-disk formats.
//
// Sample file layout (all integers little-endian):
//   "IAGV" | u8 version | u32 D | u32 H | u32 W | u8 label | u8 has_voxel_labels | u8 pad
//   D*H*W f32 voxels, z-major
//   D*H*W u8 mask bytes

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iag/error.hpp"

namespace iag {

struct Dims {
  std::size_t depth = 12;
  std::size_t height = 24;
  std::size_t width = 24;

  std::size_t voxels() const { return depth * height * width; }
  std::size_t plane() const { return height * width; }
  bool operator==(const Dims&) const = default;
};

struct VolumeSample {
  std::string id;
  Dims dims;
  std::vector<float> voxels;          // z-major, values in [0,1]
  std::vector<std::uint8_t> mask;     // tumour ground truth, 0/1
  std::uint8_t image_label = 0;       // 1 iff the mask has a foreground voxel
  bool has_voxel_labels = false;      // member of the voxel-annotated subset

  bool positive() const { return image_label != 0; }
  /// Mask values of the given slices, concatenated in order.
  std::vector<std::uint8_t> mask_slices(std::span<const std::size_t> slices) const;
  /// Throws InvalidArgument if any invariant is broken.
  void validate() const;
};

inline constexpr std::uint8_t kSampleFormatVersion = 1;
inline constexpr std::size_t kSampleHeaderBytes = 20;

/// Exact byte size of a sample file with the given dims.
std::size_t sample_file_size(const Dims& dims);

class FormatError : public Error {
 public:
  enum class Kind { BadMagic, UnsupportedVersion, Truncated, DimOverflow, BadPayload };
  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode_sample(const VolumeSample& sample);
VolumeSample decode_sample(std::span<const std::uint8_t> bytes, std::string id = {});

void save_sample(const VolumeSample& sample, const std::filesystem::path& path);
VolumeSample load_sample(const std::filesystem::path& path);

/// Clamp to [lo, hi] and map affinely onto [0, 1]. Defaults are the CT
/// window in Hounsfield units.
double normalize_intensity(double raw, double lo = -125.0, double hi = 350.0);
std::vector<double> normalize_intensity(std::span<const double> raw, double lo = -125.0,
                                        double hi = 350.0);

struct GeneratorConfig {
  std::size_t count = 32;
  double positive_fraction = 0.5;
  double labeled_fraction = 0.5;
  Dims dims{};
  std::uint64_t seed = 0;
  std::string id_prefix = "case";
};

/// Phantom generator: a soft ellipsoidal organ in a dim background; positives
/// carry an additional brighter ellipsoidal lesion that defines the mask.
std::vector<VolumeSample> generate_dataset(const GeneratorConfig& config);

struct ManifestRecord {
  std::string id;
  std::string path;  // relative to the manifest directory
  std::uint8_t image_label = 0;
  bool has_voxel_labels = false;
};

struct DatasetManifest {
  int version = 1;
  GeneratorConfig generator;
  std::vector<ManifestRecord> records;

  std::size_t labeled_positives() const;
  std::size_t unlabeled_positives() const;
  std::size_t negatives() const;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes every sample plus manifest.json into `dir` (created if missing).
DatasetManifest write_dataset(const std::vector<VolumeSample>& samples, const GeneratorConfig& config,
                              const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);
std::vector<VolumeSample> load_dataset(const std::filesystem::path& dir);

}  // namespace iag
