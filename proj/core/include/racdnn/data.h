#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "racdnn/tensor.h"

namespace racdnn {

struct Sample {
  std::string id;
  Tensor image;  // [3,H,W] in [0,1]
  Tensor mask;   // [H,W], values 0 or 1
};

struct DatasetSpec {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::size_t image_size = 64;
  // Shape extent as a fraction of the image side.
  double scale_min = 0.1;
  double scale_max = 0.7;
  std::size_t objects_min = 1;
  std::size_t objects_max = 2;
  double texture_amplitude = 0.12;
  double noise_amplitude = 0.04;
  // Rejection bounds on the positive fraction of each mask.
  double min_fraction = 0.01;
  double max_fraction = 0.60;
};

void validate(const DatasetSpec& spec);

// Sample `index` of the dataset; depends only on (spec, index).
Sample generate_sample(const DatasetSpec& spec, std::size_t index);
std::vector<Sample> generate(const DatasetSpec& spec);

struct AugmentParams {
  std::size_t crop_x = 0, crop_y = 0;
  std::size_t crop_w = 0, crop_h = 0;  // 0 means full extent
  long shift_x = 0, shift_y = 0;
  std::array<double, 3> jitter{1.0, 1.0, 1.0};
};

AugmentParams random_augment_params(std::size_t height, std::size_t width, std::uint64_t seed);
Sample augment(const Sample& sample, const AugmentParams& params);
Sample augment(const Sample& sample, std::uint64_t seed);

// Half-pixel-centred bilinear resize of [H,W] or [C,H,W].
Tensor resize_bilinear(const Tensor& map, std::size_t height, std::size_t width);
Tensor resize_nearest(const Tensor& map, std::size_t height, std::size_t width);

// Raw 8-bit netpbm raster, interleaved, row-major.
struct ByteImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (P5) or 3 (P6)
  std::vector<std::uint8_t> bytes;
};

ByteImage parse_pnm(std::span<const std::uint8_t> file);
std::vector<std::uint8_t> encode_pnm(const ByteImage& image);
ByteImage read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const ByteImage& image);

// byte / 255 into [C,H,W]; the inverse rounds after clamping to [0,1].
// Accepts [H,W], [1,H,W] or [3,H,W].
Tensor to_tensor(const ByteImage& image);
ByteImage to_bytes(const Tensor& image);

Tensor read_image(const std::filesystem::path& path);  // [3,H,W]
Tensor read_mask(const std::filesystem::path& path);   // [H,W], >= 128 is foreground
void write_image(const std::filesystem::path& path, const Tensor& image);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;
};

// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

// Writes images/<id>.ppm, masks/<id>.pgm and manifest.tsv under `dir`.
std::filesystem::path write_dataset(const std::filesystem::path& dir, std::span<const Sample> samples);
std::vector<Sample> load_dataset(const std::filesystem::path& manifest);

std::uint64_t fnv1a(std::string_view text);
// Roughly one id in ten lands in validation.
bool is_validation(std::string_view id);

}  // namespace racdnn
