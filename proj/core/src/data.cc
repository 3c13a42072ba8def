#include "racdnn/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "racdnn/error.h"

namespace racdnn {

namespace {

using Rng = std::mt19937_64;

Rng sample_rng(std::uint64_t seed, std::size_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Point {
  double x, y;
};

enum class ShapeKind { kEllipse, kRectangle, kTriangle };

struct Shape2d {
  ShapeKind kind;
  Point centre;
  double half_w, half_h;  // ellipse semi-axes or rectangle half extents
  double angle;
  std::array<Point, 3> corners;  // triangle only

  bool contains(double x, double y) const {
    const double dx = x - centre.x, dy = y - centre.y;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy, v = -s * dx + c * dy;
    switch (kind) {
      case ShapeKind::kEllipse:
        return (u * u) / (half_w * half_w) + (v * v) / (half_h * half_h) <= 1.0;
      case ShapeKind::kRectangle:
        return std::abs(u) <= half_w && std::abs(v) <= half_h;
      case ShapeKind::kTriangle: {
        auto edge = [&](const Point& a, const Point& b) { return (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x); };
        const double e0 = edge(corners[0], corners[1]);
        const double e1 = edge(corners[1], corners[2]);
        const double e2 = edge(corners[2], corners[0]);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }
};

Shape2d random_shape(const DatasetSpec& spec, Rng& rng) {
  const double side = static_cast<double>(spec.image_size);
  const double extent = uniform(rng, spec.scale_min, spec.scale_max) * side;
  Shape2d shape{};
  shape.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  const double margin = 0.25 * extent;
  shape.centre = {uniform(rng, std::min(margin, side / 2), std::max(side - margin, side / 2)),
                  uniform(rng, std::min(margin, side / 2), std::max(side - margin, side / 2))};
  shape.angle = uniform(rng, 0.0, std::numbers::pi);
  const double aspect = uniform(rng, 0.6, 1.0);
  shape.half_w = extent / 2;
  shape.half_h = extent / 2 * aspect;
  if (shape.kind == ShapeKind::kTriangle) {
    const double base = uniform(rng, 0.0, 2 * std::numbers::pi);
    for (int k = 0; k < 3; ++k) {
      const double a = base + 2 * std::numbers::pi * k / 3 + uniform(rng, -0.3, 0.3);
      shape.corners[k] = {shape.centre.x + extent / 2 * std::cos(a), shape.centre.y + extent / 2 * std::sin(a)};
    }
  }
  return shape;
}

std::array<double, 3> random_colour(Rng& rng) { return {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}; }

double distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

// Mirror about the edge pixels without repeating them.
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

void check_resize(const Tensor& map, std::size_t height, std::size_t width) {
  if (map.rank() != 2 && map.rank() != 3) {
    throw Error(ErrorKind::kInvalidShape, "resize expects [H,W] or [C,H,W], got " + shape_str(map.shape()));
  }
  if (height == 0 || width == 0 || map.numel() == 0) throw Error(ErrorKind::kInvalidShape, "resize to or from an empty map");
}

struct Planes {
  std::size_t channels, height, width;
};

Planes planes_of(const Tensor& map) {
  const auto& s = map.shape();
  return s.size() == 2 ? Planes{1, s[0], s[1]} : Planes{s[0], s[1], s[2]};
}

Shape resized_shape(const Tensor& map, std::size_t height, std::size_t width) {
  return map.rank() == 2 ? Shape{height, width} : Shape{map.dim(0), height, width};
}

// Source sample positions for a half-pixel-centred resize along one axis.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps linear_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.lo.resize(out), t.hi.resize(out), t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t.lo[d] = lo;
    t.hi[d] = std::min(lo + 1, in - 1);
    t.frac[d] = src - static_cast<double>(lo);
  }
  return t;
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void validate(const DatasetSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidSpec, msg); };
  if (!(spec.scale_min > 0.0 && spec.scale_min <= spec.scale_max && spec.scale_max <= 1.0)) {
    fail("scale range must satisfy 0 < min <= max <= 1");
  }
  if (spec.image_size < 8) fail("image size must be at least 8");
  if (spec.objects_min < 1 || spec.objects_min > spec.objects_max) fail("objects per image must satisfy 1 <= min <= max");
  if (!(spec.min_fraction >= 0.0 && spec.min_fraction < spec.max_fraction && spec.max_fraction <= 1.0)) {
    fail("mask fraction bounds must satisfy 0 <= min < max <= 1");
  }
  if (spec.texture_amplitude < 0.0 || spec.noise_amplitude < 0.0) fail("texture amplitudes must be non-negative");
}

Sample generate_sample(const DatasetSpec& spec, std::size_t index) {
  validate(spec);
  Rng rng = sample_rng(spec.seed, index, 0);
  const std::size_t n = spec.image_size;
  const std::size_t pixels = n * n;

  std::vector<double> mask(pixels);
  std::vector<std::size_t> owner(pixels);
  std::size_t objects = 0;
  constexpr int kAttempts = 1000;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kAttempts) {
      throw Error(ErrorKind::kInvalidSpec, "could not place shapes within the mask fraction bounds");
    }
    objects = std::uniform_int_distribution<std::size_t>(spec.objects_min, spec.objects_max)(rng);
    std::vector<Shape2d> shapes;
    for (std::size_t k = 0; k < objects; ++k) shapes.push_back(random_shape(spec, rng));
    std::size_t positive = 0;
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const std::size_t i = y * n + x;
        mask[i] = 0.0;
        for (std::size_t k = 0; k < objects; ++k) {
          if (shapes[k].contains(x + 0.5, y + 0.5)) {
            mask[i] = 1.0;
            owner[i] = k;
          }
        }
        positive += mask[i] != 0.0;
      }
    }
    const double fraction = static_cast<double>(positive) / static_cast<double>(pixels);
    if (fraction >= spec.min_fraction && fraction <= spec.max_fraction) break;
  }

  // Background: base colour plus two oriented sinusoids and uniform noise.
  const auto background = random_colour(rng);
  std::array<double, 2> freq{}, phase{}, theta{};
  for (int k = 0; k < 2; ++k) {
    freq[k] = uniform(rng, 1.0, 6.0) * 2 * std::numbers::pi / static_cast<double>(n);
    phase[k] = uniform(rng, 0.0, 2 * std::numbers::pi);
    theta[k] = uniform(rng, 0.0, std::numbers::pi);
  }
  std::vector<std::array<double, 3>> colours(objects);
  for (auto& c : colours) {
    do {
      c = random_colour(rng);
    } while (distance(c, background) < 0.6);
  }

  std::vector<double> image(3 * pixels);
  Rng noise_rng = sample_rng(spec.seed, index, 1);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t i = y * n + x;
      double texture = 0.0;
      for (int k = 0; k < 2; ++k) {
        texture += std::sin(freq[k] * (std::cos(theta[k]) * x + std::sin(theta[k]) * y) + phase[k]);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = mask[i] != 0.0 ? colours[owner[i]][c] : background[c] + spec.texture_amplitude * texture / 2;
        const double noise = spec.noise_amplitude * uniform(noise_rng, -1.0, 1.0);
        image[c * pixels + i] = std::clamp(base + noise, 0.0, 1.0);
      }
    }
  }

  char id[32];
  std::snprintf(id, sizeof id, "s%06zu", index);
  return Sample{id, Tensor::from({3, n, n}, std::move(image)), Tensor::from({n, n}, std::move(mask))};
}

std::vector<Sample> generate(const DatasetSpec& spec) {
  validate(spec);
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(generate_sample(spec, i));
  return out;
}

AugmentParams random_augment_params(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng = sample_rng(seed, 0, 2);
  AugmentParams p;
  const double area = static_cast<double>(height * width);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  p.crop_w = pick(static_cast<std::size_t>(std::ceil(0.8 * width)), width);
  const auto min_h = static_cast<std::size_t>(std::ceil(0.8 * area / static_cast<double>(p.crop_w)));
  p.crop_h = pick(std::min(min_h, height), height);
  p.crop_x = pick(0, width - p.crop_w);
  p.crop_y = pick(0, height - p.crop_h);
  const long max_shift_x = static_cast<long>(width / 8), max_shift_y = static_cast<long>(height / 8);
  p.shift_x = std::uniform_int_distribution<long>(-max_shift_x, max_shift_x)(rng);
  p.shift_y = std::uniform_int_distribution<long>(-max_shift_y, max_shift_y)(rng);
  for (double& j : p.jitter) j = uniform(rng, 0.8, 1.2);
  return p;
}

Sample augment(const Sample& sample, const AugmentParams& params) {
  const auto& s = sample.image.shape();
  if (s.size() != 3 || sample.mask.rank() != 2 || sample.mask.dim(0) != s[1] || sample.mask.dim(1) != s[2]) {
    throw Error(ErrorKind::kInvalidShape, "image and mask are not aligned");
  }
  const std::size_t c = s[0], h = s[1], w = s[2];
  const std::size_t cw = params.crop_w == 0 ? w : params.crop_w;
  const std::size_t ch = params.crop_h == 0 ? h : params.crop_h;
  if (params.crop_x + cw > w || params.crop_y + ch > h) throw Error(ErrorKind::kInvalidArgument, "crop exceeds image");
  if (c > params.jitter.size()) throw Error(ErrorKind::kInvalidShape, "augment supports at most 3 channels");

  std::vector<double> img(c * ch * cw), msk(ch * cw);
  auto iv = sample.image.data();
  auto mv = sample.mask.data();
  for (std::size_t y = 0; y < ch; ++y) {
    for (std::size_t x = 0; x < cw; ++x) {
      const std::size_t src = (params.crop_y + y) * w + params.crop_x + x;
      msk[y * cw + x] = mv[src];
      for (std::size_t k = 0; k < c; ++k) img[(k * ch + y) * cw + x] = iv[k * h * w + src];
    }
  }
  const Tensor image = resize_bilinear(Tensor::from({c, ch, cw}, std::move(img)), h, w);
  const Tensor mask = resize_nearest(Tensor::from({ch, cw}, std::move(msk)), h, w);

  std::vector<double> out_img(c * h * w), out_mask(h * w);
  auto ri = image.data();
  auto rm = mask.data();
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = reflect(static_cast<long>(y) - params.shift_y, h);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = reflect(static_cast<long>(x) - params.shift_x, w);
      out_mask[y * w + x] = rm[sy * w + sx];
      for (std::size_t k = 0; k < c; ++k) {
        out_img[(k * h + y) * w + x] = std::clamp(ri[(k * h + sy) * w + sx] * params.jitter[k], 0.0, 1.0);
      }
    }
  }
  return Sample{sample.id, Tensor::from({c, h, w}, std::move(out_img)), Tensor::from({h, w}, std::move(out_mask))};
}

Sample augment(const Sample& sample, std::uint64_t seed) {
  return augment(sample, random_augment_params(sample.mask.dim(0), sample.mask.dim(1), seed));
}

Tensor resize_bilinear(const Tensor& map, std::size_t height, std::size_t width) {
  check_resize(map, height, width);
  const Planes p = planes_of(map);
  const Taps ty = linear_taps(p.height, height), tx = linear_taps(p.width, width);
  auto in = map.data();
  std::vector<double> out(p.channels * height * width);
  for (std::size_t c = 0; c < p.channels; ++c) {
    const double* plane = in.data() + c * p.height * p.width;
    for (std::size_t y = 0; y < height; ++y) {
      const double* r0 = plane + ty.lo[y] * p.width;
      const double* r1 = plane + ty.hi[y] * p.width;
      const double fy = ty.frac[y];
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = tx.frac[x];
        const double top = r0[tx.lo[x]] * (1.0 - fx) + r0[tx.hi[x]] * fx;
        const double bottom = r1[tx.lo[x]] * (1.0 - fx) + r1[tx.hi[x]] * fx;
        out[(c * height + y) * width + x] = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return Tensor::from(resized_shape(map, height, width), std::move(out));
}

Tensor resize_nearest(const Tensor& map, std::size_t height, std::size_t width) {
  check_resize(map, height, width);
  const Planes p = planes_of(map);
  auto index = [](std::size_t d, std::size_t in, std::size_t out) {
    const auto src = static_cast<std::size_t>(std::floor((static_cast<double>(d) + 0.5) * in / out));
    return std::min(src, in - 1);
  };
  auto in = map.data();
  std::vector<double> out(p.channels * height * width);
  for (std::size_t c = 0; c < p.channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = index(y, p.height, height);
      for (std::size_t x = 0; x < width; ++x) {
        out[(c * height + y) * width + x] = in[(c * p.height + sy) * p.width + index(x, p.width, width)];
      }
    }
  }
  return Tensor::from(resized_shape(map, height, width), std::move(out));
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw ParseError(path.string() + ": manifest lines need exactly three tab-separated fields", line_start);
    }
    ManifestEntry e{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)};
    if (e.id.empty() || e.image.empty() || e.mask.empty()) {
      throw ParseError(path.string() + ": empty manifest field", line_start);
    }
    if (e.image.is_relative()) e.image = base / e.image;
    if (e.mask.is_relative()) e.mask = base / e.mask;
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest " + path.string());
  for (const auto& e : entries) {
    out << e.id << '\t' << e.image.generic_string() << '\t' << e.mask.generic_string() << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, std::span<const Sample> samples) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) {
    ManifestEntry e{s.id, std::filesystem::path("images") / (s.id + ".ppm"),
                    std::filesystem::path("masks") / (s.id + ".pgm")};
    write_image(dir / e.image, s.image);
    write_image(dir / e.mask, s.mask);
    entries.push_back(std::move(e));
  }
  const auto manifest = dir / "manifest.tsv";
  write_manifest(manifest, entries);
  return manifest;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(manifest)) {
    Sample s{e.id, read_image(e.image), read_mask(e.mask)};
    if (s.image.dim(1) != s.mask.dim(0) || s.image.dim(2) != s.mask.dim(1)) {
      throw Error(ErrorKind::kInvalidShape, e.id + ": image and mask sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

bool is_validation(std::string_view id) { return fnv1a(id) % 10 == 0; }

}  // namespace racdnn
