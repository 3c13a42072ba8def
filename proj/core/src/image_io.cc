#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "racdnn/data.h"
#include "racdnn/error.h"

namespace racdnn {

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  // Offset of the first digit of the most recent number.
  std::size_t last_start() const { return last_start_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (is_space(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = last_start_ = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 24)) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("expected ") + what, start);
    return value;
  }

  void single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) throw ParseError("expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t last_start_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t to_byte(double v) {
  if (std::isnan(v)) throw Error(ErrorKind::kNumeric, "NaN pixel value");
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

}  // namespace

ByteImage parse_pnm(std::span<const std::uint8_t> file) {
  if (file.size() < 2 || file[0] != 'P' || (file[1] != '5' && file[1] != '6')) {
    throw ParseError("expected P5 or P6 magic", 0);
  }
  ByteImage image;
  image.channels = file[1] == '6' ? 3 : 1;
  HeaderReader reader(file, 2);
  if (reader.pos() < file.size() && !is_space(file[reader.pos()]) && file[reader.pos()] != '#') {
    throw ParseError("expected whitespace after magic", reader.pos());
  }
  image.width = reader.number("width");
  if (image.width == 0) throw ParseError("zero image width", reader.last_start());
  image.height = reader.number("height");
  if (image.height == 0) throw ParseError("zero image height", reader.last_start());
  const std::size_t maxval = reader.number("maxval");
  if (maxval != 255) throw ParseError("maxval must be 255, got " + std::to_string(maxval), reader.last_start());
  reader.single_space();

  const std::size_t expected = image.width * image.height * image.channels;
  const std::size_t available = file.size() - reader.pos();
  if (available < expected) {
    throw ParseError("raster truncated: expected " + std::to_string(expected) + " bytes, found " +
                         std::to_string(available),
                     file.size());
  }
  if (available > expected) throw ParseError("trailing bytes after raster", reader.pos() + expected);
  image.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(reader.pos()), file.end());
  return image;
}

std::vector<std::uint8_t> encode_pnm(const ByteImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::kInvalidShape, "netpbm images have 1 or 3 channels");
  }
  if (image.bytes.size() != image.width * image.height * image.channels || image.width == 0 || image.height == 0) {
    throw Error(ErrorKind::kInvalidShape, "raster size does not match dimensions");
  }
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.bytes.begin(), image.bytes.end());
  return out;
}

ByteImage read_pnm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  try {
    return parse_pnm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_pnm(const std::filesystem::path& path, const ByteImage& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Tensor to_tensor(const ByteImage& image) {
  const std::size_t c = image.channels, h = image.height, w = image.width;
  std::vector<double> values(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        values[(k * h + y) * w + x] = image.bytes[(y * w + x) * c + k] / 255.0;
      }
    }
  }
  return Tensor::from({c, h, w}, std::move(values));
}

ByteImage to_bytes(const Tensor& image) {
  ByteImage out;
  const auto& s = image.shape();
  if (s.size() == 2) {
    out.channels = 1, out.height = s[0], out.width = s[1];
  } else if (s.size() == 3 && (s[0] == 1 || s[0] == 3)) {
    out.channels = s[0], out.height = s[1], out.width = s[2];
  } else {
    throw Error(ErrorKind::kInvalidShape, "cannot encode tensor of shape " + shape_str(s) + " as an image");
  }
  const std::size_t c = out.channels, h = out.height, w = out.width;
  auto v = image.data();
  out.bytes.resize(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) out.bytes[(y * w + x) * c + k] = to_byte(v[(k * h + y) * w + x]);
    }
  }
  return out;
}

Tensor read_image(const std::filesystem::path& path) {
  const ByteImage raw = read_pnm(path);
  if (raw.channels != 3) throw Error(ErrorKind::kInvalidShape, path.string() + ": expected an RGB (P6) image");
  return to_tensor(raw);
}

Tensor read_mask(const std::filesystem::path& path) {
  const ByteImage raw = read_pnm(path);
  if (raw.channels != 1) throw Error(ErrorKind::kInvalidShape, path.string() + ": expected a grayscale (P5) mask");
  std::vector<double> values(raw.bytes.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = raw.bytes[i] >= 128 ? 1.0 : 0.0;
  return Tensor::from({raw.height, raw.width}, std::move(values));
}

void write_image(const std::filesystem::path& path, const Tensor& image) { write_pnm(path, to_bytes(image)); }

}  // namespace racdnn
