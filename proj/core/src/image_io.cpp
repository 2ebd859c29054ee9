#include "flowdeblur/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "flowdeblur/binary_io.hpp"

namespace flowdeblur {

namespace binary {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace binary

namespace {

// Netpbm header tokenizer: whitespace-separated tokens, '#' comments to end of line.
class HeaderCursor {
 public:
  explicit HeaderCursor(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::size_t pos() const { return pos_; }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      value = value * 10 + (b_[pos_] - '0');
      if (value > (1 << 24)) throw ParseError(std::string("image header: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("image header: expected ") + what, start);
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      throw ParseError("image header: expected whitespace before raster", pos_);
    }
    ++pos_;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 2;
};

}  // namespace

std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

Tensor<float> decode_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw ParseError("image: expected P6 or P5 magic", 0);
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderCursor cur(bytes);
  const int w = cur.number("width");
  const int h = cur.number("height");
  const std::size_t maxval_at = cur.pos();
  const int maxval = cur.number("maxval");
  if (maxval != 255) throw ParseError("image: only maxval 255 is supported", maxval_at);
  if (w <= 0 || h <= 0) throw ParseError("image: zero extent", maxval_at);
  cur.single_space();
  const std::size_t start = cur.pos();
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - start < need) {
    throw ParseError("image: truncated raster, expected " + std::to_string(need) + " bytes",
                     bytes.size());
  }
  Tensor<float> out(1, channels, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::uint8_t b = bytes[start + (static_cast<std::size_t>(y) * w + x) * channels + c];
        out.at(0, c, y, x) = static_cast<float>(b) / 255.0f;
      }
    }
  }
  return out;
}

Tensor<float> load_image(const std::string& path) {
  try {
    return decode_image(binary::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_image(const Tensor<float>& image) {
  if (image.n() < 1 || (image.c() != 3 && image.c() != 1)) {
    throw ShapeError("save_image: need 1 or 3 channels, got " + image.shape().str());
  }
  require_finite(image, "save_image");
  const int channels = image.c();
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, channels == 3 ? "P6\n" : "P5\n");
  binary::put_bytes(out, std::to_string(image.w()) + " " + std::to_string(image.h()) + "\n255\n");
  out.reserve(out.size() + image.plane() * channels);
  for (int y = 0; y < image.h(); ++y) {
    for (int x = 0; x < image.w(); ++x) {
      for (int c = 0; c < channels; ++c) out.push_back(to_byte(image.at(0, c, y, x)));
    }
  }
  return out;
}

void save_image(const Tensor<float>& image, const std::string& path) {
  binary::write_file(path, encode_image(image));
}

FlowField<float> decode_flo(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes, "flo");
  const std::string magic = r.bytes(4, "magic");
  if (magic != std::string(kFloMagic, 4)) throw ParseError("flo: bad magic", 0);
  const std::int32_t w = r.i32("width");
  const std::int32_t h = r.i32("height");
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw ParseError("flo: invalid dimensions", 4);
  }
  const std::size_t count = static_cast<std::size_t>(w) * h * 2;
  if (r.remaining() != count * 4) {
    throw ParseError("flo: payload size " + std::to_string(r.remaining()) + " does not match " +
                         std::to_string(w) + "x" + std::to_string(h),
                     r.offset());
  }
  FlowField<float> flow(1, 2, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      flow.at(0, 0, y, x) = r.f32("u");
      flow.at(0, 1, y, x) = r.f32("v");
    }
  }
  return flow;
}

FlowField<float> load_flo(const std::string& path) {
  try {
    return decode_flo(binary::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_flo(const FlowField<float>& flow) {
  require_flow(flow, "save_flo");
  require_finite(flow, "save_flo");
  std::vector<std::uint8_t> out;
  out.reserve(12 + flow.plane() * 8);
  binary::put_bytes(out, std::string_view(kFloMagic, 4));
  binary::put_i32(out, flow.w());
  binary::put_i32(out, flow.h());
  for (int y = 0; y < flow.h(); ++y) {
    for (int x = 0; x < flow.w(); ++x) {
      binary::put_f32(out, flow.at(0, 0, y, x));
      binary::put_f32(out, flow.at(0, 1, y, x));
    }
  }
  return out;
}

void save_flo(const FlowField<float>& flow, const std::string& path) {
  binary::write_file(path, encode_flo(flow));
}

}  // namespace flowdeblur
