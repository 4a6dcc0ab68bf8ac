#pragma once

// Image file I/O: binary PGM (P5) / PPM (P6) with 8-bit depth, and a raw
// float tensor format for lossless interchange:
//   magic "IMGF32\0", three u32 little-endian dims (C, H, W), then
//   C*H*W little-endian float32 values.
// The raw format may carry values outside [0,1] (noisy decoder inputs).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "certwm/core.hpp"
#include "certwm/errors.hpp"

namespace certwm {

namespace detail {

inline constexpr char kRawMagic[7] = {'I', 'M', 'G', 'F', '3', '2', '\0'};

// Netpbm header token reader: skips whitespace and '#' comments, tracking
// the byte offset for error reporting.
struct PnmHeaderReader {
  const std::vector<char>& data;
  std::size_t pos = 0;

  int next_int() {
    for (;;) {
      if (pos >= data.size()) throw ParseError("unexpected end of header", pos);
      char c = data[pos];
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
    if (!(data[pos] >= '0' && data[pos] <= '9'))
      throw ParseError("expected integer in header", pos);
    long v = 0;
    while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
      v = v * 10 + (data[pos] - '0');
      if (v > 1 << 30) throw ParseError("header value too large", pos);
      ++pos;
    }
    return static_cast<int>(v);
  }
};

inline std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return data;
}

inline std::uint32_t read_u32le(const char* p) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24;
}

inline void write_u32le(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
               static_cast<char>(v >> 16 & 0xff),
               static_cast<char>(v >> 24 & 0xff)};
  out.write(b, 4);
}

}  // namespace detail

// Raw tensor load; values are returned as-is, unclamped.
inline std::pair<ImageShape, std::vector<double>> load_raw_tensor(
    const std::string& path) {
  auto data = detail::read_all(path);
  if (data.size() < 7 + 12)
    throw ParseError("file too short for raw tensor header", data.size());
  if (std::memcmp(data.data(), detail::kRawMagic, 7) != 0)
    throw ParseError("bad raw tensor magic", 0);
  ImageShape shape;
  shape.channels = static_cast<int>(detail::read_u32le(data.data() + 7));
  shape.height = static_cast<int>(detail::read_u32le(data.data() + 11));
  shape.width = static_cast<int>(detail::read_u32le(data.data() + 15));
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0)
    throw ParseError("non-positive raw tensor dimension", 7);
  std::size_t count = shape.pixel_count();
  std::size_t need = 19 + 4 * count;
  if (data.size() < need)
    throw ParseError("truncated raw tensor payload", data.size());
  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = detail::read_u32le(data.data() + 19 + 4 * i);
    float f;
    std::memcpy(&f, &u, 4);
    pixels[i] = static_cast<double>(f);
  }
  return {shape, std::move(pixels)};
}

inline void save_raw_tensor(const std::string& path, const ImageShape& shape,
                            std::span<const double> pixels) {
  if (pixels.size() != shape.pixel_count())
    throw ShapeMismatch("pixel buffer does not match shape");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path);
  out.write(detail::kRawMagic, 7);
  detail::write_u32le(out, static_cast<std::uint32_t>(shape.channels));
  detail::write_u32le(out, static_cast<std::uint32_t>(shape.height));
  detail::write_u32le(out, static_cast<std::uint32_t>(shape.width));
  for (double v : pixels) {
    float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    detail::write_u32le(out, u);
  }
  if (!out) throw IOError("write failed: " + path);
}

// Parses P5/P6 (8-bit) or the raw tensor format into an image; 8-bit samples
// scale to v / 255.
inline ImageTensor load_image(const std::string& path) {
  auto data = detail::read_all(path);
  if (data.size() >= 7 && std::memcmp(data.data(), detail::kRawMagic, 7) == 0) {
    auto [shape, pixels] = load_raw_tensor(path);
    return ImageTensor(shape, std::move(pixels));
  }
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6'))
    throw UnsupportedFormat(path + ": expected P5/P6 PNM or IMGF32 raw tensor");
  int channels = data[1] == '5' ? 1 : 3;

  detail::PnmHeaderReader hdr{data, 2};
  int width = hdr.next_int();
  int height = hdr.next_int();
  int maxval = hdr.next_int();
  if (maxval != 255)
    throw UnsupportedFormat(path + ": only 8-bit samples are supported");
  if (hdr.pos >= data.size())
    throw ParseError("missing sample data", hdr.pos);
  ++hdr.pos;  // single whitespace byte after maxval

  std::size_t count =
      static_cast<std::size_t>(channels) * height * width;
  if (data.size() - hdr.pos < count)
    throw ParseError("truncated sample data", data.size());

  // Interleaved samples to planar C x H x W.
  std::vector<double> pixels(count);
  const unsigned char* raw =
      reinterpret_cast<const unsigned char*>(data.data() + hdr.pos);
  std::size_t hw = static_cast<std::size_t>(height) * width;
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < channels; ++c)
      pixels[c * hw + p] = raw[p * channels + c] / 255.0;
  return ImageTensor({channels, height, width}, std::move(pixels));
}

// Writes P5 for single-channel images, P6 for 3-channel; anything else goes
// through the raw tensor format.
inline void save_image(const std::string& path, const ImageTensor& img) {
  const ImageShape& s = img.shape();
  if (path.size() > 7 && path.substr(path.size() - 7) == ".imgf32") {
    save_raw_tensor(path, s, img.pixels());
    return;
  }
  if (s.channels != 1 && s.channels != 3)
    throw UnsupportedFormat("PNM output requires 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path);
  out << (s.channels == 1 ? "P5" : "P6") << "\n"
      << s.width << " " << s.height << "\n255\n";
  std::size_t hw = static_cast<std::size_t>(s.height) * s.width;
  std::vector<unsigned char> row(hw * s.channels);
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < s.channels; ++c) {
      double v = img[c * hw + p];
      row[p * s.channels + c] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  out.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  if (!out) throw IOError("write failed: " + path);
}

}  // namespace certwm
