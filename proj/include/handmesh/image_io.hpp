#pragma once

// Binary portable pixmap / graymap readers and writers plus a minimal PNG
// encoder (8-bit RGB, no filtering) on top of zlib.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "handmesh/array.hpp"

namespace handmesh {

inline std::uint8_t to_byte(double v) {
  const double scaled = v * 255.0 + 0.5;
  if (scaled <= 0.0) return 0;
  if (scaled >= 255.0) return 255;
  return static_cast<std::uint8_t>(scaled);
}

inline void write_ppm(const std::string& path, const Array& image) {
  if (image.rank() != 3 || image.shape[2] != 3) throw ShapeError("write_ppm: image must be [H,W,3]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "P6\n" << image.shape[1] << " " << image.shape[0] << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.shape[1]) * 3);
  for (int y = 0; y < image.shape[0]; ++y) {
    for (int x = 0; x < image.shape[1]; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(image.at(y, x, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

inline Array read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image file '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw ParseError("'" + path + "': not an 8-bit P6 pixmap");
  in.get();  // single whitespace after the header
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ParseError("'" + path + "': truncated pixel data");
  Array img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

inline void write_pgm(const std::string& path, const Array& mask) {
  if (mask.rank() != 2) throw ShapeError("write_pgm: mask must be [H,W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "P5\n" << mask.shape[1] << " " << mask.shape[0] << "\n255\n";
  for (int y = 0; y < mask.shape[0]; ++y)
    for (int x = 0; x < mask.shape[1]; ++x) {
      const std::uint8_t b = mask.at(y, x) != 0.0 ? 255 : 0;
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

namespace png_detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void write_chunk(std::ofstream& out, const char type[4], const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> head;
  put_be32(head, static_cast<std::uint32_t>(data.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
  crc = static_cast<std::uint32_t>(crc32(crc, reinterpret_cast<const Bytef*>(type), 4));
  if (!data.empty()) crc = static_cast<std::uint32_t>(crc32(crc, data.data(), static_cast<uInt>(data.size())));
  std::vector<std::uint8_t> tail;
  put_be32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace png_detail

inline void write_png(const std::string& path, const Array& image) {
  if (image.rank() != 3 || image.shape[2] != 3) throw ShapeError("write_png: image must be [H,W,3]");
  const int h = image.shape[0], w = image.shape[1];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  png_detail::put_be32(ihdr, static_cast<std::uint32_t>(w));
  png_detail::put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_detail::write_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) raw.push_back(to_byte(image.at(y, x, c)));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw ParseError("write_png: compression failed");
  compressed.resize(bound);
  png_detail::write_chunk(out, "IDAT", compressed);
  png_detail::write_chunk(out, "IEND", {});
}

}  // namespace handmesh
