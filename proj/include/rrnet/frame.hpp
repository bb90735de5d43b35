#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rrnet {

// Single 8-bit luma plane, row-major.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> plane;

  static Frame sized(int w, int h, std::uint8_t fill = 0) {
    Frame f;
    f.width = w;
    f.height = h;
    f.plane.assign(static_cast<std::size_t>(w) * h, fill);
    return f;
  }

  std::uint8_t at(int x, int y) const {
    return plane[static_cast<std::size_t>(y) * width + x];
  }
  void set(int x, int y, std::uint8_t v) {
    plane[static_cast<std::size_t>(y) * width + x] = v;
  }
  bool same_dims(const Frame& o) const {
    return width == o.width && height == o.height;
  }
};

// Signed residual plane, values in [-255, 255].
struct PlaneI16 {
  int width = 0;
  int height = 0;
  std::vector<std::int16_t> v;

  static PlaneI16 sized(int w, int h, std::int16_t fill = 0) {
    PlaneI16 p;
    p.width = w;
    p.height = h;
    p.v.assign(static_cast<std::size_t>(w) * h, fill);
    return p;
  }

  std::int16_t at(int x, int y) const {
    return v[static_cast<std::size_t>(y) * width + x];
  }
  void set(int x, int y, std::int16_t s) {
    v[static_cast<std::size_t>(y) * width + x] = s;
  }
};

// Binary PGM (P5), 8-bit.
Frame read_pgm(const std::filesystem::path& path);
void write_pgm(const Frame& frame, const std::filesystem::path& path);

// Raw residual plane: 16-byte header (magic "RESI", u32 width, u32 height,
// u32 reserved, all little-endian) followed by row-major little-endian
// int16 samples.
PlaneI16 read_resi(const std::filesystem::path& path);
void write_resi(const PlaneI16& plane, const std::filesystem::path& path);

// Whole-file helpers; writes go to a temp file in the target directory and
// are renamed into place.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes);

}  // namespace rrnet
