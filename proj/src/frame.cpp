#include "rrnet/frame.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <random>
#include <system_error>

#include "rrnet/errors.hpp"

namespace rrnet {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const std::string& in, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(in[off])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + 3])) << 24);
}

// Next PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < data.size() &&
         !std::isspace(static_cast<unsigned char>(data[pos]))) {
    ++pos;
  }
  if (start == pos) throw FormatError("pgm: truncated header");
  return data.substr(start, pos - start);
}

int parse_dim(const std::string& tok, const char* what) {
  try {
    std::size_t idx = 0;
    const long v = std::stol(tok, &idx);
    if (idx != tok.size() || v <= 0 || v > 1 << 20) throw std::out_of_range("");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw FormatError(std::string("pgm: bad ") + what + " '" + tok + "'");
  }
}

}  // namespace

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return data;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw IoError("cannot create directory '" + dir.string() +
                    "': " + ec.message());
    }
  }
  static std::mt19937_64 tmp_rng(std::random_device{}());
  std::filesystem::path tmp =
      path.parent_path() /
      (path.filename().string() + ".tmp" + std::to_string(tmp_rng()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError("write failed on '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move temp file into '" + path.string() + "'");
  }
}

Frame read_pgm(const std::filesystem::path& path) {
  const std::string data = read_file_bytes(path);
  std::size_t pos = 0;
  if (pgm_token(data, pos) != "P5") {
    throw FormatError("pgm: '" + path.string() + "' is not binary PGM (P5)");
  }
  const int width = parse_dim(pgm_token(data, pos), "width");
  const int height = parse_dim(pgm_token(data, pos), "height");
  const std::string maxval = pgm_token(data, pos);
  if (maxval != "255") {
    throw FormatError("pgm: unsupported maxval " + maxval + " (need 255)");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (data.size() - pos < need) {
    throw FormatError("pgm: '" + path.string() + "' truncated");
  }
  Frame f = Frame::sized(width, height);
  std::memcpy(f.plane.data(), data.data() + pos, need);
  return f;
}

void write_pgm(const Frame& frame, const std::filesystem::path& path) {
  if (frame.width <= 0 || frame.height <= 0) {
    throw ValidationError("pgm: refusing to write empty frame");
  }
  std::string out = "P5\n" + std::to_string(frame.width) + " " +
                    std::to_string(frame.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.plane.data()),
             frame.plane.size());
  write_file_atomic(path, out);
}

PlaneI16 read_resi(const std::filesystem::path& path) {
  const std::string data = read_file_bytes(path);
  if (data.size() < 16) throw FormatError("resi: '" + path.string() + "' truncated header");
  if (data.compare(0, 4, "RESI") != 0) {
    throw FormatError("resi: bad magic in '" + path.string() + "'");
  }
  const std::uint32_t width = get_u32_le(data, 4);
  const std::uint32_t height = get_u32_le(data, 8);
  if (width == 0 || height == 0 || width > (1u << 20) || height > (1u << 20)) {
    throw FormatError("resi: implausible dimensions in '" + path.string() + "'");
  }
  const std::size_t need = 2ull * width * height;
  if (data.size() - 16 < need) {
    throw FormatError("resi: '" + path.string() + "' truncated");
  }
  PlaneI16 p = PlaneI16::sized(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const auto lo = static_cast<unsigned char>(data[16 + 2 * i]);
    const auto hi = static_cast<unsigned char>(data[16 + 2 * i + 1]);
    p.v[i] = static_cast<std::int16_t>(
        static_cast<std::uint16_t>(lo) |
        (static_cast<std::uint16_t>(hi) << 8));
  }
  return p;
}

void write_resi(const PlaneI16& plane, const std::filesystem::path& path) {
  if (plane.width <= 0 || plane.height <= 0) {
    throw ValidationError("resi: refusing to write empty plane");
  }
  std::string out = "RESI";
  put_u32_le(out, static_cast<std::uint32_t>(plane.width));
  put_u32_le(out, static_cast<std::uint32_t>(plane.height));
  put_u32_le(out, 0);  // reserved, pads the header to 16 bytes
  for (std::int16_t s : plane.v) {
    const auto u = static_cast<std::uint16_t>(s);
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
  }
  write_file_atomic(path, out);
}

}  // namespace rrnet
