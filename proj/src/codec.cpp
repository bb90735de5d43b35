#include "rrnet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "rrnet/errors.hpp"

namespace rrnet {

namespace {

bool supported_block(int n) {
  return n == 4 || n == 8 || n == 16 || n == 32;
}

int pad_up(int v, int multiple) {
  return ((v + multiple - 1) / multiple) * multiple;
}

Frame pad_frame(const Frame& frame, int multiple) {
  const int pw = pad_up(frame.width, multiple);
  const int ph = pad_up(frame.height, multiple);
  if (pw == frame.width && ph == frame.height) return frame;
  Frame out = Frame::sized(pw, ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = std::min(y, frame.height - 1);
    for (int x = 0; x < pw; ++x) {
      out.set(x, y, frame.at(std::min(x, frame.width - 1), sy));
    }
  }
  return out;
}

Frame crop_frame(const Frame& frame, int width, int height) {
  if (frame.width == width && frame.height == height) return frame;
  Frame out = Frame::sized(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.set(x, y, frame.at(x, y));
  }
  return out;
}

PlaneI16 crop_plane(const PlaneI16& plane, int width, int height) {
  if (plane.width == width && plane.height == height) return plane;
  PlaneI16 out = PlaneI16::sized(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.set(x, y, plane.at(x, y));
  }
  return out;
}

void split_block(const Frame& frame, const CodecParams& params, int x, int y,
                 int size, std::vector<Block>& out) {
  if (size > params.min_block &&
      block_variance(frame, x, y, size) > params.var_threshold) {
    const int h = size / 2;
    split_block(frame, params, x, y, h, out);
    split_block(frame, params, x + h, y, h, out);
    split_block(frame, params, x, y + h, h, out);
    split_block(frame, params, x + h, y + h, h, out);
  } else {
    out.push_back(Block{x, y, size});
  }
}

}  // namespace

double round_half_away(double v) {
  return v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
}

double block_variance(const Frame& frame, int x, int y, int size) {
  // int64 sums are exact for 8-bit samples up to blocks far larger than 32
  std::int64_t sum = 0;
  std::int64_t sumsq = 0;
  for (int j = 0; j < size; ++j) {
    const int sy = std::min(y + j, frame.height - 1);
    for (int i = 0; i < size; ++i) {
      const int sx = std::min(x + i, frame.width - 1);
      const std::int64_t v = frame.at(sx, sy);
      sum += v;
      sumsq += v * v;
    }
  }
  const double n = static_cast<double>(size) * size;
  const double mean = static_cast<double>(sum) / n;
  return static_cast<double>(sumsq) / n - mean * mean;
}

Partition partition_quadtree(const Frame& frame, const CodecParams& params) {
  if (!supported_block(params.max_block) || !supported_block(params.min_block) ||
      params.min_block > params.max_block) {
    throw ValidationError("partition: block sizes must be in {4,8,16,32} with "
                          "min <= max");
  }
  if (frame.width <= 0 || frame.height <= 0) {
    throw ValidationError("partition: empty frame");
  }
  Partition part;
  part.width = pad_up(frame.width, params.max_block);
  part.height = pad_up(frame.height, params.max_block);
  for (int y = 0; y < part.height; y += params.max_block) {
    for (int x = 0; x < part.width; x += params.max_block) {
      split_block(frame, params, x, y, params.max_block, part.blocks);
    }
  }
  return part;
}

int dc_predict_value(const Frame& recon, int x, int y, int size) {
  std::int64_t sum = 0;
  int count = 0;
  if (y > 0) {
    for (int i = 0; i < size; ++i) {
      sum += recon.at(x + i, y - 1);
      ++count;
    }
  }
  if (x > 0) {
    for (int j = 0; j < size; ++j) {
      sum += recon.at(x - 1, y + j);
      ++count;
    }
  }
  if (count == 0) return 128;
  return static_cast<int>(round_half_away(static_cast<double>(sum) / count));
}

const Eigen::MatrixXd& dct_basis(int n) {
  if (!supported_block(n)) {
    throw ValidationError("dct: unsupported block size " + std::to_string(n));
  }
  static std::map<int, Eigen::MatrixXd> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    Eigen::MatrixXd basis(n, n);
    const double pi = std::acos(-1.0);
    for (int u = 0; u < n; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int i = 0; i < n; ++i) {
        basis(u, i) = alpha * std::cos(pi * (2.0 * i + 1.0) * u / (2.0 * n));
      }
    }
    it = cache.emplace(n, std::move(basis)).first;
  }
  return it->second;
}

Eigen::MatrixXd dct2d(const Eigen::MatrixXd& block) {
  if (block.rows() != block.cols()) {
    throw ValidationError("dct2d: non-square block");
  }
  const Eigen::MatrixXd& basis = dct_basis(static_cast<int>(block.rows()));
  return basis * block * basis.transpose();
}

Eigen::MatrixXd idct2d(const Eigen::MatrixXd& coefs) {
  if (coefs.rows() != coefs.cols()) {
    throw ValidationError("idct2d: non-square block");
  }
  const Eigen::MatrixXd& basis = dct_basis(static_cast<int>(coefs.rows()));
  return basis.transpose() * coefs * basis;
}

double quantize_step(int qp) {
  if (qp < 0 || qp > 51) {
    throw ValidationError("qp " + std::to_string(qp) + " out of [0, 51]");
  }
  return std::pow(2.0, (qp - 4) / 6.0);
}

Eigen::MatrixXd quantize(const Eigen::MatrixXd& coefs, int qp) {
  const double step = quantize_step(qp);
  return coefs.unaryExpr(
      [step](double c) { return round_half_away(c / step); });
}

Eigen::MatrixXd dequantize(const Eigen::MatrixXd& qcoefs, int qp) {
  const double step = quantize_step(qp);
  return qcoefs * step;
}

CodedTriple encode_frame(const Frame& frame, int qp, bool lossless,
                         const CodecParams& params) {
  quantize_step(qp);  // validates qp even when unused
  if (frame.width <= 0 || frame.height <= 0) {
    throw ValidationError("encode_frame: empty frame");
  }
  const Frame padded = pad_frame(frame, params.max_block);
  Partition part = partition_quadtree(padded, params);

  Frame pred = Frame::sized(padded.width, padded.height);
  Frame recon = Frame::sized(padded.width, padded.height);
  PlaneI16 resi = PlaneI16::sized(padded.width, padded.height);
  double rate = 0.0;

  Eigen::MatrixXd block;
  for (const Block& b : part.blocks) {
    const int p = dc_predict_value(recon, b.x, b.y, b.size);
    if (lossless) {
      for (int j = 0; j < b.size; ++j) {
        for (int i = 0; i < b.size; ++i) {
          const int r = padded.at(b.x + i, b.y + j) - p;
          resi.set(b.x + i, b.y + j, static_cast<std::int16_t>(r));
          rate += std::log2(1.0 + std::abs(r));
          const int rec = std::clamp(p + r, 0, 255);
          recon.set(b.x + i, b.y + j, static_cast<std::uint8_t>(rec));
          pred.set(b.x + i, b.y + j, static_cast<std::uint8_t>(p));
        }
      }
      continue;
    }
    block.resize(b.size, b.size);
    for (int j = 0; j < b.size; ++j) {
      for (int i = 0; i < b.size; ++i) {
        block(j, i) = static_cast<double>(padded.at(b.x + i, b.y + j)) - p;
      }
    }
    const Eigen::MatrixXd qcoefs = quantize(dct2d(block), qp);
    for (int j = 0; j < b.size; ++j) {
      for (int i = 0; i < b.size; ++i) {
        rate += std::log2(1.0 + std::abs(qcoefs(j, i)));
      }
    }
    const Eigen::MatrixXd rec_residual = idct2d(dequantize(qcoefs, qp));
    for (int j = 0; j < b.size; ++j) {
      for (int i = 0; i < b.size; ++i) {
        const int r = std::clamp(
            static_cast<int>(round_half_away(rec_residual(j, i))), -255, 255);
        resi.set(b.x + i, b.y + j, static_cast<std::int16_t>(r));
        const int rec = std::clamp(p + r, 0, 255);
        recon.set(b.x + i, b.y + j, static_cast<std::uint8_t>(rec));
        pred.set(b.x + i, b.y + j, static_cast<std::uint8_t>(p));
      }
    }
  }

  CodedTriple triple;
  triple.original = frame;
  triple.prediction = crop_frame(pred, frame.width, frame.height);
  triple.reconstruction = crop_frame(recon, frame.width, frame.height);
  triple.residual = crop_plane(resi, frame.width, frame.height);
  triple.partition = std::move(part);
  triple.qp = qp;
  triple.rate_proxy = rate;
  return triple;
}

Frame partition_mean_mask(const Frame& recon, const Partition& partition) {
  if (partition.width < recon.width || partition.height < recon.height) {
    throw ValidationError("partition_mean_mask: partition extent " +
                          std::to_string(partition.width) + "x" +
                          std::to_string(partition.height) +
                          " does not cover the frame");
  }
  Frame mask = Frame::sized(recon.width, recon.height);
  for (const Block& b : partition.blocks) {
    const int x0 = std::max(b.x, 0);
    const int y0 = std::max(b.y, 0);
    const int x1 = std::min(b.x + b.size, recon.width);
    const int y1 = std::min(b.y + b.size, recon.height);
    if (x0 >= x1 || y0 >= y1) continue;
    std::int64_t sum = 0;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) sum += recon.at(x, y);
    }
    const auto count = static_cast<double>(x1 - x0) * (y1 - y0);
    const int mean =
        static_cast<int>(round_half_away(static_cast<double>(sum) / count));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        mask.set(x, y, static_cast<std::uint8_t>(std::clamp(mean, 0, 255)));
      }
    }
  }
  return mask;
}

void write_partition(const Partition& partition,
                     const std::filesystem::path& path) {
  std::ostringstream out;
  out << partition.width << " " << partition.height << "\n";
  for (const Block& b : partition.blocks) {
    out << b.x << " " << b.y << " " << b.size << "\n";
  }
  write_file_atomic(path, out.str());
}

Partition read_partition(const std::filesystem::path& path) {
  std::istringstream in(read_file_bytes(path));
  Partition part;
  if (!(in >> part.width >> part.height) || part.width <= 0 ||
      part.height <= 0) {
    throw FormatError("partition: bad header in '" + path.string() + "'");
  }
  Block b;
  while (in >> b.x >> b.y >> b.size) {
    if (!supported_block(b.size) || b.x < 0 || b.y < 0) {
      throw FormatError("partition: bad block in '" + path.string() + "'");
    }
    part.blocks.push_back(b);
  }
  if (!in.eof()) {
    throw FormatError("partition: trailing garbage in '" + path.string() + "'");
  }
  if (part.blocks.empty()) {
    throw FormatError("partition: no blocks in '" + path.string() + "'");
  }
  return part;
}

}  // namespace rrnet
