#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "rrnet/frame.hpp"

namespace rrnet {

struct Block {
  int x = 0;
  int y = 0;
  int size = 0;
};

// Square-block tiling of a frame. width/height give the tiled extent, which
// is the frame padded up to the superblock grid; blocks are stored in coding
// order (superblocks in raster order, z-scan depth-first inside each).
struct Partition {
  int width = 0;
  int height = 0;
  std::vector<Block> blocks;
};

struct CodecParams {
  int max_block = 32;
  int min_block = 4;
  double var_threshold = 100.0;
};

// One coded frame: everything the filter and the trainer consume.
// reconstruction == clip(prediction + residual) holds for every pixel; the
// residual plane stores what the codec actually added back, after
// dequantization and inverse transform, before clipping.
struct CodedTriple {
  Frame original;
  Frame prediction;
  Frame reconstruction;
  PlaneI16 residual;
  Partition partition;
  int qp = 0;
  double rate_proxy = 0.0;
};

double round_half_away(double v);

// Population variance of the block's samples; coordinates past the frame
// border are clamped (edge replication).
double block_variance(const Frame& frame, int x, int y, int size);

// Splits a block into four children while variance > threshold and
// size > min_block.
Partition partition_quadtree(const Frame& frame, const CodecParams& params = {});

// Mean of the already-reconstructed top row and left column, rounded half
// away from zero; 128 when the block touches the top-left corner.
int dc_predict_value(const Frame& recon, int x, int y, int size);

// Orthonormal 2-D DCT-II for n in {4, 8, 16, 32}.
const Eigen::MatrixXd& dct_basis(int n);
Eigen::MatrixXd dct2d(const Eigen::MatrixXd& block);
Eigen::MatrixXd idct2d(const Eigen::MatrixXd& coefs);

// step = 2^((qp-4)/6), qp in [0, 51].
double quantize_step(int qp);
Eigen::MatrixXd quantize(const Eigen::MatrixXd& coefs, int qp);
Eigen::MatrixXd dequantize(const Eigen::MatrixXd& qcoefs, int qp);

// Intra encode: per block in coding order, DC-predict from reconstructed
// neighbors, transform/quantize/reconstruct the residual, clip. Frames not
// divisible by max_block are edge-replicated up and the planes cropped back.
CodedTriple encode_frame(const Frame& frame, int qp, bool lossless = false,
                         const CodecParams& params = {});

// Each pixel replaced by the mean of its partition block (blocks clipped to
// the frame where the partition covers padded extent).
Frame partition_mean_mask(const Frame& recon, const Partition& partition);

// Text form: first line "width height", then one "x y size" line per block.
void write_partition(const Partition& partition,
                     const std::filesystem::path& path);
Partition read_partition(const std::filesystem::path& path);

}  // namespace rrnet
