#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rrnet/codec.hpp"
#include "rrnet/frame.hpp"

namespace rrnet {

inline constexpr int kPatchSize = 64;

// One 64x64 training sample: three co-located planes plus the patch origin.
// Paths are relative to the manifest file.
struct SampleRecord {
  std::string original_path;
  std::string reconstruction_path;
  std::string residual_path;
  int qp = 0;
  int x = 0;
  int y = 0;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  int patch_size = kPatchSize;
  std::vector<SampleRecord> records;
};

struct DatasetBuildResult {
  DatasetManifest manifest;
  int images_used = 0;
  int images_skipped = 0;  // smaller than one patch
};

// Encodes every image at every qp, writes the full planes (original PGM,
// reconstruction PGM, residual RESI, partition sidecar) under out_dir and
// tiles patch records at the given stride. Writes out_dir/manifest.tsv.
DatasetBuildResult build_dataset(const std::vector<Frame>& images,
                                 const std::vector<int>& qps, int stride,
                                 const std::filesystem::path& out_dir,
                                 const CodecParams& params = {},
                                 bool lossless = false);

// Tab-separated, one record per line: original, reconstruction, residual,
// qp, x, y.
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);

// Loads and validates: every referenced plane exists, the three planes of a
// record share dimensions, and the patch fits inside them.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Records at one qp only (training requires a uniform-qp manifest).
DatasetManifest filter_by_qp(const DatasetManifest& manifest, int qp);

// Partition sidecar convention: reconstruction plane "<stem>.recon.pgm" has
// its partition at "<stem>.partition.txt".
std::filesystem::path partition_sidecar_path(
    const std::filesystem::path& reconstruction_path);

}  // namespace rrnet
