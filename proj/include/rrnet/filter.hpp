#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rrnet/codec.hpp"
#include "rrnet/metrics.hpp"
#include "rrnet/model.hpp"

namespace rrnet {

struct TileOptions {
  int tile_size = 64;
  int overlap = 8;
};

// Runs the filter over a coded frame in overlapping tiles, averaging the
// overlaps; output clipped to [0,255] and rounded. The second model input is
// taken from the triple (residual plane, or the partition mean mask for the
// partition variant). Frames smaller than one tile are edge-padded and
// cropped back.
Frame apply_filter(ModelWeights<float>& model, const CodedTriple& triple,
                   const TileOptions& tiles = {});

// Weights for one variant across the tested qps.
struct VariantModels {
  std::string label;
  std::map<int, std::shared_ptr<ModelWeights<float>>> per_qp;
};

struct EvalReport {
  std::vector<std::string> sequences;
  std::vector<std::string> variants;
  std::vector<int> qps;
  // [variant][sequence]: BD-rate of the filtered curve vs the unfiltered
  // anchor; final column in text output is the per-variant mean.
  std::vector<std::vector<double>> bd_vs_anchor;
  // [variant i][variant j]: mean over sequences of BD-rate(i as test, j as
  // anchor curve).
  std::vector<std::vector<double>> pairwise_bd;
  // [variant][qp]: mean over sequences of psnr(filtered) - psnr(recon), dB.
  std::vector<std::vector<double>> mean_gain_db;
  int infinite_psnr_count = 0;

  double mean_bd_vs_anchor(std::size_t variant) const;
  double mean_gain_at(std::size_t variant, int qp) const;
};

// Encodes the corpus at every qp, applies each variant's per-qp model, and
// tabulates BD-rates vs the unfiltered anchor, pairwise BD-rates, and mean
// PSNR gains. Raw RD points are exposed for report files.
struct RDTable {
  // [sequence][qp]: anchor rate/psnr plus per-variant filtered psnr.
  std::vector<std::vector<RDPoint>> anchor;
  std::vector<std::vector<std::vector<double>>> filtered_psnr;  // [v][seq][qp]
};

EvalReport ablation_report(const std::vector<std::pair<std::string, Frame>>& corpus,
                           std::vector<VariantModels>& variants,
                           const std::vector<int>& qps,
                           const CodecParams& codec = {},
                           const TileOptions& tiles = {},
                           RDTable* rd_out = nullptr);

void write_report_csv(const EvalReport& report,
                      const std::filesystem::path& path);
void write_report_text(const EvalReport& report,
                       const std::filesystem::path& path);

struct CrossQpResult {
  std::vector<int> qps;
  // gain(m, q): mean PSNR improvement of model m applied to data coded at q.
  Eigen::MatrixXd gain;
  // entry(m, q) = gain(m, q) - gain(q, q); diagonal is identically zero.
  Eigen::MatrixXd delta;

  double mean_abs_delta_for_qp_distance(int distance) const;
};

CrossQpResult cross_qp_matrix(const std::vector<std::pair<std::string, Frame>>& corpus,
                              std::map<int, std::shared_ptr<ModelWeights<float>>>& models,
                              const std::vector<int>& qps,
                              const CodecParams& codec = {},
                              const TileOptions& tiles = {});

void write_cross_qp_csv(const CrossQpResult& result,
                        const std::filesystem::path& path);

// Runs the variant forward over the whole coded frame and writes one PGM
// per channel of the named activation, min-max normalized to [0,255]
// (constant channels map to mid-gray). Unknown names raise an error listing
// the valid ones.
std::vector<std::filesystem::path> export_feature_maps(
    ModelWeights<float>& model, const CodedTriple& triple,
    const std::string& layer, const std::filesystem::path& out_dir);

}  // namespace rrnet
