#include "rrnet/filter.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "rrnet/errors.hpp"

namespace rrnet {

namespace {

Frame pad_frame_to(const Frame& f, int width, int height) {
  if (f.width == width && f.height == height) return f;
  Frame out = Frame::sized(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(y, f.height - 1);
    for (int x = 0; x < width; ++x) {
      out.set(x, y, f.at(std::min(x, f.width - 1), sy));
    }
  }
  return out;
}

PlaneI16 pad_plane_to(const PlaneI16& p, int width, int height) {
  if (p.width == width && p.height == height) return p;
  PlaneI16 out = PlaneI16::sized(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(y, p.height - 1);
    for (int x = 0; x < width; ++x) {
      out.set(x, y, p.at(std::min(x, p.width - 1), sy));
    }
  }
  return out;
}

std::vector<int> tile_positions(int extent, int tile, int step) {
  std::vector<int> out;
  int p = 0;
  while (true) {
    out.push_back(p);
    if (p + tile >= extent) break;
    p = std::min(p + step, extent - tile);
  }
  return out;
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    if (c == '.' || c == '/' || c == ' ') c = '_';
  }
  return out;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

double finite_mean(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

}  // namespace

Frame apply_filter(ModelWeights<float>& model, const CodedTriple& triple,
                   const TileOptions& tiles) {
  if (tiles.tile_size < 4 || tiles.tile_size % 4 != 0) {
    throw ValidationError("apply_filter: tile size must be a positive multiple of 4");
  }
  if (tiles.overlap < 0 || tiles.overlap >= tiles.tile_size) {
    throw ValidationError("apply_filter: overlap must lie in [0, tile_size)");
  }
  const Variant variant = model.config().variant;
  const bool dual = variant_is_dual(variant);
  const Frame& recon = triple.reconstruction;
  if (recon.width <= 0 || recon.height <= 0) {
    throw ValidationError("apply_filter: empty reconstruction");
  }

  const int tile = tiles.tile_size;
  const int pw = std::max(recon.width, tile);
  const int ph = std::max(recon.height, tile);
  const Frame recon_p = pad_frame_to(recon, pw, ph);
  PlaneI16 resi_p;
  Frame mask_p;
  if (variant == Variant::kPartitionRecon) {
    mask_p = pad_frame_to(partition_mean_mask(recon, triple.partition), pw, ph);
  } else if (dual) {
    if (triple.residual.width != recon.width ||
        triple.residual.height != recon.height) {
      throw ShapeError("spatial", "apply_filter: residual plane dims differ "
                                  "from the reconstruction");
    }
    resi_p = pad_plane_to(triple.residual, pw, ph);
  }

  const std::vector<int> xs = tile_positions(pw, tile, tile - tiles.overlap);
  const std::vector<int> ys = tile_positions(ph, tile, tile - tiles.overlap);
  std::vector<std::pair<int, int>> origins;
  origins.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) origins.emplace_back(x, y);
  }

  std::vector<double> sum(static_cast<std::size_t>(pw) * ph, 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(pw) * ph, 0);
  const float inv255 = 1.0f / 255.0f;
  const Index plane = static_cast<Index>(tile) * tile;
  constexpr std::size_t kChunk = 16;

  for (std::size_t first = 0; first < origins.size(); first += kChunk) {
    const auto n = static_cast<Index>(
        std::min(kChunk, origins.size() - first));
    Tensor<float> recon_t(Shape4{n, 1, tile, tile});
    Tensor<float> aux_t;
    if (dual) aux_t = Tensor<float>(Shape4{n, 1, tile, tile});
    for (Index b = 0; b < n; ++b) {
      const auto [x0, y0] = origins[first + static_cast<std::size_t>(b)];
      float* rdst = recon_t.data() + b * plane;
      for (int y = 0; y < tile; ++y) {
        const std::uint8_t* row = recon_p.plane.data() +
                                  static_cast<std::size_t>(y0 + y) * pw + x0;
        for (int x = 0; x < tile; ++x) rdst[y * tile + x] = row[x] * inv255;
      }
      if (variant == Variant::kPartitionRecon) {
        float* adst = aux_t.data() + b * plane;
        for (int y = 0; y < tile; ++y) {
          const std::uint8_t* row = mask_p.plane.data() +
                                    static_cast<std::size_t>(y0 + y) * pw + x0;
          for (int x = 0; x < tile; ++x) adst[y * tile + x] = row[x] * inv255;
        }
      } else if (dual) {
        float* adst = aux_t.data() + b * plane;
        for (int y = 0; y < tile; ++y) {
          const std::int16_t* row =
              resi_p.v.data() + static_cast<std::size_t>(y0 + y) * pw + x0;
          for (int x = 0; x < tile; ++x) adst[y * tile + x] = row[x] * inv255;
        }
      }
    }
    Tensor<float> out = model_forward(model, recon_t, aux_t);
    for (Index b = 0; b < n; ++b) {
      const auto [x0, y0] = origins[first + static_cast<std::size_t>(b)];
      const float* src = out.data() + b * plane;
      for (int y = 0; y < tile; ++y) {
        double* srow = sum.data() + static_cast<std::size_t>(y0 + y) * pw + x0;
        int* crow = cnt.data() + static_cast<std::size_t>(y0 + y) * pw + x0;
        for (int x = 0; x < tile; ++x) {
          srow[x] += static_cast<double>(src[y * tile + x]) * 255.0;
          crow[x] += 1;
        }
      }
    }
  }

  Frame out = Frame::sized(recon.width, recon.height);
  for (int y = 0; y < recon.height; ++y) {
    for (int x = 0; x < recon.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * pw + x;
      const double v = sum[i] / cnt[i];
      out.set(x, y, static_cast<std::uint8_t>(
                        std::clamp<long>(std::lround(v), 0, 255)));
    }
  }
  return out;
}

double EvalReport::mean_bd_vs_anchor(std::size_t variant) const {
  return finite_mean(bd_vs_anchor.at(variant));
}

double EvalReport::mean_gain_at(std::size_t variant, int qp) const {
  for (std::size_t qi = 0; qi < qps.size(); ++qi) {
    if (qps[qi] == qp) return mean_gain_db.at(variant).at(qi);
  }
  throw ValidationError("report holds no qp " + std::to_string(qp));
}

EvalReport ablation_report(const std::vector<std::pair<std::string, Frame>>& corpus,
                           std::vector<VariantModels>& variants,
                           const std::vector<int>& qps,
                           const CodecParams& codec, const TileOptions& tiles,
                           RDTable* rd_out) {
  if (corpus.empty()) throw ValidationError("ablation_report: empty corpus");
  if (variants.empty()) throw ValidationError("ablation_report: no variants");
  if (qps.empty()) throw ValidationError("ablation_report: no qps");
  for (VariantModels& v : variants) {
    for (int qp : qps) {
      if (!v.per_qp.count(qp)) {
        throw ValidationError("ablation_report: variant '" + v.label +
                              "' has no model for qp " + std::to_string(qp));
      }
    }
  }

  // qps in decreasing order give rates in increasing order
  std::vector<int> qps_sorted = qps;
  std::sort(qps_sorted.begin(), qps_sorted.end(), std::greater<int>());

  EvalReport report;
  report.qps = qps_sorted;
  for (const auto& [name, frame] : corpus) report.sequences.push_back(name);
  for (const VariantModels& v : variants) report.variants.push_back(v.label);

  const std::size_t nv = variants.size();
  const std::size_t ns = corpus.size();
  const std::size_t nq = qps_sorted.size();

  std::vector<RDCurve> anchor_curves(ns);
  // filtered psnr per [variant][sequence][qp index]
  std::vector<std::vector<std::vector<double>>> fpsnr(
      nv, std::vector<std::vector<double>>(ns, std::vector<double>(nq, 0.0)));

  if (rd_out) {
    rd_out->anchor.assign(ns, {});
    rd_out->filtered_psnr.assign(
        nv, std::vector<std::vector<double>>(ns, std::vector<double>(nq, 0.0)));
  }

  for (std::size_t si = 0; si < ns; ++si) {
    anchor_curves[si].label = report.sequences[si] + "/anchor";
    for (std::size_t qi = 0; qi < nq; ++qi) {
      const int qp = qps_sorted[qi];
      const CodedTriple triple = encode_frame(corpus[si].second, qp, false, codec);
      const double anchor_psnr = psnr(triple.original, triple.reconstruction);
      if (!std::isfinite(anchor_psnr)) ++report.infinite_psnr_count;
      anchor_curves[si].points.push_back(RDPoint{triple.rate_proxy, anchor_psnr});
      if (rd_out) {
        rd_out->anchor[si].push_back(RDPoint{triple.rate_proxy, anchor_psnr});
      }
      for (std::size_t vi = 0; vi < nv; ++vi) {
        ModelWeights<float>& model = *variants[vi].per_qp.at(qp);
        const Frame filtered = apply_filter(model, triple, tiles);
        const double p = psnr(triple.original, filtered);
        if (!std::isfinite(p)) ++report.infinite_psnr_count;
        fpsnr[vi][si][qi] = p;
        if (rd_out) rd_out->filtered_psnr[vi][si][qi] = p;
      }
    }
  }

  auto make_curve = [&](std::size_t vi, std::size_t si) {
    RDCurve curve;
    curve.label = report.sequences[si] + "/" + report.variants[vi];
    for (std::size_t qi = 0; qi < nq; ++qi) {
      curve.points.push_back(
          RDPoint{anchor_curves[si].points[qi].rate, fpsnr[vi][si][qi]});
    }
    return curve;
  };
  auto safe_bd = [](const RDCurve& anchor, const RDCurve& test) {
    try {
      return bd_rate_percent(anchor, test);
    } catch (const ValidationError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  report.bd_vs_anchor.assign(nv, std::vector<double>(ns, 0.0));
  for (std::size_t vi = 0; vi < nv; ++vi) {
    for (std::size_t si = 0; si < ns; ++si) {
      report.bd_vs_anchor[vi][si] = safe_bd(anchor_curves[si], make_curve(vi, si));
    }
  }
  report.pairwise_bd.assign(nv, std::vector<double>(nv, 0.0));
  for (std::size_t vi = 0; vi < nv; ++vi) {
    for (std::size_t vj = 0; vj < nv; ++vj) {
      if (vi == vj) continue;
      std::vector<double> per_seq(ns);
      for (std::size_t si = 0; si < ns; ++si) {
        per_seq[si] = safe_bd(make_curve(vj, si), make_curve(vi, si));
      }
      report.pairwise_bd[vi][vj] = finite_mean(per_seq);
    }
  }
  report.mean_gain_db.assign(nv, std::vector<double>(nq, 0.0));
  for (std::size_t vi = 0; vi < nv; ++vi) {
    for (std::size_t qi = 0; qi < nq; ++qi) {
      std::vector<double> gains;
      for (std::size_t si = 0; si < ns; ++si) {
        const double a = anchor_curves[si].points[qi].psnr;
        const double f = fpsnr[vi][si][qi];
        if (std::isfinite(a) && std::isfinite(f)) gains.push_back(f - a);
      }
      report.mean_gain_db[vi][qi] = finite_mean(gains);
    }
  }
  return report;
}

namespace {

std::string csv_num(double v) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return "inf";
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

}  // namespace

void write_report_csv(const EvalReport& report,
                      const std::filesystem::path& path) {
  std::ostringstream out;
  out << "table,row,col,value\n";
  for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
    for (std::size_t si = 0; si < report.sequences.size(); ++si) {
      out << "bd_vs_anchor," << report.sequences[si] << ","
          << report.variants[vi] << "," << csv_num(report.bd_vs_anchor[vi][si])
          << "\n";
    }
    out << "bd_vs_anchor,average," << report.variants[vi] << ","
        << csv_num(report.mean_bd_vs_anchor(vi)) << "\n";
  }
  for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
    for (std::size_t vj = 0; vj < report.variants.size(); ++vj) {
      if (vi == vj) continue;
      out << "pairwise_bd," << report.variants[vi] << ","
          << report.variants[vj] << "," << csv_num(report.pairwise_bd[vi][vj])
          << "\n";
    }
  }
  for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
    for (std::size_t qi = 0; qi < report.qps.size(); ++qi) {
      out << "mean_gain_db,qp" << report.qps[qi] << "," << report.variants[vi]
          << "," << csv_num(report.mean_gain_db[vi][qi]) << "\n";
    }
  }
  out << "footnote,infinite_psnr_excluded,count,"
      << report.infinite_psnr_count << "\n";
  write_file_atomic(path, out.str());
}

void write_report_text(const EvalReport& report,
                       const std::filesystem::path& path) {
  std::ostringstream out;
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("   n/a");
    std::ostringstream o;
    o << std::fixed << std::setprecision(2) << std::setw(6) << v;
    return o.str();
  };

  out << "BD-rate vs unfiltered anchor (%)\n";
  out << std::left << std::setw(12) << "sequence";
  for (const auto& v : report.variants) out << std::right << std::setw(18) << v;
  out << "\n";
  for (std::size_t si = 0; si < report.sequences.size(); ++si) {
    out << std::left << std::setw(12) << report.sequences[si];
    for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
      out << std::right << std::setw(18) << num(report.bd_vs_anchor[vi][si]);
    }
    out << "\n";
  }
  out << std::left << std::setw(12) << "average";
  for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
    out << std::right << std::setw(18) << num(report.mean_bd_vs_anchor(vi));
  }
  out << "\n\n";

  out << "Pairwise BD-rate (%), row = test, column = anchor\n";
  out << std::left << std::setw(18) << "";
  for (const auto& v : report.variants) out << std::right << std::setw(18) << v;
  out << "\n";
  for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
    out << std::left << std::setw(18) << report.variants[vi];
    for (std::size_t vj = 0; vj < report.variants.size(); ++vj) {
      out << std::right << std::setw(18)
          << (vi == vj ? std::string("     -") : num(report.pairwise_bd[vi][vj]));
    }
    out << "\n";
  }
  out << "\n";

  out << "Mean PSNR gain over the reconstruction (dB)\n";
  out << std::left << std::setw(18) << "variant";
  for (int qp : report.qps) out << std::right << std::setw(10) << ("qp" + std::to_string(qp));
  out << "\n";
  for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
    out << std::left << std::setw(18) << report.variants[vi];
    for (std::size_t qi = 0; qi < report.qps.size(); ++qi) {
      out << std::right << std::setw(10) << num(report.mean_gain_db[vi][qi]);
    }
    out << "\n";
  }
  if (report.infinite_psnr_count > 0) {
    out << "\nnote: " << report.infinite_psnr_count
        << " infinite PSNR value(s) excluded from averages\n";
  }
  write_file_atomic(path, out.str());
}

double CrossQpResult::mean_abs_delta_for_qp_distance(int distance) const {
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index m = 0; m < delta.rows(); ++m) {
    for (Eigen::Index q = 0; q < delta.cols(); ++q) {
      if (m == q) continue;
      if (std::abs(qps[static_cast<std::size_t>(m)] -
                   qps[static_cast<std::size_t>(q)]) == distance) {
        sum += std::abs(delta(m, q));
        ++n;
      }
    }
  }
  if (n == 0) {
    throw ValidationError("cross-qp: no model/data pairs at distance " +
                          std::to_string(distance));
  }
  return sum / n;
}

CrossQpResult cross_qp_matrix(const std::vector<std::pair<std::string, Frame>>& corpus,
                              std::map<int, std::shared_ptr<ModelWeights<float>>>& models,
                              const std::vector<int>& qps,
                              const CodecParams& codec,
                              const TileOptions& tiles) {
  if (corpus.empty()) throw ValidationError("cross_qp_matrix: empty corpus");
  for (int qp : qps) {
    if (!models.count(qp) || !models.at(qp)) {
      throw ValidationError("cross_qp_matrix: missing model for qp " +
                            std::to_string(qp));
    }
  }
  const auto n = static_cast<Eigen::Index>(qps.size());
  CrossQpResult result;
  result.qps = qps;
  result.gain = Eigen::MatrixXd::Zero(n, n);
  result.delta = Eigen::MatrixXd::Zero(n, n);

  for (Eigen::Index qi = 0; qi < n; ++qi) {
    const int qp = qps[static_cast<std::size_t>(qi)];
    for (const auto& [name, frame] : corpus) {
      const CodedTriple triple = encode_frame(frame, qp, false, codec);
      const double base = psnr(triple.original, triple.reconstruction);
      for (Eigen::Index mi = 0; mi < n; ++mi) {
        ModelWeights<float>& model = *models.at(qps[static_cast<std::size_t>(mi)]);
        const Frame filtered = apply_filter(model, triple, tiles);
        result.gain(mi, qi) += psnr(triple.original, filtered) - base;
      }
    }
  }
  result.gain /= static_cast<double>(corpus.size());
  for (Eigen::Index mi = 0; mi < n; ++mi) {
    for (Eigen::Index qi = 0; qi < n; ++qi) {
      result.delta(mi, qi) = result.gain(mi, qi) - result.gain(qi, qi);
    }
  }
  return result;
}

void write_cross_qp_csv(const CrossQpResult& result,
                        const std::filesystem::path& path) {
  std::ostringstream out;
  out << "model_qp";
  for (int qp : result.qps) out << ",data_qp" << qp;
  out << "\n";
  for (Eigen::Index mi = 0; mi < result.delta.rows(); ++mi) {
    out << result.qps[static_cast<std::size_t>(mi)];
    for (Eigen::Index qi = 0; qi < result.delta.cols(); ++qi) {
      out << "," << csv_num(result.delta(mi, qi));
    }
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<std::filesystem::path> export_feature_maps(
    ModelWeights<float>& model, const CodedTriple& triple,
    const std::string& layer, const std::filesystem::path& out_dir) {
  const Variant variant = model.config().variant;
  const bool dual = variant_is_dual(variant);
  const Frame& recon = triple.reconstruction;
  const int pw = ((std::max(recon.width, 4) + 3) / 4) * 4;
  const int ph = ((std::max(recon.height, 4) + 3) / 4) * 4;
  const Frame recon_p = pad_frame_to(recon, pw, ph);

  const float inv255 = 1.0f / 255.0f;
  Tensor<float> recon_t(Shape4{1, 1, ph, pw});
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      recon_t.at(0, 0, y, x) = recon_p.at(x, y) * inv255;
    }
  }
  Tensor<float> aux_t;
  if (dual) {
    aux_t = Tensor<float>(Shape4{1, 1, ph, pw});
    if (variant == Variant::kPartitionRecon) {
      const Frame mask =
          pad_frame_to(partition_mean_mask(recon, triple.partition), pw, ph);
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          aux_t.at(0, 0, y, x) = mask.at(x, y) * inv255;
        }
      }
    } else {
      const PlaneI16 resi = pad_plane_to(triple.residual, pw, ph);
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          aux_t.at(0, 0, y, x) = resi.at(x, y) * inv255;
        }
      }
    }
  }

  ActivationTrace<float> trace;
  model_forward(model, recon_t, aux_t, &trace);
  const Tensor<float>* activation = trace.find(layer);
  if (activation == nullptr) {
    std::string names;
    for (const std::string& n : trace.names()) {
      if (!names.empty()) names += ", ";
      names += n;
    }
    throw ValidationError("unknown layer '" + layer + "' (valid: " + names + ")");
  }

  const Shape4 s = activation->shape();
  std::vector<std::filesystem::path> written;
  for (Index c = 0; c < s.c; ++c) {
    // crop any divisibility padding away, then normalize per channel
    const int cw = std::min<int>(recon.width, static_cast<int>(s.w));
    const int ch = std::min<int>(recon.height, static_cast<int>(s.h));
    float lo = activation->at(0, c, 0, 0);
    float hi = lo;
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        const float v = activation->at(0, c, y, x);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    Frame img = Frame::sized(cw, ch);
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        int v = 128;
        if (hi > lo) {
          v = static_cast<int>(std::lround(
              (activation->at(0, c, y, x) - lo) / (hi - lo) * 255.0));
        }
        img.set(x, y, static_cast<std::uint8_t>(std::clamp(v, 0, 255)));
      }
    }
    const std::filesystem::path path =
        out_dir / (sanitize(layer) + "_ch" + zero_pad(static_cast<int>(c), 3) +
                   ".pgm");
    write_pgm(img, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace rrnet
