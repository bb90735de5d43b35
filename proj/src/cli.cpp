#include "rrnet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rrnet/config.hpp"
#include "rrnet/corpus.hpp"
#include "rrnet/dataset.hpp"
#include "rrnet/errors.hpp"
#include "rrnet/filter.hpp"
#include "rrnet/gradcheck.hpp"
#include "rrnet/metrics.hpp"
#include "rrnet/trainer.hpp"
#include "rrnet/weights_io.hpp"

namespace rrnet {

namespace {

namespace fs = std::filesystem;

RunConfig effective_config(const std::string& config_path) {
  return config_path.empty() ? RunConfig{} : load_config(config_path);
}

AdamConfig adam_from(const RunConfig& cfg) {
  AdamConfig adam;
  adam.base_lr = cfg.base_lr;
  adam.gamma = cfg.lr_gamma;
  adam.interval_epochs = cfg.lr_interval_epochs;
  adam.schedule_total_epochs = cfg.total_epochs;
  adam.weight_decay = cfg.weight_decay;
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.epsilon = cfg.adam_epsilon;
  return adam;
}

CodecParams codec_from(const RunConfig& cfg) {
  return CodecParams{cfg.max_block, cfg.min_block, cfg.var_threshold};
}

TileOptions tiles_from(const RunConfig& cfg) {
  return TileOptions{cfg.tile_size, cfg.tile_overlap};
}

std::vector<std::pair<std::string, Frame>> load_corpus(
    const std::vector<std::string>& images, const std::string& images_dir) {
  std::vector<std::string> paths = images;
  if (!images_dir.empty()) {
    std::vector<std::string> found;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
      if (entry.path().extension() == ".pgm") {
        found.push_back(entry.path().string());
      }
    }
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  if (paths.empty()) {
    throw ValidationError("no input images (use --image or --images-dir)");
  }
  std::vector<std::pair<std::string, Frame>> corpus;
  for (const std::string& p : paths) {
    corpus.emplace_back(fs::path(p).stem().string(), read_pgm(p));
  }
  return corpus;
}

// "VARIANT:QP:PATH" -> grouped per-variant, per-data-qp weights
std::vector<VariantModels> parse_model_args(const std::vector<std::string>& specs) {
  std::vector<VariantModels> out;
  for (const std::string& spec : specs) {
    const std::size_t c1 = spec.find(':');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos
                                                   : spec.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ValidationError("bad --model '" + spec +
                            "' (expected VARIANT:QP:PATH)");
    }
    const std::string label = spec.substr(0, c1);
    const Variant variant = variant_from_name(label);
    int qp = 0;
    try {
      qp = std::stoi(spec.substr(c1 + 1, c2 - c1 - 1));
    } catch (const std::exception&) {
      throw ValidationError("bad qp in --model '" + spec + "'");
    }
    auto weights = std::make_shared<ModelWeights<float>>(
        load_weights<float>(spec.substr(c2 + 1)));
    if (weights->config().variant != variant) {
      throw ValidationError("--model '" + spec + "': file stores variant " +
                            variant_name(weights->config().variant));
    }
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const VariantModels& v) { return v.label == label; });
    if (it == out.end()) {
      out.push_back(VariantModels{label, {}});
      it = out.end() - 1;
    }
    it->per_qp[qp] = std::move(weights);
  }
  return out;
}

RDCurve read_rd_csv(const std::string& path, const std::string& label) {
  std::istringstream in(read_file_bytes(path));
  RDCurve curve;
  curve.label = label;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string a, b;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b)) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected 'rate,psnr'");
    }
    try {
      curve.points.push_back(RDPoint{std::stod(a), std::stod(b)});
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header row
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": bad numeric field");
    }
  }
  return curve;
}

int run_encode(const std::string& in, int qp, const std::string& out_dir,
               bool lossless, const std::string& config_path) {
  const RunConfig cfg = effective_config(config_path);
  const Frame frame = read_pgm(in);
  const CodedTriple triple = encode_frame(frame, qp, lossless, codec_from(cfg));
  const std::string stem = fs::path(in).stem().string();
  const fs::path dir(out_dir);
  write_pgm(triple.reconstruction, dir / (stem + ".recon.pgm"));
  write_resi(triple.residual, dir / (stem + ".resi"));
  write_partition(triple.partition, dir / (stem + ".partition.txt"));
  std::printf("rate_proxy %.6f\n", triple.rate_proxy);
  std::printf("psnr %.4f\n", psnr(triple.original, triple.reconstruction));
  return 0;
}

int run_dataset(const std::vector<std::string>& images,
                const std::string& images_dir, std::vector<int> qps,
                int stride, const std::string& out_dir, bool lossless,
                const std::string& config_path, bool stride_set) {
  const RunConfig cfg = effective_config(config_path);
  if (!stride_set) stride = cfg.patch_stride;
  auto corpus = load_corpus(images, images_dir);
  std::vector<Frame> frames;
  frames.reserve(corpus.size());
  for (auto& [name, frame] : corpus) frames.push_back(std::move(frame));
  const DatasetBuildResult result =
      build_dataset(frames, qps, stride, out_dir, codec_from(cfg), lossless);
  std::printf("records %zu\nimages_used %d\nimages_skipped %d\n",
              result.manifest.records.size(), result.images_used,
              result.images_skipped);
  return 0;
}

int run_train(const std::string& manifest_path, const std::string& variant,
              int qp, int epochs, int batch, std::uint64_t seed,
              const std::string& out, const std::string& loss_csv,
              const std::string& init_path, const std::string& config_path) {
  const RunConfig cfg = effective_config(config_path);
  ModelConfig mc;
  mc.variant = variant_from_name(variant);
  mc.stem_channels = cfg.stem_channels;
  mc.block_channels = cfg.block_channels;
  mc.qp_tag = qp;
  const DatasetManifest manifest =
      filter_by_qp(load_manifest(manifest_path), qp);
  if (manifest.records.empty()) {
    throw ValidationError("manifest holds no records at qp " +
                          std::to_string(qp));
  }
  TrainOptions options;
  options.epochs = epochs;
  options.batch_size = batch > 0 ? batch : cfg.batch_size;
  options.seed = seed;
  options.adam = adam_from(cfg);

  TrainResult result;
  if (init_path.empty()) {
    result = train(mc, manifest, options);
  } else {
    ModelWeights<float> start = load_weights<float>(init_path);
    if (start.config().variant != mc.variant) {
      throw ValidationError("--init weights are variant " +
                            std::string(variant_name(start.config().variant)));
    }
    start.set_qp_tag(qp);
    result = train_from(start, manifest, options);
  }
  save_weights(result.weights, out);
  if (!loss_csv.empty()) {
    std::ostringstream csv;
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      csv << e << "," << result.epoch_loss[e] << "\n";
    }
    write_file_atomic(loss_csv, csv.str());
  }
  std::printf("trained %s qp%d epochs=%d samples=%zu final_loss=%.8g\n",
              variant.c_str(), qp, epochs, manifest.records.size(),
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
  return 0;
}

int run_finetune(const std::string& base_path, const std::string& manifest_path,
                 int qp, int epochs, std::uint64_t seed, const std::string& out,
                 const std::string& config_path, bool epochs_set) {
  const RunConfig cfg = effective_config(config_path);
  if (!epochs_set) epochs = cfg.finetune_epochs;
  const ModelWeights<float> base = load_weights<float>(base_path);
  const DatasetManifest manifest =
      filter_by_qp(load_manifest(manifest_path), qp);
  if (manifest.records.empty()) {
    throw ValidationError("manifest holds no records at qp " +
                          std::to_string(qp));
  }
  TrainResult result = fine_tune(base, manifest, epochs, seed, adam_from(cfg));
  save_weights(result.weights, out);
  std::printf("finetuned %s qp%d->qp%d epochs=%d final_loss=%.8g\n",
              variant_name(base.config().variant), base.qp_tag(), qp, epochs,
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
  return 0;
}

int run_apply(const std::string& weights_path, const std::string& in, int qp,
              const std::string& out_dir, bool lossless,
              const std::string& config_path) {
  const RunConfig cfg = effective_config(config_path);
  ModelWeights<float> model = load_weights<float>(weights_path);
  const Frame frame = read_pgm(in);
  const CodedTriple triple = encode_frame(frame, qp, lossless, codec_from(cfg));
  const Frame filtered = apply_filter(model, triple, tiles_from(cfg));
  const std::string stem = fs::path(in).stem().string();
  const fs::path dir(out_dir);
  write_pgm(triple.reconstruction, dir / (stem + ".recon.pgm"));
  write_pgm(filtered, dir / (stem + ".filtered.pgm"));
  const double p_rec = psnr(triple.original, triple.reconstruction);
  const double p_fil = psnr(triple.original, filtered);
  std::printf("psnr_recon %.4f\npsnr_filtered %.4f\ngain %.4f\n", p_rec, p_fil,
              p_fil - p_rec);
  return 0;
}

int run_eval(const std::vector<std::string>& images,
             const std::string& images_dir,
             const std::vector<std::string>& model_specs, std::vector<int> qps,
             const std::string& out_dir, const std::string& config_path) {
  const RunConfig cfg = effective_config(config_path);
  auto corpus = load_corpus(images, images_dir);
  std::vector<VariantModels> variants = parse_model_args(model_specs);
  RDTable rd;
  const EvalReport report = ablation_report(corpus, variants, qps,
                                            codec_from(cfg), tiles_from(cfg), &rd);
  const fs::path dir(out_dir);
  write_report_csv(report, dir / "report.csv");
  write_report_text(report, dir / "report.txt");

  std::ostringstream raw;
  raw << "sequence,qp,rate,anchor_psnr";
  for (const auto& v : report.variants) raw << "," << v << "_psnr";
  raw << "\n";
  for (std::size_t si = 0; si < report.sequences.size(); ++si) {
    for (std::size_t qi = 0; qi < report.qps.size(); ++qi) {
      raw << report.sequences[si] << "," << report.qps[qi] << ","
          << rd.anchor[si][qi].rate << "," << rd.anchor[si][qi].psnr;
      for (std::size_t vi = 0; vi < report.variants.size(); ++vi) {
        raw << "," << rd.filtered_psnr[vi][si][qi];
      }
      raw << "\n";
    }
  }
  write_file_atomic(dir / "rd_points.csv", raw.str());

  const std::string text = read_file_bytes(dir / "report.txt");
  std::fwrite(text.data(), 1, text.size(), stdout);
  return 0;
}

int run_bdrate(const std::string& anchor_path, const std::string& test_path) {
  const RDCurve anchor = read_rd_csv(anchor_path, "anchor");
  const RDCurve test = read_rd_csv(test_path, "test");
  std::printf("%.2f\n", bd_rate_percent(anchor, test));
  return 0;
}

int run_crossqp(const std::vector<std::string>& images,
                const std::string& images_dir,
                const std::vector<std::string>& model_specs,
                std::vector<int> qps, const std::string& out_csv,
                const std::string& config_path) {
  const RunConfig cfg = effective_config(config_path);
  auto corpus = load_corpus(images, images_dir);
  std::map<int, std::shared_ptr<ModelWeights<float>>> models;
  for (const std::string& spec : model_specs) {
    const std::size_t c = spec.find(':');
    if (c == std::string::npos) {
      throw ValidationError("bad --model '" + spec + "' (expected QP:PATH)");
    }
    int qp = 0;
    try {
      qp = std::stoi(spec.substr(0, c));
    } catch (const std::exception&) {
      throw ValidationError("bad qp in --model '" + spec + "'");
    }
    models[qp] = std::make_shared<ModelWeights<float>>(
        load_weights<float>(spec.substr(c + 1)));
  }
  const CrossQpResult result =
      cross_qp_matrix(corpus, models, qps, codec_from(cfg), tiles_from(cfg));
  if (!out_csv.empty()) write_cross_qp_csv(result, out_csv);
  std::printf("delta-PSNR matrix, rows = model qp, columns = data qp\n");
  std::printf("%8s", "");
  for (int qp : result.qps) std::printf("%10d", qp);
  std::printf("\n");
  for (Eigen::Index mi = 0; mi < result.delta.rows(); ++mi) {
    std::printf("%8d", result.qps[static_cast<std::size_t>(mi)]);
    for (Eigen::Index qi = 0; qi < result.delta.cols(); ++qi) {
      std::printf("%10.4f", result.delta(mi, qi));
    }
    std::printf("\n");
  }
  return 0;
}

int run_dump_features(const std::string& weights_path, const std::string& in,
                      int qp, const std::string& layer,
                      const std::string& out_dir, bool lossless,
                      const std::string& config_path) {
  const RunConfig cfg = effective_config(config_path);
  ModelWeights<float> model = load_weights<float>(weights_path);
  const Frame frame = read_pgm(in);
  const CodedTriple triple = encode_frame(frame, qp, lossless, codec_from(cfg));
  const auto written = export_feature_maps(model, triple, layer, out_dir);
  std::printf("wrote %zu channel maps to %s\n", written.size(), out_dir.c_str());
  return 0;
}

int run_gradcheck(std::uint64_t seed, bool ops_only, int model_coords) {
  const GradCheckSummary ops = run_op_gradient_checks(seed);
  GradCheckSummary all = ops;
  if (!ops_only) {
    all.merge(run_model_gradient_check(ModelConfig{}, seed + 1, model_coords));
  }
  for (const GradCheckReport& r : all.reports) {
    std::fprintf(stderr, "%-28s max_rel_err %.3e over %lld coords\n",
                 r.name.c_str(), r.max_rel_err,
                 static_cast<long long>(r.coords_checked));
  }
  std::printf("max_rel_err %.6e\n", all.max_rel_err);
  return all.max_rel_err <= 1e-5 ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"toy intra codec with a residual-guided CNN in-loop filter"};
  app.require_subcommand(1);
  int exit_code = 0;

  // encode
  auto* enc = app.add_subcommand("encode", "encode one frame, write recon/residual/partition");
  struct {
    std::string in, out_dir, config;
    int qp = 37;
    bool lossless = false;
  } enc_a;
  enc->add_option("--in", enc_a.in, "input PGM")->required();
  enc->add_option("--qp", enc_a.qp, "quantization parameter")->required();
  enc->add_option("--out-dir", enc_a.out_dir, "output directory")->required();
  enc->add_flag("--lossless", enc_a.lossless, "skip quantization");
  enc->add_option("--config", enc_a.config, "run config file");
  enc->callback([&]() {
    exit_code = run_encode(enc_a.in, enc_a.qp, enc_a.out_dir, enc_a.lossless,
                           enc_a.config);
  });

  // dataset
  auto* ds = app.add_subcommand("dataset", "encode images and build a patch manifest");
  struct {
    std::vector<std::string> images;
    std::string images_dir, out_dir, config;
    std::vector<int> qps;
    int stride = 64;
    bool lossless = false;
  } ds_a;
  ds->add_option("--image", ds_a.images, "input PGM (repeatable)");
  ds->add_option("--images-dir", ds_a.images_dir, "directory of PGMs");
  ds->add_option("--qps", ds_a.qps, "qps to encode")->required()->delimiter(',');
  auto* ds_stride = ds->add_option("--stride", ds_a.stride, "patch stride");
  ds->add_option("--out-dir", ds_a.out_dir, "output directory")->required();
  ds->add_flag("--lossless", ds_a.lossless, "skip quantization");
  ds->add_option("--config", ds_a.config, "run config file");
  ds->callback([&]() {
    exit_code = run_dataset(ds_a.images, ds_a.images_dir, ds_a.qps, ds_a.stride,
                            ds_a.out_dir, ds_a.lossless, ds_a.config,
                            ds_stride->count() > 0);
  });

  // train
  auto* tr = app.add_subcommand("train", "train a model variant from a manifest");
  struct {
    std::string manifest, variant = "RRNET", out, loss_csv, init, config;
    int qp = 37, epochs = 0, batch = 0;
    std::uint64_t seed = 1;
  } tr_a;
  tr->add_option("--manifest", tr_a.manifest, "manifest.tsv")->required();
  tr->add_option("--variant", tr_a.variant, "model variant");
  tr->add_option("--qp", tr_a.qp, "train on records at this qp")->required();
  tr->add_option("--epochs", tr_a.epochs, "epoch count")->required();
  tr->add_option("--batch", tr_a.batch, "batch size (default from config)");
  tr->add_option("--seed", tr_a.seed, "rng seed");
  tr->add_option("--out", tr_a.out, "output weights file")->required();
  tr->add_option("--loss-csv", tr_a.loss_csv, "write per-epoch loss CSV");
  tr->add_option("--init", tr_a.init, "start from these weights");
  tr->add_option("--config", tr_a.config, "run config file");
  tr->callback([&]() {
    exit_code = run_train(tr_a.manifest, tr_a.variant, tr_a.qp, tr_a.epochs,
                          tr_a.batch, tr_a.seed, tr_a.out, tr_a.loss_csv,
                          tr_a.init, tr_a.config);
  });

  // finetune
  auto* ft = app.add_subcommand("finetune", "fine-tune trained weights at another qp");
  struct {
    std::string base, manifest, out, config;
    int qp = 32, epochs = 20;
    std::uint64_t seed = 1;
  } ft_a;
  ft->add_option("--base", ft_a.base, "base weights")->required();
  ft->add_option("--manifest", ft_a.manifest, "manifest.tsv")->required();
  ft->add_option("--qp", ft_a.qp, "target qp")->required();
  auto* ft_epochs = ft->add_option("--epochs", ft_a.epochs, "epoch count");
  ft->add_option("--seed", ft_a.seed, "rng seed");
  ft->add_option("--out", ft_a.out, "output weights file")->required();
  ft->add_option("--config", ft_a.config, "run config file");
  ft->callback([&]() {
    exit_code = run_finetune(ft_a.base, ft_a.manifest, ft_a.qp, ft_a.epochs,
                             ft_a.seed, ft_a.out, ft_a.config,
                             ft_epochs->count() > 0);
  });

  // apply
  auto* ap = app.add_subcommand("apply", "encode a frame and run the in-loop filter");
  struct {
    std::string weights, in, out_dir, config;
    int qp = 37;
    bool lossless = false;
  } ap_a;
  ap->add_option("--weights", ap_a.weights, "weights file")->required();
  ap->add_option("--in", ap_a.in, "input PGM")->required();
  ap->add_option("--qp", ap_a.qp, "quantization parameter")->required();
  ap->add_option("--out-dir", ap_a.out_dir, "output directory")->required();
  ap->add_flag("--lossless", ap_a.lossless, "skip quantization");
  ap->add_option("--config", ap_a.config, "run config file");
  ap->callback([&]() {
    exit_code = run_apply(ap_a.weights, ap_a.in, ap_a.qp, ap_a.out_dir,
                          ap_a.lossless, ap_a.config);
  });

  // eval
  auto* ev = app.add_subcommand("eval", "ablation report over a corpus");
  struct {
    std::vector<std::string> images, models;
    std::string images_dir, out_dir, config;
    std::vector<int> qps;
  } ev_a;
  ev->add_option("--image", ev_a.images, "corpus PGM (repeatable)");
  ev->add_option("--images-dir", ev_a.images_dir, "directory of PGMs");
  ev->add_option("--model", ev_a.models, "VARIANT:QP:PATH (repeatable)")->required();
  ev->add_option("--qps", ev_a.qps, "qps to evaluate")->required()->delimiter(',');
  ev->add_option("--out-dir", ev_a.out_dir, "report directory")->required();
  ev->add_option("--config", ev_a.config, "run config file");
  ev->callback([&]() {
    exit_code = run_eval(ev_a.images, ev_a.images_dir, ev_a.models, ev_a.qps,
                         ev_a.out_dir, ev_a.config);
  });

  // bdrate
  auto* bd = app.add_subcommand("bdrate", "BD-rate between two rate/psnr CSV curves");
  struct {
    std::string anchor, test;
  } bd_a;
  bd->add_option("--anchor", bd_a.anchor, "anchor curve CSV")->required();
  bd->add_option("--test", bd_a.test, "test curve CSV")->required();
  bd->callback([&]() { exit_code = run_bdrate(bd_a.anchor, bd_a.test); });

  // crossqp
  auto* cq = app.add_subcommand("crossqp", "cross-qp delta-PSNR matrix");
  struct {
    std::vector<std::string> images, models;
    std::string images_dir, out_csv, config;
    std::vector<int> qps;
  } cq_a;
  cq->add_option("--image", cq_a.images, "corpus PGM (repeatable)");
  cq->add_option("--images-dir", cq_a.images_dir, "directory of PGMs");
  cq->add_option("--model", cq_a.models, "QP:PATH (repeatable)")->required();
  cq->add_option("--qps", cq_a.qps, "qps to evaluate")->required()->delimiter(',');
  cq->add_option("--out", cq_a.out_csv, "matrix CSV path");
  cq->add_option("--config", cq_a.config, "run config file");
  cq->callback([&]() {
    exit_code = run_crossqp(cq_a.images, cq_a.images_dir, cq_a.models, cq_a.qps,
                            cq_a.out_csv, cq_a.config);
  });

  // dump-features
  auto* df = app.add_subcommand("dump-features", "export per-channel activation maps");
  struct {
    std::string weights, in, layer, out_dir, config;
    int qp = 37;
    bool lossless = false;
  } df_a;
  df->add_option("--weights", df_a.weights, "weights file")->required();
  df->add_option("--in", df_a.in, "input PGM")->required();
  df->add_option("--qp", df_a.qp, "quantization parameter")->required();
  df->add_option("--layer", df_a.layer, "layer name (bad names list the options)")->required();
  df->add_option("--out-dir", df_a.out_dir, "output directory")->required();
  df->add_flag("--lossless", df_a.lossless, "skip quantization");
  df->add_option("--config", df_a.config, "run config file");
  df->callback([&]() {
    exit_code = run_dump_features(df_a.weights, df_a.in, df_a.qp, df_a.layer,
                                  df_a.out_dir, df_a.lossless, df_a.config);
  });

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  struct {
    std::uint64_t seed = 20240901;
    bool ops_only = false;
    int model_coords = 4;
  } gc_a;
  gc->add_option("--seed", gc_a.seed, "rng seed");
  gc->add_flag("--ops-only", gc_a.ops_only, "skip the full-model check");
  gc->add_option("--model-coords", gc_a.model_coords,
                 "coordinates sampled per tensor in the model check");
  gc->callback([&]() {
    exit_code = run_gradcheck(gc_a.seed, gc_a.ops_only, gc_a.model_coords);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

}  // namespace rrnet
