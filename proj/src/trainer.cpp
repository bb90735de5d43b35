#include "rrnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "rrnet/errors.hpp"

namespace rrnet {

double learning_rate(const AdamConfig& cfg, int epoch, int total_epochs) {
  int interval = cfg.interval_epochs;
  if (total_epochs < cfg.schedule_total_epochs) {
    interval = std::max(
        1, static_cast<int>(std::lround(
               static_cast<double>(total_epochs) * cfg.interval_epochs /
               cfg.schedule_total_epochs)));
  }
  return cfg.base_lr * std::pow(cfg.gamma, epoch / interval);
}

void adam_step(ModelWeights<float>& weights, AdamState& state, double lr) {
  auto& params = weights.params();
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(static_cast<std::size_t>(params[i].value.size()), 0.0f);
      state.v[i].assign(static_cast<std::size_t>(params[i].value.size()), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw ValidationError("adam_step: state does not match parameter list");
  }
  state.step_count += 1;
  const double b1 = state.config.beta1;
  const double b2 = state.config.beta2;
  const double eps = state.config.epsilon;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  const double decay = lr * state.config.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& t = params[i].value;
    if (!t.has_grad()) {
      throw ValidationError("adam_step: missing gradient for parameter '" +
                            params[i].name + "'");
    }
    float* theta = t.data();
    const float* g = t.grad_data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    const Index n = t.size();
    for (Index j = 0; j < n; ++j) {
      theta[j] -= static_cast<float>(decay * theta[j]);
      const double gj = g[j];
      m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * gj);
      v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * gj * gj);
      const double mhat = m[j] / bias1;
      const double vhat = v[j] / bias2;
      theta[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

namespace {

// All planes of one (frame, qp) pair, loaded once and shared by its patches.
struct CachedPlanes {
  Frame original;
  Frame reconstruction;
  PlaneI16 residual;
  Frame mask;  // partition mean mask; loaded only for the partition variant
};

struct SampleSource {
  const CachedPlanes* planes = nullptr;
  int x = 0;
  int y = 0;
};

class PatchLoader {
 public:
  PatchLoader(const DatasetManifest& manifest, bool need_mask) {
    for (const SampleRecord& r : manifest.records) {
      const std::string key = r.reconstruction_path;
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        CachedPlanes planes;
        planes.original = read_pgm(manifest.base_dir / r.original_path);
        planes.reconstruction =
            read_pgm(manifest.base_dir / r.reconstruction_path);
        planes.residual = read_resi(manifest.base_dir / r.residual_path);
        if (need_mask) {
          const Partition part = read_partition(partition_sidecar_path(
              manifest.base_dir / r.reconstruction_path));
          planes.mask = partition_mean_mask(planes.reconstruction, part);
        }
        it = cache_.emplace(key, std::move(planes)).first;
      }
      sources_.push_back(SampleSource{&it->second, r.x, r.y});
    }
  }

  std::size_t size() const { return sources_.size(); }
  const SampleSource& source(std::size_t i) const { return sources_[i]; }

 private:
  std::map<std::string, CachedPlanes> cache_;
  std::vector<SampleSource> sources_;
};

void fill_patch(float* dst, const Frame& src, int x0, int y0, int patch,
                float scale) {
  for (int y = 0; y < patch; ++y) {
    const std::uint8_t* row =
        src.plane.data() + static_cast<std::size_t>(y0 + y) * src.width + x0;
    for (int x = 0; x < patch; ++x) dst[y * patch + x] = row[x] * scale;
  }
}

void fill_patch(float* dst, const PlaneI16& src, int x0, int y0, int patch,
                float scale) {
  for (int y = 0; y < patch; ++y) {
    const std::int16_t* row =
        src.v.data() + static_cast<std::size_t>(y0 + y) * src.width + x0;
    for (int x = 0; x < patch; ++x) dst[y * patch + x] = row[x] * scale;
  }
}

TrainResult run_training(ModelWeights<float> weights,
                         const DatasetManifest& manifest,
                         const TrainOptions& options) {
  const ModelConfig& cfg = weights.config();
  if (manifest.records.empty()) {
    throw ValidationError("train: empty manifest");
  }
  for (const SampleRecord& r : manifest.records) {
    if (r.qp != cfg.qp_tag) {
      throw ValidationError("train: record at qp " + std::to_string(r.qp) +
                            " does not match model qp_tag " +
                            std::to_string(cfg.qp_tag));
    }
  }
  if (options.epochs < 0) throw ValidationError("train: negative epoch count");
  if (options.batch_size < 1) throw ValidationError("train: batch size < 1");

  const Variant variant = cfg.variant;
  const bool dual = variant_is_dual(variant);
  const bool need_mask = variant == Variant::kPartitionRecon;
  PatchLoader loader(manifest, need_mask);

  const int patch = manifest.patch_size;
  const Index batch = options.batch_size;
  const float inv255 = 1.0f / 255.0f;

  weights.set_requires_grad(true);
  AdamState state;
  state.config = options.adam;

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(loader.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  TrainResult result;
  result.epoch_loss.reserve(static_cast<std::size_t>(options.epochs));

  Tensor<float> recon(Shape4{batch, 1, patch, patch});
  Tensor<float> aux(Shape4{batch, 1, patch, patch});
  Tensor<float> label(Shape4{batch, 1, patch, patch});
  const Index plane = static_cast<Index>(patch) * patch;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(options.adam, epoch, options.epochs);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + static_cast<std::size_t>(batch) <= order.size();
         start += static_cast<std::size_t>(batch)) {
      for (Index b = 0; b < batch; ++b) {
        const SampleSource& s = loader.source(order[start + static_cast<std::size_t>(b)]);
        fill_patch(recon.data() + b * plane, s.planes->reconstruction, s.x, s.y,
                   patch, inv255);
        fill_patch(label.data() + b * plane, s.planes->original, s.x, s.y,
                   patch, inv255);
        if (need_mask) {
          fill_patch(aux.data() + b * plane, s.planes->mask, s.x, s.y, patch,
                     inv255);
        } else if (dual) {
          fill_patch(aux.data() + b * plane, s.planes->residual, s.x, s.y,
                     patch, inv255);
        }
      }
      weights.zero_grads();
      {
        Tape<float> tape;
        Tensor<float> out =
            model_forward(weights, recon, dual ? aux : Tensor<float>());
        Tensor<float> loss = mse_loss(out, label);
        tape.backward(loss);
        loss_sum += static_cast<double>(loss.data()[0]);
      }
      adam_step(weights, state, lr);
      ++batches;
    }
    if (batches == 0) {
      throw ValidationError(
          "train: batch size " + std::to_string(options.batch_size) +
          " exceeds the " + std::to_string(loader.size()) + "-sample dataset");
    }
    result.epoch_loss.push_back(loss_sum / batches);
  }
  result.weights = std::move(weights);
  return result;
}

}  // namespace

TrainResult train(const ModelConfig& config, const DatasetManifest& manifest,
                  const TrainOptions& options) {
  return run_training(init_model<float>(config, options.seed), manifest, options);
}

TrainResult train_from(const ModelWeights<float>& start,
                       const DatasetManifest& manifest,
                       const TrainOptions& options) {
  return run_training(start.clone(), manifest, options);
}

TrainResult fine_tune(const ModelWeights<float>& base,
                      const DatasetManifest& manifest, int epochs,
                      std::uint64_t seed, AdamConfig adam) {
  if (manifest.records.empty()) {
    throw ValidationError("fine_tune: empty manifest");
  }
  const int qp = manifest.records.front().qp;
  ModelWeights<float> start = base.clone();
  start.set_qp_tag(qp);
  TrainOptions options;
  options.epochs = epochs;
  options.seed = seed;
  options.adam = adam;
  return run_training(std::move(start), manifest, options);
}

}  // namespace rrnet
