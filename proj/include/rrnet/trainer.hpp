#pragma once

#include <cstdint>
#include <vector>

#include "rrnet/dataset.hpp"
#include "rrnet/model.hpp"

namespace rrnet {

struct AdamConfig {
  double base_lr = 1e-4;
  double gamma = 0.1;            // lr multiplier at each decay point
  int interval_epochs = 100;     // decay interval at the nominal schedule
  int schedule_total_epochs = 120;
  double weight_decay = 1e-4;    // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers mirror the parameter list; t counts steps.
struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// lr for a 0-based epoch of a run of `total_epochs`. Runs shorter than the
// nominal schedule decay proportionally earlier, at
// round(total * interval / schedule_total).
double learning_rate(const AdamConfig& cfg, int epoch, int total_epochs);

// Decoupled weight decay then a bias-corrected Adam update. Every parameter
// must have a populated gradient buffer.
void adam_step(ModelWeights<float>& weights, AdamState& state, double lr);

struct TrainOptions {
  int epochs = 0;
  int batch_size = 16;
  std::uint64_t seed = 1;
  AdamConfig adam;
};

struct TrainResult {
  ModelWeights<float> weights;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Seeded-shuffle minibatch training on 64x64 patches; drops the last
// partial batch. All manifest records must match config.qp_tag.
TrainResult train(const ModelConfig& config, const DatasetManifest& manifest,
                  const TrainOptions& options);

// Same loop, continuing from existing weights.
TrainResult train_from(const ModelWeights<float>& start,
                       const DatasetManifest& manifest,
                       const TrainOptions& options);

// Continues from base at base lr with a fresh optimizer state; the returned
// weights are tagged with the manifest's qp.
TrainResult fine_tune(const ModelWeights<float>& base,
                      const DatasetManifest& manifest, int epochs = 20,
                      std::uint64_t seed = 1, AdamConfig adam = {});

}  // namespace rrnet
