#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rrnet/ops.hpp"
#include "rrnet/tensor.hpp"

namespace rrnet {

enum class Variant : std::uint32_t {
  kRRNet = 0,
  kReconOnlyEdsr = 1,
  kDualEdsr = 2,
  kPartitionRecon = 3,
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kRRNet: return "RRNET";
    case Variant::kReconOnlyEdsr: return "RECON_ONLY_EDSR";
    case Variant::kDualEdsr: return "DUAL_EDSR";
    case Variant::kPartitionRecon: return "PARTITION_RECON";
  }
  throw ValidationError("unknown variant id");
}

inline Variant variant_from_name(std::string_view name) {
  if (name == "RRNET") return Variant::kRRNet;
  if (name == "RECON_ONLY_EDSR") return Variant::kReconOnlyEdsr;
  if (name == "DUAL_EDSR") return Variant::kDualEdsr;
  if (name == "PARTITION_RECON") return Variant::kPartitionRecon;
  throw ValidationError("unknown variant '" + std::string(name) +
                        "' (expected RRNET, RECON_ONLY_EDSR, DUAL_EDSR or "
                        "PARTITION_RECON)");
}

// Variants needing a second input plane next to the reconstruction.
inline bool variant_is_dual(Variant v) { return v != Variant::kReconOnlyEdsr; }

struct ModelConfig {
  Variant variant = Variant::kRRNet;
  int stem_channels = 64;
  int block_channels = 64;
  int qp_tag = 37;
};

enum class LayerKind { kConv, kTransposedConv };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool activated = true;  // PReLU after the (t)conv
};

// Feature width of the EDSR-style baseline stacks.
inline constexpr int kEdsrChannels = 32;

inline void validate_config(const ModelConfig& cfg) {
  if (cfg.stem_channels <= 0 || cfg.block_channels <= 0) {
    throw ValidationError("model config: channel counts must be positive");
  }
  if (cfg.variant == Variant::kRRNet &&
      cfg.stem_channels != cfg.block_channels) {
    throw ValidationError(
        "model config: RRNET stem/block widths must match so the "
        "residual-block skip adds are shape-valid");
  }
}

namespace detail {

inline void append_edsr_stack(std::vector<LayerSpec>& out,
                              const std::string& prefix) {
  out.push_back({prefix + ".conv_in", LayerKind::kConv, 1, kEdsrChannels, 3, 1, 1, true});
  for (int b = 1; b <= 3; ++b) {
    const std::string base = prefix + ".eb" + std::to_string(b);
    out.push_back({base + ".conv1", LayerKind::kConv, kEdsrChannels, kEdsrChannels, 3, 1, 1, true});
    out.push_back({base + ".conv2", LayerKind::kConv, kEdsrChannels, kEdsrChannels, 3, 1, 1, false});
  }
  out.push_back({prefix + ".conv_out", LayerKind::kConv, kEdsrChannels, kEdsrChannels, 3, 1, 1, true});
}

}  // namespace detail

// Every convolutional / transposed-convolutional layer of a variant, in
// forward order. Parameter names, shapes and counts all derive from this.
inline std::vector<LayerSpec> layer_inventory(const ModelConfig& cfg) {
  validate_config(cfg);
  std::vector<LayerSpec> out;
  const int stem = cfg.stem_channels;
  const int blk = cfg.block_channels;
  switch (cfg.variant) {
    case Variant::kRRNet: {
      out.push_back({"res.conv1", LayerKind::kConv, 1, stem, 3, 1, 1, true});
      for (int b = 1; b <= 3; ++b) {
        const std::string base = "res.rb" + std::to_string(b);
        out.push_back({base + ".conv1", LayerKind::kConv, blk, blk, 3, 1, 1, true});
        out.push_back({base + ".conv2", LayerKind::kConv, blk, blk, 3, 1, 1, true});
      }
      out.push_back({"res.conv8", LayerKind::kConv, blk, 32, 3, 1, 1, true});

      out.push_back({"rec.conv1", LayerKind::kConv, 1, 32, 3, 1, 1, true});
      out.push_back({"rec.conv2", LayerKind::kConv, 32, 64, 3, 1, 1, true});
      out.push_back({"rec.conv3", LayerKind::kConv, 64, 128, 3, 1, 1, true});
      out.push_back({"rec.tconv1", LayerKind::kTransposedConv, 128, 64, 2, 2, 0, true});
      out.push_back({"rec.conv4", LayerKind::kConv, 64, 64, 3, 1, 1, true});
      out.push_back({"rec.tconv2", LayerKind::kTransposedConv, 128, 32, 2, 2, 0, true});
      out.push_back({"rec.conv5", LayerKind::kConv, 32, 32, 3, 1, 1, true});
      out.push_back({"rec.conv6", LayerKind::kConv, 64, 32, 3, 1, 1, true});

      out.push_back({"fuse.conv", LayerKind::kConv, 64, 1, 3, 1, 1, false});
      break;
    }
    case Variant::kReconOnlyEdsr: {
      detail::append_edsr_stack(out, "rec_stack");
      out.push_back({"fuse.conv", LayerKind::kConv, kEdsrChannels, 1, 3, 1, 1, false});
      break;
    }
    case Variant::kDualEdsr:
    case Variant::kPartitionRecon: {
      detail::append_edsr_stack(out, "aux_stack");
      detail::append_edsr_stack(out, "rec_stack");
      out.push_back({"fuse.conv", LayerKind::kConv, 2 * kEdsrChannels, 1, 3, 1, 1, false});
      break;
    }
  }
  return out;
}

// Named parameter set of one model variant at one QP. Parameter order is the
// canonical inventory order (weight, bias, then slope per layer).
template <typename Scalar>
class ModelWeights {
 public:
  ModelWeights() = default;
  explicit ModelWeights(ModelConfig cfg) : config_(cfg) {}

  const ModelConfig& config() const { return config_; }
  int qp_tag() const { return config_.qp_tag; }
  void set_qp_tag(int qp) { config_.qp_tag = qp; }

  void add(std::string name, Tensor<Scalar> value) {
    if (index_.count(name)) {
      throw ValidationError("duplicate parameter name '" + name + "'");
    }
    index_[name] = params_.size();
    params_.push_back(ParamTensor<Scalar>{std::move(name), std::move(value)});
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Scalar>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw ValidationError("unknown parameter '" + name + "'");
    }
    return params_[it->second].value;
  }
  const Tensor<Scalar>& at(const std::string& name) const {
    return const_cast<ModelWeights*>(this)->at(name);
  }

  std::vector<ParamTensor<Scalar>>& params() { return params_; }
  const std::vector<ParamTensor<Scalar>>& params() const { return params_; }

  Index total_parameters() const {
    Index total = 0;
    for (const auto& p : params_) total += p.value.size();
    return total;
  }

  void zero_grads() {
    for (auto& p : params_) {
      p.value.ensure_grad();
      p.value.zero_grad();
    }
  }

  void set_requires_grad(bool v) {
    for (auto& p : params_) p.value.set_requires_grad(v);
  }

  ModelWeights clone() const {
    ModelWeights out(config_);
    for (const auto& p : params_) out.add(p.name, p.value.clone());
    return out;
  }

 private:
  ModelConfig config_;
  std::vector<ParamTensor<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Fresh weights: zero-mean Gaussian conv/tconv kernels with variance
// 2/fan_in, zero biases, PReLU slopes 0.25. Deterministic in the seed.
template <typename Scalar>
ModelWeights<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  ModelWeights<Scalar> w(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const LayerSpec& layer : layer_inventory(cfg)) {
    const Index k = layer.kernel;
    const Shape4 ws = layer.kind == LayerKind::kConv
                          ? Shape4{layer.out_channels, layer.in_channels, k, k}
                          : Shape4{layer.in_channels, layer.out_channels, k, k};
    const double stddev =
        std::sqrt(2.0 / (static_cast<double>(layer.in_channels) * k * k));
    Tensor<Scalar> weight(ws);
    for (Index i = 0; i < weight.size(); ++i) {
      weight.data()[i] = static_cast<Scalar>(gauss(rng) * stddev);
    }
    weight.set_requires_grad(true);
    w.add(layer.name + ".weight", weight);

    Tensor<Scalar> bias(Shape4{1, layer.out_channels, 1, 1}, Scalar(0));
    bias.set_requires_grad(true);
    w.add(layer.name + ".bias", bias);

    if (layer.activated) {
      Tensor<Scalar> slope(Shape4{1, layer.out_channels, 1, 1},
                           Scalar(0.25));
      slope.set_requires_grad(true);
      w.add(layer.name + ".slope", slope);
    }
  }
  return w;
}

// Named post-activation outputs captured during a forward pass.
template <typename Scalar>
struct ActivationTrace {
  std::vector<std::pair<std::string, Tensor<Scalar>>> entries;

  void put(std::string name, const Tensor<Scalar>& t) {
    entries.emplace_back(std::move(name), t);
  }
  const Tensor<Scalar>* find(const std::string& name) const {
    for (const auto& [n, t] : entries) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& [n, t] : entries) out.push_back(n);
    return out;
  }
};

namespace detail {

template <typename S>
Tensor<S> conv_act(ModelWeights<S>& w, const std::string& layer,
                   const Tensor<S>& x, int stride = 1, int pad = 1) {
  Tensor<S> y = conv2d(x, w.at(layer + ".weight"), w.at(layer + ".bias"),
                       stride, pad);
  return prelu(y, w.at(layer + ".slope"));
}

template <typename S>
Tensor<S> tconv_act(ModelWeights<S>& w, const std::string& layer,
                    const Tensor<S>& x, int stride, int pad) {
  Tensor<S> y = transposed_conv2d(x, w.at(layer + ".weight"),
                                  w.at(layer + ".bias"), stride, pad);
  return prelu(y, w.at(layer + ".slope"));
}

template <typename S>
void trace_put(ActivationTrace<S>* trace, const char* name,
               const Tensor<S>& t) {
  if (trace) trace->put(name, t);
}

// Head conv + 3 EDSR blocks (conv+act, conv, skip add) + tail conv.
template <typename S>
Tensor<S> edsr_stack(ModelWeights<S>& w, const std::string& prefix,
                     const Tensor<S>& x, ActivationTrace<S>* trace) {
  Tensor<S> t = conv_act(w, prefix + ".conv_in", x);
  if (trace) trace->put(prefix + ".conv_in", t);
  for (int b = 1; b <= 3; ++b) {
    const std::string base = prefix + ".eb" + std::to_string(b);
    Tensor<S> u = conv_act(w, base + ".conv1", t);
    u = conv2d(u, w.at(base + ".conv2.weight"), w.at(base + ".conv2.bias"), 1,
               1);
    t = add(u, t);
    if (trace) trace->put(base, t);
  }
  Tensor<S> out = conv_act(w, prefix + ".conv_out", t);
  if (trace) trace->put(prefix + ".conv_out", out);
  return out;
}

}  // namespace detail

// Residual-signal branch: stem conv, three two-conv residual blocks with
// skip adds, tail conv down to 32 feature maps. All 3x3/s1/p1,
// size-preserving.
template <typename S>
Tensor<S> residual_branch(ModelWeights<S>& w, const Tensor<S>& x,
                          ActivationTrace<S>* trace = nullptr) {
  Tensor<S> t = detail::conv_act(w, "res.conv1", x);
  detail::trace_put(trace, "res.conv1", t);
  for (int b = 1; b <= 3; ++b) {
    const std::string base = "res.rb" + std::to_string(b);
    Tensor<S> u = detail::conv_act(w, base + ".conv1", t);
    u = detail::conv_act(w, base + ".conv2", u);
    t = add(u, t);
    if (trace) trace->put(base, t);
  }
  Tensor<S> out = detail::conv_act(w, "res.conv8", t);
  detail::trace_put(trace, "res.conv8", out);
  return out;
}

// Reconstruction-signal branch: two-level encoder (conv + 2x2 max-pool),
// decoder with 2x/s2/p0 transposed convolutions, skip concatenations from
// the pre-pool encoder activations. Requires H and W divisible by 4.
template <typename S>
Tensor<S> reconstruction_branch(ModelWeights<S>& w, const Tensor<S>& z,
                                ActivationTrace<S>* trace = nullptr) {
  const Shape4 zs = z.shape();
  if (zs.h % 4 != 0) {
    throw ShapeError("height", "reconstruction branch needs height divisible "
                               "by 4, got " + std::to_string(zs.h));
  }
  if (zs.w % 4 != 0) {
    throw ShapeError("width", "reconstruction branch needs width divisible "
                              "by 4, got " + std::to_string(zs.w));
  }
  Tensor<S> s1 = detail::conv_act(w, "rec.conv1", z);
  detail::trace_put(trace, "rec.conv1", s1);
  Tensor<S> p1 = maxpool2x2(s1).values;
  Tensor<S> s2 = detail::conv_act(w, "rec.conv2", p1);
  detail::trace_put(trace, "rec.conv2", s2);
  Tensor<S> p2 = maxpool2x2(s2).values;
  Tensor<S> bottom = detail::conv_act(w, "rec.conv3", p2);
  detail::trace_put(trace, "rec.conv3", bottom);

  Tensor<S> d = detail::tconv_act(w, "rec.tconv1", bottom, 2, 0);
  detail::trace_put(trace, "rec.tconv1", d);
  d = detail::conv_act(w, "rec.conv4", d);
  detail::trace_put(trace, "rec.conv4", d);
  d = concat_channels(d, s2);
  d = detail::tconv_act(w, "rec.tconv2", d, 2, 0);
  detail::trace_put(trace, "rec.tconv2", d);
  d = detail::conv_act(w, "rec.conv5", d);
  detail::trace_put(trace, "rec.conv5", d);
  d = concat_channels(d, s1);
  Tensor<S> out = detail::conv_act(w, "rec.conv6", d);
  detail::trace_put(trace, "rec.conv6", out);
  return out;
}

// Concatenate branch features, project to one channel, and add the
// reconstruction input (global residual learning). With zero fusion weights
// the output equals the reconstruction input exactly.
template <typename S>
Tensor<S> fuse_and_filter(ModelWeights<S>& w, const Tensor<S>& features_a,
                          const Tensor<S>& features_b, const Tensor<S>& recon,
                          ActivationTrace<S>* trace = nullptr) {
  Tensor<S> f = features_b.valid() ? concat_channels(features_a, features_b)
                                   : features_a;
  Tensor<S> o = conv2d(f, w.at("fuse.conv.weight"), w.at("fuse.conv.bias"), 1, 1);
  detail::trace_put(trace, "fuse.conv", o);
  Tensor<S> out = add(o, recon);
  detail::trace_put(trace, "output", out);
  return out;
}

template <typename S>
Tensor<S> rrnet_forward(ModelWeights<S>& w, const Tensor<S>& recon,
                        const Tensor<S>& residual,
                        ActivationTrace<S>* trace = nullptr) {
  Tensor<S> xfeat = residual_branch(w, residual, trace);
  Tensor<S> zfeat = reconstruction_branch(w, recon, trace);
  return fuse_and_filter(w, xfeat, zfeat, recon, trace);
}

// Variant dispatch. recon is always required; aux is the residual plane for
// RRNET / DUAL_EDSR, the partition mean mask for PARTITION_RECON, and must
// be left invalid for RECON_ONLY_EDSR.
template <typename S>
Tensor<S> model_forward(ModelWeights<S>& w, const Tensor<S>& recon,
                        const Tensor<S>& aux = Tensor<S>(),
                        ActivationTrace<S>* trace = nullptr) {
  const Variant v = w.config().variant;
  if (!recon.valid()) {
    throw ValidationError("model_forward: reconstruction input required");
  }
  if (variant_is_dual(v) && !aux.valid()) {
    throw ValidationError(std::string("model_forward: variant ") +
                          variant_name(v) + " needs a second input plane");
  }
  if (!variant_is_dual(v) && aux.valid()) {
    throw ValidationError(
        "model_forward: RECON_ONLY_EDSR takes the reconstruction only");
  }
  if (aux.valid() && !(aux.shape() == recon.shape())) {
    throw ShapeError("spatial", "model_forward: input shapes differ, " +
                                    recon.shape().str() + " vs " +
                                    aux.shape().str());
  }
  switch (v) {
    case Variant::kRRNet:
      return rrnet_forward(w, recon, aux, trace);
    case Variant::kReconOnlyEdsr: {
      Tensor<S> feat = detail::edsr_stack(w, "rec_stack", recon, trace);
      return fuse_and_filter(w, feat, Tensor<S>(), recon, trace);
    }
    case Variant::kDualEdsr:
    case Variant::kPartitionRecon: {
      Tensor<S> afeat = detail::edsr_stack(w, "aux_stack", aux, trace);
      Tensor<S> rfeat = detail::edsr_stack(w, "rec_stack", recon, trace);
      return fuse_and_filter(w, afeat, rfeat, recon, trace);
    }
  }
  throw ValidationError("model_forward: unknown variant");
}

// Valid layer names for activation export, in forward order.
template <typename S>
std::vector<std::string> trace_layer_names(const ModelConfig& cfg) {
  ModelWeights<S> w = init_model<S>(cfg, 0);
  const Index hw = 8;
  Tensor<S> recon(Shape4{1, 1, hw, hw});
  ActivationTrace<S> trace;
  if (variant_is_dual(cfg.variant)) {
    Tensor<S> aux(Shape4{1, 1, hw, hw});
    model_forward(w, recon, aux, &trace);
  } else {
    model_forward(w, recon, Tensor<S>(), &trace);
  }
  return trace.names();
}

}  // namespace rrnet
