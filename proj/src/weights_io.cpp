#include "rrnet/weights_io.hpp"

#include <cstring>
#include <type_traits>

#include "rrnet/errors.hpp"
#include "rrnet/frame.hpp"

namespace rrnet {

namespace {

constexpr char kMagic[4] = {'R', 'R', 'N', 'W'};
constexpr std::uint32_t kTagF32 = 0;
constexpr std::uint32_t kTagF64 = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& data, std::string origin)
      : data_(data), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw FormatError("weights: '" + origin_ + "' truncated");
    }
  }
  const std::string& data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

template <typename Scalar>
constexpr std::uint32_t scalar_tag() {
  return std::is_same_v<Scalar, float> ? kTagF32 : kTagF64;
}

}  // namespace

template <typename Scalar>
void save_weights(const ModelWeights<Scalar>& weights,
                  const std::filesystem::path& path) {
  const ModelConfig& cfg = weights.config();
  std::string out(kMagic, 4);
  put_u32(out, kWeightsFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg.variant));
  put_u32(out, static_cast<std::uint32_t>(cfg.qp_tag));
  put_u32(out, static_cast<std::uint32_t>(cfg.stem_channels));
  put_u32(out, static_cast<std::uint32_t>(cfg.block_channels));
  put_u32(out, static_cast<std::uint32_t>(weights.params().size()));
  for (const auto& p : weights.params()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.append(p.name);
    const Shape4 s = p.value.shape();
    put_u32(out, 4);  // rank
    put_u32(out, static_cast<std::uint32_t>(s.n));
    put_u32(out, static_cast<std::uint32_t>(s.c));
    put_u32(out, static_cast<std::uint32_t>(s.h));
    put_u32(out, static_cast<std::uint32_t>(s.w));
    put_u32(out, scalar_tag<Scalar>());
    // x86 is little-endian; scalars go out as stored
    out.append(reinterpret_cast<const char*>(p.value.data()),
               static_cast<std::size_t>(p.value.size()) * sizeof(Scalar));
  }
  write_file_atomic(path, out);
}

template <typename Scalar>
ModelWeights<Scalar> load_weights(const std::filesystem::path& path) {
  const std::string data = read_file_bytes(path);
  Reader r(data, path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw FormatError("weights: bad magic in '" + path.string() + "'");
  }
  const std::uint32_t version = r.u32();
  if (version != kWeightsFormatVersion) {
    throw FormatError("weights: unknown version " + std::to_string(version) +
                      " in '" + path.string() + "'");
  }
  const std::uint32_t variant_id = r.u32();
  if (variant_id > 3) {
    throw FormatError("weights: unknown variant id " + std::to_string(variant_id));
  }
  ModelConfig cfg;
  cfg.variant = static_cast<Variant>(variant_id);
  cfg.qp_tag = static_cast<int>(r.u32());
  cfg.stem_channels = static_cast<int>(r.u32());
  cfg.block_channels = static_cast<int>(r.u32());
  if (cfg.qp_tag < 0 || cfg.qp_tag > 51) {
    throw FormatError("weights: qp_tag out of range in '" + path.string() + "'");
  }
  const std::uint32_t count = r.u32();

  // expected canonical inventory
  std::vector<std::pair<std::string, Shape4>> expected;
  for (const LayerSpec& layer : layer_inventory(cfg)) {
    const Index k = layer.kernel;
    const Shape4 ws = layer.kind == LayerKind::kConv
                          ? Shape4{layer.out_channels, layer.in_channels, k, k}
                          : Shape4{layer.in_channels, layer.out_channels, k, k};
    expected.emplace_back(layer.name + ".weight", ws);
    expected.emplace_back(layer.name + ".bias", Shape4{1, layer.out_channels, 1, 1});
    if (layer.activated) {
      expected.emplace_back(layer.name + ".slope", Shape4{1, layer.out_channels, 1, 1});
    }
  }
  if (count != expected.size()) {
    throw FormatError("weights: '" + path.string() + "' holds " +
                      std::to_string(count) + " parameters, config implies " +
                      std::to_string(expected.size()));
  }

  ModelWeights<Scalar> out(cfg);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096) {
      throw FormatError("weights: implausible name length in '" + path.string() + "'");
    }
    const std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank != 4) {
      throw FormatError("weights: parameter '" + name + "' has rank " +
                        std::to_string(rank) + ", expected 4");
    }
    Shape4 shape;
    shape.n = r.u32();
    shape.c = r.u32();
    shape.h = r.u32();
    shape.w = r.u32();
    const std::uint32_t tag = r.u32();
    if (tag != scalar_tag<Scalar>()) {
      throw FormatError("weights: parameter '" + name + "' stores " +
                        (tag == kTagF32 ? std::string("f32") : tag == kTagF64 ? std::string("f64") : "tag " + std::to_string(tag)) +
                        ", expected " + (scalar_tag<Scalar>() == kTagF32 ? "f32" : "f64"));
    }
    if (name != expected[i].first || !(shape == expected[i].second)) {
      throw FormatError("weights: parameter " + std::to_string(i) + " is '" +
                        name + "' " + shape.str() + ", config implies '" +
                        expected[i].first + "' " + expected[i].second.str());
    }
    Tensor<Scalar> t(shape);
    r.raw(t.data(), static_cast<std::size_t>(t.size()) * sizeof(Scalar));
    for (Index j = 0; j < t.size(); ++j) {
      if (!std::isfinite(static_cast<double>(t.data()[j]))) {
        throw FormatError("weights: non-finite value in parameter '" + name + "'");
      }
    }
    t.set_requires_grad(true);
    out.add(name, std::move(t));
  }
  if (!r.exhausted()) {
    throw FormatError("weights: trailing bytes in '" + path.string() + "'");
  }
  return out;
}

template void save_weights<float>(const ModelWeights<float>&,
                                  const std::filesystem::path&);
template void save_weights<double>(const ModelWeights<double>&,
                                   const std::filesystem::path&);
template ModelWeights<float> load_weights<float>(const std::filesystem::path&);
template ModelWeights<double> load_weights<double>(const std::filesystem::path&);

}  // namespace rrnet
