#pragma once

#include <filesystem>

#include "rrnet/model.hpp"

namespace rrnet {

// Binary weights container, version 1, all integers little-endian:
//   "RRNW" | u32 version | u32 variant | u32 qp_tag | u32 stem_channels |
//   u32 block_channels | u32 parameter count
// then per parameter, in canonical order:
//   u32 name length | name bytes | u32 rank | u32 dims[rank] |
//   u32 scalar tag (0 = f32, 1 = f64) | raw little-endian scalars
// Round-trips are bit-exact; loads validate names and shapes against the
// inventory derived from the embedded config.
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

template <typename Scalar>
void save_weights(const ModelWeights<Scalar>& weights,
                  const std::filesystem::path& path);

template <typename Scalar>
ModelWeights<Scalar> load_weights(const std::filesystem::path& path);

extern template void save_weights<float>(const ModelWeights<float>&,
                                         const std::filesystem::path&);
extern template void save_weights<double>(const ModelWeights<double>&,
                                          const std::filesystem::path&);
extern template ModelWeights<float> load_weights<float>(
    const std::filesystem::path&);
extern template ModelWeights<double> load_weights<double>(
    const std::filesystem::path&);

}  // namespace rrnet
