#pragma once

#include <cstdint>

#include "rrnet/frame.hpp"

namespace rrnet {

// Deterministic synthetic test image: smooth background, hard-edged shapes,
// sinusoidal texture patches, thin lines and mild noise. Same index, same
// image.
Frame make_corpus_image(std::uint64_t index, int width = 128, int height = 128);

}  // namespace rrnet
