#include "rrnet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rrnet/errors.hpp"

namespace rrnet {

namespace {

struct Ellipse {
  double cx, cy, rx, ry, angle, level;
};

struct Box {
  double cx, cy, hw, hh, angle, level;
};

bool inside(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double u = (c * dx + s * dy) / e.rx;
  const double v = (-s * dx + c * dy) / e.ry;
  return u * u + v * v <= 1.0;
}

bool inside(const Box& b, double x, double y) {
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double c = std::cos(b.angle);
  const double s = std::sin(b.angle);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= b.hw && std::abs(v) <= b.hh;
}

}  // namespace

Frame make_corpus_image(std::uint64_t index, int width, int height) {
  if (width < 8 || height < 8) {
    throw ValidationError("corpus image: dimensions too small");
  }
  std::mt19937_64 rng(0xC0FFEEull * 2654435761ull + index * 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double pi = std::acos(-1.0);
  std::vector<double> img(static_cast<std::size_t>(width) * height, 0.0);

  // smooth background: plane ramp plus a couple of low-frequency waves
  const double base = uni(70.0, 180.0);
  const double gx = uni(-0.4, 0.4);
  const double gy = uni(-0.4, 0.4);
  const double a1 = uni(5.0, 25.0), f1x = uni(0.2, 1.6), f1y = uni(0.2, 1.6),
               p1 = uni(0.0, 2.0 * pi);
  const double a2 = uni(3.0, 15.0), f2x = uni(0.4, 2.4), f2y = uni(0.4, 2.4),
               p2 = uni(0.0, 2.0 * pi);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = base + gx * x + gy * y;
      v += a1 * std::cos(2.0 * pi * (f1x * x / width + f1y * y / height) + p1);
      v += a2 * std::sin(2.0 * pi * (f2x * x / width + f2y * y / height) + p2);
      img[static_cast<std::size_t>(y) * width + x] = v;
    }
  }

  // hard-edged shapes
  const int n_shapes = 4 + static_cast<int>(uni(0.0, 5.0));
  for (int s = 0; s < n_shapes; ++s) {
    const double level = uni(20.0, 235.0);
    const double innerg = uni(-0.5, 0.5);
    if (unit(rng) < 0.5) {
      Ellipse e{uni(0.0, width), uni(0.0, height), uni(4.0, width / 3.0),
                uni(4.0, height / 3.0), uni(0.0, pi), level};
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (inside(e, x, y)) {
            img[static_cast<std::size_t>(y) * width + x] =
                level + innerg * (x - e.cx);
          }
        }
      }
    } else {
      Box b{uni(0.0, width), uni(0.0, height), uni(3.0, width / 4.0),
            uni(3.0, height / 4.0), uni(0.0, pi), level};
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (inside(b, x, y)) {
            img[static_cast<std::size_t>(y) * width + x] =
                level + innerg * (y - b.cy);
          }
        }
      }
    }
  }

  // sinusoidal texture patches
  const int n_tex = 1 + static_cast<int>(uni(0.0, 3.0));
  for (int t = 0; t < n_tex; ++t) {
    Box region{uni(0.0, width), uni(0.0, height), uni(8.0, width / 3.0),
               uni(8.0, height / 3.0), 0.0, 0.0};
    const double amp = uni(8.0, 35.0);
    const double freq = uni(0.15, 0.45);
    const double theta = uni(0.0, pi);
    const double ph = uni(0.0, 2.0 * pi);
    const double cx = std::cos(theta), sx = std::sin(theta);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (inside(region, x, y)) {
          img[static_cast<std::size_t>(y) * width + x] +=
              amp * std::sin(2.0 * pi * freq * (cx * x + sx * y) + ph);
        }
      }
    }
  }

  // a few thin dark/bright lines
  const int n_lines = 2 + static_cast<int>(uni(0.0, 4.0));
  for (int l = 0; l < n_lines; ++l) {
    const double x0 = uni(0.0, width), y0 = uni(0.0, height);
    const double theta = uni(0.0, pi);
    const double len = uni(width / 4.0, width * 1.2);
    const double level = unit(rng) < 0.5 ? uni(0.0, 60.0) : uni(200.0, 255.0);
    const double dx = std::cos(theta), dy = std::sin(theta);
    for (double t = -len / 2; t < len / 2; t += 0.5) {
      const int x = static_cast<int>(std::lround(x0 + t * dx));
      const int y = static_cast<int>(std::lround(y0 + t * dy));
      if (x >= 0 && x < width && y >= 0 && y < height) {
        img[static_cast<std::size_t>(y) * width + x] = level;
      }
    }
  }

  // mild sensor-like noise
  std::normal_distribution<double> noise(0.0, 1.5);
  Frame out = Frame::sized(width, height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img[i] + noise(rng);
    out.plane[i] = static_cast<std::uint8_t>(
        std::clamp(static_cast<int>(std::lround(v)), 0, 255));
  }
  return out;
}

}  // namespace rrnet
