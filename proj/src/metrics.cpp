#include "rrnet/metrics.hpp"

#include <cmath>
#include <limits>

#include "rrnet/errors.hpp"

namespace rrnet {

double frame_mse(const Frame& a, const Frame& b) {
  if (a.width != b.width) {
    throw ShapeError("width", "frame_mse: width " + std::to_string(a.width) +
                                  " vs " + std::to_string(b.width));
  }
  if (a.height != b.height) {
    throw ShapeError("height", "frame_mse: height " + std::to_string(a.height) +
                                   " vs " + std::to_string(b.height));
  }
  if (a.plane.empty()) throw ValidationError("frame_mse: empty frames");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.plane.size(); ++i) {
    const double d = static_cast<double>(a.plane[i]) - b.plane[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.plane.size());
}

double psnr(const Frame& a, const Frame& b) {
  const double mse = frame_mse(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

void validate_rd_curve(const RDCurve& curve) {
  if (curve.points.size() < 4) {
    throw ValidationError("rd curve '" + curve.label + "': need >= 4 points, got " +
                          std::to_string(curve.points.size()));
  }
  for (const RDPoint& p : curve.points) {
    if (!std::isfinite(p.rate) || !std::isfinite(p.psnr) || p.rate <= 0.0) {
      throw ValidationError("rd curve '" + curve.label +
                            "': points must be finite with positive rate");
    }
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    if (curve.points[i].rate <= curve.points[i - 1].rate ||
        curve.points[i].psnr <= curve.points[i - 1].psnr) {
      throw ValidationError("rd curve '" + curve.label +
                            "': points must be strictly increasing in both "
                            "rate and psnr");
    }
  }
}

Eigen::Vector4d fit_log_rate_cubic(const RDCurve& curve) {
  const auto n = static_cast<Eigen::Index>(curve.points.size());
  Eigen::MatrixXd vand(n, 4);
  Eigen::VectorXd logr(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = curve.points[static_cast<std::size_t>(i)].psnr;
    vand(i, 0) = 1.0;
    vand(i, 1) = x;
    vand(i, 2) = x * x;
    vand(i, 3) = x * x * x;
    logr(i) = std::log(curve.points[static_cast<std::size_t>(i)].rate);
  }
  return vand.colPivHouseholderQr().solve(logr);
}

double integrate_cubic(const Eigen::Vector4d& c, double lo, double hi) {
  auto anti = [&c](double x) {
    return ((c(3) / 4.0 * x + c(2) / 3.0) * x + c(1) / 2.0) * x * x + c(0) * x;
  };
  return anti(hi) - anti(lo);
}

double bd_rate_percent(const RDCurve& anchor, const RDCurve& test) {
  validate_rd_curve(anchor);
  validate_rd_curve(test);
  const double lo = std::max(anchor.points.front().psnr, test.points.front().psnr);
  const double hi = std::min(anchor.points.back().psnr, test.points.back().psnr);
  if (!(hi > lo)) {
    throw ValidationError("bd_rate: PSNR ranges of '" + anchor.label +
                          "' and '" + test.label + "' do not overlap");
  }
  const Eigen::Vector4d ca = fit_log_rate_cubic(anchor);
  const Eigen::Vector4d ct = fit_log_rate_cubic(test);
  const double avg_log_diff =
      (integrate_cubic(ct, lo, hi) - integrate_cubic(ca, lo, hi)) / (hi - lo);
  return (std::exp(avg_log_diff) - 1.0) * 100.0;
}

}  // namespace rrnet
