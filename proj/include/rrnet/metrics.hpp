#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rrnet/frame.hpp"

namespace rrnet {

double frame_mse(const Frame& a, const Frame& b);

// 10*log10(255^2 / MSE); +infinity when the frames are identical.
double psnr(const Frame& a, const Frame& b);

struct RDPoint {
  double rate = 0.0;
  double psnr = 0.0;
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;
};

// Finite positive rates, >= 4 points, sorted by rate, PSNR strictly
// increasing with rate.
void validate_rd_curve(const RDCurve& curve);

// Least-squares cubic of log(rate) as a function of psnr; coefficients
// low-order first.
Eigen::Vector4d fit_log_rate_cubic(const RDCurve& curve);

// Definite integral of the cubic on [lo, hi].
double integrate_cubic(const Eigen::Vector4d& coefs, double lo, double hi);

// Average log-rate offset of test vs anchor over the common PSNR interval,
// mapped to a percent bitrate difference; negative means the test curve
// spends fewer bits at equal quality.
double bd_rate_percent(const RDCurve& anchor, const RDCurve& test);

}  // namespace rrnet
