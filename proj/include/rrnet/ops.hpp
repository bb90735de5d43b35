#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "rrnet/tensor.hpp"

namespace rrnet {

template <typename S>
using MatMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

namespace detail {

// Patch-gather lowering. cols is (C*k*k) x (ho*wo), row-major; row index is
// (c*k + ki)*k + kj, column index oh*wo + ow. The same pair of kernels backs
// conv2d, transposed_conv2d (as the adjoint) and both backward passes.
template <typename S>
void im2col(const S* src, Index C, Index H, Index W, Index k, Index stride,
            Index pad, Index ho, Index wo, S* cols) {
  const Index hw = ho * wo;
  Index r = 0;
  for (Index c = 0; c < C; ++c) {
    const S* chan = src + c * H * W;
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj, ++r) {
        S* row = cols + r * hw;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride + ki - pad;
          S* dst = row + oh * wo;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + wo, S(0));
            continue;
          }
          const S* srow = chan + ih * W;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride + kj - pad;
            dst[ow] = (iw >= 0 && iw < W) ? srow[iw] : S(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add cols back onto a (C, H, W) plane.
template <typename S>
void col2im_add(const S* cols, Index C, Index H, Index W, Index k, Index stride,
                Index pad, Index ho, Index wo, S* dst) {
  const Index hw = ho * wo;
  Index r = 0;
  for (Index c = 0; c < C; ++c) {
    S* chan = dst + c * H * W;
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj, ++r) {
        const S* row = cols + r * hw;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= H) continue;
          S* drow = chan + ih * W;
          const S* srow = row + oh * wo;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride + kj - pad;
            if (iw >= 0 && iw < W) drow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

template <typename S>
void check_bias(const Tensor<S>& bias, Index out_channels, const char* op) {
  const Shape4 bs = bias.shape();
  if (bs != Shape4{1, out_channels, 1, 1}) {
    throw ShapeError("channel",
                     std::string(op) + ": bias shape " + bs.str() +
                         " does not match (1," + std::to_string(out_channels) +
                         ",1,1)");
  }
}

template <typename S>
void add_channel_bias(Tensor<S>& out, const Tensor<S>& bias) {
  const Shape4 os = out.shape();
  const Index hw = os.h * os.w;
  const S* b = bias.data();
  for (Index n = 0; n < os.n; ++n) {
    for (Index c = 0; c < os.c; ++c) {
      S* row = out.data() + (n * os.c + c) * hw;
      const S v = b[c];
      for (Index i = 0; i < hw; ++i) row[i] += v;
    }
  }
}

// Per-channel sum of the output gradient, accumulated in 64-bit.
template <typename S>
void accumulate_bias_grad(const Tensor<S>& out, Tensor<S>& bias) {
  const Shape4 os = out.shape();
  const Index hw = os.h * os.w;
  std::vector<double> acc(static_cast<std::size_t>(os.c), 0.0);
  const S* g = out.grad_data();
  for (Index n = 0; n < os.n; ++n) {
    for (Index c = 0; c < os.c; ++c) {
      const S* row = g + (n * os.c + c) * hw;
      double s = 0.0;
      for (Index i = 0; i < hw; ++i) s += static_cast<double>(row[i]);
      acc[static_cast<std::size_t>(c)] += s;
    }
  }
  bias.ensure_grad();
  S* bg = bias.grad_data();
  for (Index c = 0; c < os.c; ++c) {
    bg[c] += static_cast<S>(acc[static_cast<std::size_t>(c)]);
  }
}

template <typename S>
void conv2d_backward(Tensor<S> in, Tensor<S> weight, Tensor<S> bias,
                     Tensor<S> out, Index stride, Index pad) {
  const Shape4 is = in.shape();
  const Shape4 ws = weight.shape();
  const Shape4 os = out.shape();
  const Index k = ws.h;
  const Index ckk = is.c * k * k;
  const Index hw = os.h * os.w;
  const Index in_plane = is.c * is.h * is.w;
  const Index out_plane = os.c * hw;
  std::vector<S> cols(static_cast<std::size_t>(ckk * hw));
  ConstMatMap<S> wmat(weight.data(), ws.n, ckk);
  if (weight.requires_grad()) weight.ensure_grad();
  if (in.requires_grad()) in.ensure_grad();
  for (Index n = 0; n < is.n; ++n) {
    ConstMatMap<S> gmat(out.grad_data() + n * out_plane, os.c, hw);
    if (weight.requires_grad()) {
      im2col(in.data() + n * in_plane, is.c, is.h, is.w, k, stride, pad, os.h,
             os.w, cols.data());
      ConstMatMap<S> cmat(cols.data(), ckk, hw);
      MatMap<S> dw(weight.grad_data(), ws.n, ckk);
      dw.noalias() += gmat * cmat.transpose();
    }
    if (in.requires_grad()) {
      MatMap<S> cg(cols.data(), ckk, hw);
      cg.noalias() = wmat.transpose() * gmat;
      col2im_add(cols.data(), is.c, is.h, is.w, k, stride, pad, os.h, os.w,
                 in.grad_data() + n * in_plane);
    }
  }
  if (bias.requires_grad()) accumulate_bias_grad(out, bias);
}

template <typename S>
void transposed_conv2d_backward(Tensor<S> in, Tensor<S> weight, Tensor<S> bias,
                                Tensor<S> out, Index stride, Index pad) {
  const Shape4 is = in.shape();   // (n, Ci, h, w)
  const Shape4 ws = weight.shape();  // (Ci, Co, k, k)
  const Shape4 os = out.shape();  // (n, Co, ho, wo)
  const Index k = ws.h;
  const Index cokk = ws.c * k * k;
  const Index hw_in = is.h * is.w;
  const Index in_plane = is.c * hw_in;
  const Index out_plane = os.c * os.h * os.w;
  std::vector<S> cols(static_cast<std::size_t>(cokk * hw_in));
  ConstMatMap<S> wmat(weight.data(), ws.n, cokk);
  if (weight.requires_grad()) weight.ensure_grad();
  if (in.requires_grad()) in.ensure_grad();
  for (Index n = 0; n < is.n; ++n) {
    // Gradient flows through the scatter exactly like a forward conv over
    // the output gradient.
    im2col(out.grad_data() + n * out_plane, os.c, os.h, os.w, k, stride, pad,
           is.h, is.w, cols.data());
    ConstMatMap<S> cmat(cols.data(), cokk, hw_in);
    if (in.requires_grad()) {
      MatMap<S> gin(in.grad_data() + n * in_plane, is.c, hw_in);
      gin.noalias() += wmat * cmat;
    }
    if (weight.requires_grad()) {
      ConstMatMap<S> imat(in.data() + n * in_plane, is.c, hw_in);
      MatMap<S> dw(weight.grad_data(), ws.n, cokk);
      dw.noalias() += imat * cmat.transpose();
    }
  }
  if (bias.requires_grad()) accumulate_bias_grad(out, bias);
}

}  // namespace detail

// 2-D convolution, zero padding. weight is (C_out, C_in, k, k),
// bias (1, C_out, 1, 1). Output spatial size floor((H + 2p - k)/s) + 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight,
                 const Tensor<S>& bias, int stride = 1, int padding = 0) {
  const Shape4 is = input.shape();
  const Shape4 ws = weight.shape();
  if (ws.h != ws.w) {
    throw ShapeError("kernel", "conv2d: non-square kernel in weight " + ws.str());
  }
  const Index k = ws.h;
  if (is.c != ws.c) {
    throw ShapeError("channel", "conv2d: input has " + std::to_string(is.c) +
                                    " channels but weight expects " +
                                    std::to_string(ws.c));
  }
  detail::check_bias(bias, ws.n, "conv2d");
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
  if (padding < 0) throw ValidationError("conv2d: padding must be >= 0");
  if (is.h + 2 * padding < k || is.w + 2 * padding < k) {
    throw ShapeError("spatial", "conv2d: kernel " + std::to_string(k) +
                                    " larger than padded input " + is.str());
  }
  const Index ho = (is.h + 2 * padding - k) / stride + 1;
  const Index wo = (is.w + 2 * padding - k) / stride + 1;

  Tensor<S> out(Shape4{is.n, ws.n, ho, wo});
  const Index ckk = is.c * k * k;
  const Index hw = ho * wo;
  const Index in_plane = is.c * is.h * is.w;
  const Index out_plane = ws.n * hw;
  std::vector<S> cols(static_cast<std::size_t>(ckk * hw));
  ConstMatMap<S> wmat(weight.data(), ws.n, ckk);
  for (Index n = 0; n < is.n; ++n) {
    detail::im2col(input.data() + n * in_plane, is.c, is.h, is.w, k, stride,
                   padding, ho, wo, cols.data());
    ConstMatMap<S> cmat(cols.data(), ckk, hw);
    MatMap<S> omat(out.data() + n * out_plane, ws.n, hw);
    omat.noalias() = wmat * cmat;
  }
  detail::add_channel_bias(out, bias);

  Tape<S>* tape = Tape<S>::active();
  if (tape && (input.requires_grad() || weight.requires_grad() ||
               bias.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> in_h = input, w_h = weight, b_h = bias, out_h = out;
    const Index s = stride, p = padding;
    tape->record(out, [in_h, w_h, b_h, out_h, s, p]() mutable {
      detail::conv2d_backward(in_h, w_h, b_h, out_h, s, p);
    });
  }
  return out;
}

// Transposed 2-D convolution (adjoint of conv2d in its spatial geometry).
// weight is (C_in, C_out, k, k), bias (1, C_out, 1, 1). Output spatial size
// (H - 1)*s - 2p + k.
template <typename S>
Tensor<S> transposed_conv2d(const Tensor<S>& input, const Tensor<S>& weight,
                            const Tensor<S>& bias, int stride = 1,
                            int padding = 0) {
  const Shape4 is = input.shape();
  const Shape4 ws = weight.shape();
  if (ws.h != ws.w) {
    throw ShapeError("kernel",
                     "transposed_conv2d: non-square kernel in weight " + ws.str());
  }
  const Index k = ws.h;
  if (is.c != ws.n) {
    throw ShapeError("channel", "transposed_conv2d: input has " +
                                    std::to_string(is.c) +
                                    " channels but weight expects " +
                                    std::to_string(ws.n));
  }
  detail::check_bias(bias, ws.c, "transposed_conv2d");
  if (stride < 1) throw ValidationError("transposed_conv2d: stride must be >= 1");
  if (padding < 0) throw ValidationError("transposed_conv2d: padding must be >= 0");
  const Index ho = (is.h - 1) * stride - 2 * padding + k;
  const Index wo = (is.w - 1) * stride - 2 * padding + k;
  if (ho < 1 || wo < 1) {
    throw ShapeError("spatial",
                     "transposed_conv2d: empty output for input " + is.str());
  }

  Tensor<S> out(Shape4{is.n, ws.c, ho, wo});
  const Index cokk = ws.c * k * k;
  const Index hw_in = is.h * is.w;
  const Index in_plane = is.c * hw_in;
  const Index out_plane = ws.c * ho * wo;
  std::vector<S> cols(static_cast<std::size_t>(cokk * hw_in));
  ConstMatMap<S> wmat(weight.data(), ws.n, cokk);
  for (Index n = 0; n < is.n; ++n) {
    ConstMatMap<S> imat(input.data() + n * in_plane, is.c, hw_in);
    MatMap<S> cmat(cols.data(), cokk, hw_in);
    cmat.noalias() = wmat.transpose() * imat;
    detail::col2im_add(cols.data(), ws.c, ho, wo, k, stride, padding, is.h,
                       is.w, out.data() + n * out_plane);
  }
  detail::add_channel_bias(out, bias);

  Tape<S>* tape = Tape<S>::active();
  if (tape && (input.requires_grad() || weight.requires_grad() ||
               bias.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> in_h = input, w_h = weight, b_h = bias, out_h = out;
    const Index s = stride, p = padding;
    tape->record(out, [in_h, w_h, b_h, out_h, s, p]() mutable {
      detail::transposed_conv2d_backward(in_h, w_h, b_h, out_h, s, p);
    });
  }
  return out;
}

template <typename S>
struct MaxPoolResult {
  Tensor<S> values;
  // Flat input offsets of each selected maximum, in output element order.
  std::shared_ptr<const std::vector<Index>> argmax;
};

// 2x2 max pooling, stride 2. Ties go to the first element in row-major scan
// order of the window; backward routes gradient only to the recorded argmax.
template <typename S>
MaxPoolResult<S> maxpool2x2(const Tensor<S>& input) {
  const Shape4 is = input.shape();
  if (is.h % 2 != 0) {
    throw ShapeError("height", "maxpool2x2: odd height " + std::to_string(is.h));
  }
  if (is.w % 2 != 0) {
    throw ShapeError("width", "maxpool2x2: odd width " + std::to_string(is.w));
  }
  const Index ho = is.h / 2;
  const Index wo = is.w / 2;
  Tensor<S> out(Shape4{is.n, is.c, ho, wo});
  auto argmax = std::make_shared<std::vector<Index>>(
      static_cast<std::size_t>(out.size()));
  const S* src = input.data();
  S* dst = out.data();
  Index o = 0;
  for (Index n = 0; n < is.n; ++n) {
    for (Index c = 0; c < is.c; ++c) {
      const Index plane = (n * is.c + c) * is.h * is.w;
      for (Index oh = 0; oh < ho; ++oh) {
        for (Index ow = 0; ow < wo; ++ow, ++o) {
          const Index base = plane + (2 * oh) * is.w + 2 * ow;
          const Index cand[4] = {base, base + 1, base + is.w, base + is.w + 1};
          Index best = cand[0];
          S best_v = src[base];
          for (int i = 1; i < 4; ++i) {
            if (src[cand[i]] > best_v) {
              best_v = src[cand[i]];
              best = cand[i];
            }
          }
          dst[o] = best_v;
          (*argmax)[static_cast<std::size_t>(o)] = best;
        }
      }
    }
  }

  Tape<S>* tape = Tape<S>::active();
  if (tape && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> in_h = input, out_h = out;
    auto idx = argmax;
    tape->record(out, [in_h, out_h, idx]() mutable {
      in_h.ensure_grad();
      const S* g = out_h.grad_data();
      S* gi = in_h.grad_data();
      const std::vector<Index>& ix = *idx;
      for (std::size_t i = 0; i < ix.size(); ++i) {
        gi[ix[i]] += g[i];
      }
    });
  }
  return MaxPoolResult<S>{out, argmax};
}

// Parametric ReLU with one trainable slope per channel; slope shape (1,C,1,1).
template <typename S>
Tensor<S> prelu(const Tensor<S>& input, const Tensor<S>& slope) {
  const Shape4 is = input.shape();
  const Shape4 ss = slope.shape();
  if (ss != Shape4{1, is.c, 1, 1}) {
    throw ShapeError("channel", "prelu: slope shape " + ss.str() +
                                    " does not match input channels " +
                                    std::to_string(is.c));
  }
  Tensor<S> out(is);
  const Index hw = is.h * is.w;
  const S* a = slope.data();
  for (Index n = 0; n < is.n; ++n) {
    for (Index c = 0; c < is.c; ++c) {
      const S* x = input.data() + (n * is.c + c) * hw;
      S* y = out.data() + (n * is.c + c) * hw;
      const S ac = a[c];
      for (Index i = 0; i < hw; ++i) {
        y[i] = x[i] >= S(0) ? x[i] : ac * x[i];
      }
    }
  }

  Tape<S>* tape = Tape<S>::active();
  if (tape && (input.requires_grad() || slope.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> in_h = input, a_h = slope, out_h = out;
    tape->record(out, [in_h, a_h, out_h]() mutable {
      const Shape4 s = in_h.shape();
      const Index hw2 = s.h * s.w;
      const S* g = out_h.grad_data();
      const S* x = in_h.data();
      const S* av = a_h.data();
      if (in_h.requires_grad()) {
        in_h.ensure_grad();
        S* gi = in_h.grad_data();
        for (Index n = 0; n < s.n; ++n) {
          for (Index c = 0; c < s.c; ++c) {
            const Index off = (n * s.c + c) * hw2;
            const S ac = av[c];
            for (Index i = 0; i < hw2; ++i) {
              gi[off + i] += g[off + i] * (x[off + i] >= S(0) ? S(1) : ac);
            }
          }
        }
      }
      if (a_h.requires_grad()) {
        a_h.ensure_grad();
        std::vector<double> acc(static_cast<std::size_t>(s.c), 0.0);
        for (Index n = 0; n < s.n; ++n) {
          for (Index c = 0; c < s.c; ++c) {
            const Index off = (n * s.c + c) * hw2;
            double d = 0.0;
            for (Index i = 0; i < hw2; ++i) {
              if (x[off + i] < S(0)) {
                d += static_cast<double>(g[off + i]) *
                     static_cast<double>(x[off + i]);
              }
            }
            acc[static_cast<std::size_t>(c)] += d;
          }
        }
        S* ga = a_h.grad_data();
        for (Index c = 0; c < s.c; ++c) {
          ga[c] += static_cast<S>(acc[static_cast<std::size_t>(c)]);
        }
      }
    });
  }
  return out;
}

// Channel concatenation, a's channels first.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape4 as = a.shape();
  const Shape4 bs = b.shape();
  if (as.n != bs.n) {
    throw ShapeError("batch", "concat_channels: batch " + std::to_string(as.n) +
                                  " vs " + std::to_string(bs.n));
  }
  if (as.h != bs.h) {
    throw ShapeError("height", "concat_channels: height " + std::to_string(as.h) +
                                   " vs " + std::to_string(bs.h));
  }
  if (as.w != bs.w) {
    throw ShapeError("width", "concat_channels: width " + std::to_string(as.w) +
                                  " vs " + std::to_string(bs.w));
  }
  Tensor<S> out(Shape4{as.n, as.c + bs.c, as.h, as.w});
  const Index hw = as.h * as.w;
  const Index a_plane = as.c * hw;
  const Index b_plane = bs.c * hw;
  for (Index n = 0; n < as.n; ++n) {
    std::copy(a.data() + n * a_plane, a.data() + (n + 1) * a_plane,
              out.data() + n * (a_plane + b_plane));
    std::copy(b.data() + n * b_plane, b.data() + (n + 1) * b_plane,
              out.data() + n * (a_plane + b_plane) + a_plane);
  }

  Tape<S>* tape = Tape<S>::active();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> a_h = a, b_h = b, out_h = out;
    tape->record(out, [a_h, b_h, out_h]() mutable {
      const Shape4 as2 = a_h.shape();
      const Shape4 bs2 = b_h.shape();
      const Index hw2 = as2.h * as2.w;
      const Index ap = as2.c * hw2;
      const Index bp = bs2.c * hw2;
      const S* g = out_h.grad_data();
      if (a_h.requires_grad()) {
        a_h.ensure_grad();
        S* ga = a_h.grad_data();
        for (Index n = 0; n < as2.n; ++n) {
          const S* gn = g + n * (ap + bp);
          for (Index i = 0; i < ap; ++i) ga[n * ap + i] += gn[i];
        }
      }
      if (b_h.requires_grad()) {
        b_h.ensure_grad();
        S* gb = b_h.grad_data();
        for (Index n = 0; n < bs2.n; ++n) {
          const S* gn = g + n * (ap + bp) + ap;
          for (Index i = 0; i < bp; ++i) gb[n * bp + i] += gn[i];
        }
      }
    });
  }
  return out;
}

// Elementwise sum of same-shape tensors.
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("spatial", "add: shape " + a.shape().str() + " vs " +
                                    b.shape().str());
  }
  Tensor<S> out(a.shape());
  const Index n = a.size();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (Index i = 0; i < n; ++i) po[i] = pa[i] + pb[i];

  Tape<S>* tape = Tape<S>::active();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> a_h = a, b_h = b, out_h = out;
    tape->record(out, [a_h, b_h, out_h]() mutable {
      const Index cnt = out_h.size();
      const S* g = out_h.grad_data();
      if (a_h.requires_grad()) {
        a_h.ensure_grad();
        S* ga = a_h.grad_data();
        for (Index i = 0; i < cnt; ++i) ga[i] += g[i];
      }
      if (b_h.requires_grad()) {
        b_h.ensure_grad();
        S* gb = b_h.grad_data();
        for (Index i = 0; i < cnt; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

// Mean squared error over all elements, accumulated in 64-bit. Returns a
// (1,1,1,1) tensor.
template <typename S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& label) {
  if (!(pred.shape() == label.shape())) {
    throw ShapeError("spatial", "mse_loss: shape " + pred.shape().str() +
                                    " vs " + label.shape().str());
  }
  const Index n = pred.size();
  if (n == 0) throw ValidationError("mse_loss: empty tensors");
  const S* p = pred.data();
  const S* l = label.data();
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(l[i]);
    acc += d * d;
  }
  Tensor<S> out(Shape4{1, 1, 1, 1});
  out.data()[0] = static_cast<S>(acc / static_cast<double>(n));

  Tape<S>* tape = Tape<S>::active();
  if (tape && (pred.requires_grad() || label.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> p_h = pred, l_h = label, out_h = out;
    tape->record(out, [p_h, l_h, out_h]() mutable {
      const Index cnt = p_h.size();
      const S g = out_h.grad_data()[0];
      const S scale = g * S(2) / static_cast<S>(cnt);
      const S* pp = p_h.data();
      const S* ll = l_h.data();
      if (p_h.requires_grad()) {
        p_h.ensure_grad();
        S* gp = p_h.grad_data();
        for (Index i = 0; i < cnt; ++i) gp[i] += scale * (pp[i] - ll[i]);
      }
      if (l_h.requires_grad()) {
        l_h.ensure_grad();
        S* gl = l_h.grad_data();
        for (Index i = 0; i < cnt; ++i) gl[i] -= scale * (pp[i] - ll[i]);
      }
    });
  }
  return out;
}

}  // namespace rrnet
