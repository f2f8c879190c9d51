#pragma once

// Numeric kernels every layer is built from. All kernels are pure functions
// with a fixed iteration order, so identical inputs give bit-identical
// outputs.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "convad/geometry.hpp"
#include "convad/tensor.hpp"

namespace convad {

enum class Activation { relu, tanh, sigmoid, silu };
enum class PoolMode { max, avg };

namespace detail {

template <typename Scalar>
void require_rank(const BasicTensor<Scalar>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_to_string(t.shape()));
  }
}

inline void require_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw ShapeError(what + ": expected " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

}  // namespace detail

/// Zero-padded cross-correlation. weights are (C_out, C_in, kh, kw), bias is
/// (C_out). Accumulates row-major over each kernel window, channel by channel.
template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input,
                           const BasicTensor<Scalar>& weights,
                           const BasicTensor<Scalar>& bias, const ConvGeometry& g) {
  detail::require_rank(input, 3, "conv2d input");
  detail::require_rank(weights, 4, "conv2d weights");
  detail::require_rank(bias, 1, "conv2d bias");
  const std::size_t cin = input.channels();
  const std::size_t cout = weights.dim(0);
  if (g.in_channels != 0) detail::require_dim(cin, g.in_channels, "conv2d input channels");
  if (g.out_channels != 0) detail::require_dim(cout, g.out_channels, "conv2d output channels");
  detail::require_dim(weights.dim(1), cin, "conv2d weights dim 1 (input channels)");
  detail::require_dim(weights.dim(2), g.kernel_h, "conv2d weights dim 2 (kernel height)");
  detail::require_dim(weights.dim(3), g.kernel_w, "conv2d weights dim 3 (kernel width)");
  detail::require_dim(bias.dim(0), cout, "conv2d bias dim 0 (output channels)");

  const std::size_t h = input.height();
  const std::size_t w = input.width();
  const auto [oh, ow] = output_hw(g, h, w);
  BasicTensor<Scalar> out({cout, oh, ow});

  const auto ih = static_cast<std::ptrdiff_t>(h);
  const auto iw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        Scalar acc = bias[co];
        const auto y0 = static_cast<std::ptrdiff_t>(oy * g.stride_h) -
                        static_cast<std::ptrdiff_t>(g.pad_h);
        const auto x0 = static_cast<std::ptrdiff_t>(ox * g.stride_w) -
                        static_cast<std::ptrdiff_t>(g.pad_w);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const auto y = y0 + static_cast<std::ptrdiff_t>(ky * g.dilation_h);
            if (y < 0 || y >= ih) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const auto x = x0 + static_cast<std::ptrdiff_t>(kx * g.dilation_w);
              if (x < 0 || x >= iw) continue;
              acc += input(ci, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) *
                     weights[((co * cin + ci) * g.kernel_h + ky) * g.kernel_w + kx];
            }
          }
        }
        out(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

/// Per-channel windowed max or mean. Max ignores padding cells; mean divides
/// by the full window size (padding counts as zero).
template <typename Scalar>
BasicTensor<Scalar> pool2d(const BasicTensor<Scalar>& input, const ConvGeometry& g,
                           PoolMode mode) {
  detail::require_rank(input, 3, "pool2d input");
  const std::size_t c = input.channels();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  const auto [oh, ow] = output_hw(g, h, w);
  BasicTensor<Scalar> out({c, oh, ow});
  const Scalar window_size = static_cast<Scalar>(g.kernel_h * g.kernel_w);

  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        Scalar acc = mode == PoolMode::max ? -std::numeric_limits<Scalar>::infinity()
                                           : Scalar(0);
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky * g.dilation_h) -
                         static_cast<std::ptrdiff_t>(g.pad_h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx * g.dilation_w) -
                           static_cast<std::ptrdiff_t>(g.pad_w);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
            const Scalar v = input(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            if (mode == PoolMode::max) {
              acc = v > acc ? v : acc;
            } else {
              acc += v;
            }
          }
        }
        out(ch, oy, ox) = mode == PoolMode::max ? acc : acc / window_size;
      }
    }
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> elementwise(const BasicTensor<Scalar>& input, Activation fn) {
  const auto x = input.values().array();
  typename BasicTensor<Scalar>::Vector y;
  switch (fn) {
    case Activation::relu:
      y = x.max(Scalar(0)).matrix();
      break;
    case Activation::tanh:
      y = x.tanh().matrix();
      break;
    case Activation::sigmoid:
      y = (Scalar(1) / (Scalar(1) + (-x).exp())).matrix();
      break;
    case Activation::silu:
      y = (x / (Scalar(1) + (-x).exp())).matrix();
      break;
  }
  return BasicTensor<Scalar>(input.shape(), std::move(y));
}

template <typename Scalar>
BasicTensor<Scalar> batchnorm_infer(const BasicTensor<Scalar>& input,
                                    const BasicTensor<Scalar>& mean,
                                    const BasicTensor<Scalar>& var,
                                    const BasicTensor<Scalar>& gamma,
                                    const BasicTensor<Scalar>& beta, Scalar eps) {
  detail::require_rank(input, 3, "batchnorm input");
  const std::size_t c = input.channels();
  detail::require_dim(mean.size(), c, "batchnorm mean length");
  detail::require_dim(var.size(), c, "batchnorm var length");
  detail::require_dim(gamma.size(), c, "batchnorm gamma length");
  detail::require_dim(beta.size(), c, "batchnorm beta length");
  if (eps < Scalar(0)) throw ValueError("batchnorm eps must be non-negative");
  BasicTensor<Scalar> out(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (var[ch] < Scalar(0)) {
      throw ValueError("batchnorm variance of channel " + std::to_string(ch) +
                       " is negative");
    }
    const Scalar scale = gamma[ch] / std::sqrt(var[ch] + eps);
    out.plane(ch) = (input.plane(ch) - mean[ch]) * scale + beta[ch];
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> upsample_nearest(const BasicTensor<Scalar>& input, std::size_t factor) {
  detail::require_rank(input, 3, "upsample input");
  if (factor < 2) throw GeometryError("upsample factor must be >= 2");
  const std::size_t c = input.channels();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  BasicTensor<Scalar> out({c, h * factor, w * factor});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h * factor; ++y) {
      for (std::size_t x = 0; x < w * factor; ++x) {
        out(ch, y, x) = input(ch, y / factor, x / factor);
      }
    }
  }
  return out;
}

/// Stacks b's channels after a's.
template <typename Scalar>
BasicTensor<Scalar> concat_channels(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_rank(a, 3, "concat first operand");
  detail::require_rank(b, 3, "concat second operand");
  detail::require_dim(b.height(), a.height(), "concat height");
  detail::require_dim(b.width(), a.width(), "concat width");
  typename BasicTensor<Scalar>::Vector data(a.values().size() + b.values().size());
  data << a.values(), b.values();
  return BasicTensor<Scalar>({a.channels() + b.channels(), a.height(), a.width()},
                             std::move(data));
}

/// weights are (M, N) row-major; the input must be rank 1 of length N.
template <typename Scalar>
BasicTensor<Scalar> dense(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& weights,
                          const BasicTensor<Scalar>& bias) {
  detail::require_rank(input, 1, "dense input");
  detail::require_rank(weights, 2, "dense weights");
  detail::require_rank(bias, 1, "dense bias");
  const std::size_t m = weights.dim(0);
  const std::size_t n = weights.dim(1);
  detail::require_dim(input.dim(0), n, "dense weights dim 1 (input features)");
  detail::require_dim(bias.dim(0), m, "dense bias dim 0 (output features)");
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Matrix> w(weights.values().data(), static_cast<Eigen::Index>(m),
                             static_cast<Eigen::Index>(n));
  typename BasicTensor<Scalar>::Vector y = w * input.values() + bias.values();
  return BasicTensor<Scalar>({m}, std::move(y));
}

/// Softmax over every element of the input; the shape is preserved.
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& input) {
  const auto& x = input.values();
  const Scalar peak = x.maxCoeff();
  typename BasicTensor<Scalar>::Vector e = (x.array() - peak).exp().matrix();
  e /= e.sum();
  return BasicTensor<Scalar>(input.shape(), std::move(e));
}

}  // namespace convad
