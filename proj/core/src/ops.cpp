#include "gmseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmseg/errors.hpp"

namespace gmseg {

// ---------------------------------------------------------------------------
// ConvSpec

ConvSpec ConvSpec::same(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        int dilation, bool has_bias) {
  ConvSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kernel_height = kernel;
  spec.kernel_width = kernel;
  spec.dilation = dilation;
  spec.has_bias = has_bias;
  const int pad = dilation * static_cast<int>(kernel - 1) / 2;
  spec.padding = {pad, pad, pad, pad};
  return spec;
}

void ConvSpec::validate() const {
  if (dilation < 1) {
    throw InvalidConfigError("conv dilation must be >= 1, got " + std::to_string(dilation));
  }
  if (stride < 1) {
    throw InvalidConfigError("conv stride must be >= 1, got " + std::to_string(stride));
  }
  if (in_channels == 0 || out_channels == 0 || kernel_height == 0 || kernel_width == 0) {
    throw InvalidConfigError("conv channels and kernel extents must be positive");
  }
  if (padding.top < 0 || padding.bottom < 0 || padding.left < 0 || padding.right < 0) {
    throw InvalidConfigError("conv padding must be non-negative");
  }
  if (padding_mode == PaddingMode::Circular && stride != 1) {
    throw InvalidConfigError("circular padding requires stride 1");
  }
}

std::size_t ConvSpec::output_height(std::size_t input_height) const {
  const long span = static_cast<long>(dilation) * static_cast<long>(kernel_height - 1) + 1;
  const long padded = static_cast<long>(input_height) + padding.top + padding.bottom;
  if (padded < span) {
    throw DimensionError("conv input height " + std::to_string(input_height) +
                         " smaller than dilated kernel extent " + std::to_string(span));
  }
  return static_cast<std::size_t>((padded - span) / stride + 1);
}

std::size_t ConvSpec::output_width(std::size_t input_width) const {
  const long span = static_cast<long>(dilation) * static_cast<long>(kernel_width - 1) + 1;
  const long padded = static_cast<long>(input_width) + padding.left + padding.right;
  if (padded < span) {
    throw DimensionError("conv input width " + std::to_string(input_width) +
                         " smaller than dilated kernel extent " + std::to_string(span));
  }
  return static_cast<std::size_t>((padded - span) / stride + 1);
}

std::size_t ConvSpec::param_count() const {
  return out_channels * in_channels * kernel_height * kernel_width + (has_bias ? out_channels : 0);
}

namespace {

template <Scalar T>
using NodeT = detail::Node<T>;

void require_rank4(const Shape& shape, const char* op) {
  if (shape.size() != 4) {
    throw DimensionError(std::string(op) + " expects a [B,C,H,W] tensor, got " +
                         shape_to_string(shape));
  }
}

// Fixed-order dot product with eight independent partial sums.
template <Scalar T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

constexpr std::size_t kLanes = 32;

struct ConvGeometry {
  std::size_t batch, cin, cout, h, w, ho, wo, kh, kw;
  long dil, stride, pt, pl;
  bool circular;

  // Input coordinate for output coordinate o and tap k, or -1 when the tap
  // falls into zero padding.
  long map(long o, long k, long pad, long extent) const {
    long i = o * stride - pad + k * dil;
    if (circular) return ((i % extent) + extent) % extent;
    return (i >= 0 && i < extent) ? i : -1;
  }
};

ConvGeometry conv_geometry(const Shape& in, const ConvSpec& spec) {
  return {in[0],
          in[1],
          spec.out_channels,
          in[2],
          in[3],
          spec.output_height(in[2]),
          spec.output_width(in[3]),
          spec.kernel_height,
          spec.kernel_width,
          spec.dilation,
          spec.stride,
          spec.padding.top,
          spec.padding.left,
          spec.padding_mode == PaddingMode::Circular};
}

// Output columns [lo, hi) whose tap kx lands inside the input row.
inline void valid_columns(const ConvGeometry& g, long kx, long& offset, long& lo, long& hi) {
  offset = kx * g.dil - g.pl;
  lo = std::max<long>(0, -offset);
  hi = std::min<long>(static_cast<long>(g.wo), static_cast<long>(g.w) - offset);
}

template <Scalar T>
void conv_forward_fast(const ConvGeometry& g, const T* x, const T* wt, const T* bias, T* y) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      T* yplane = y + (b * g.cout + co) * g.ho * g.wo;
      for (std::size_t oy = 0; oy < g.ho; ++oy) {
        T* yrow = yplane + oy * g.wo;
        std::fill(yrow, yrow + g.wo, bias ? bias[co] : T{0});
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const T* xplane = x + (b * g.cin + ci) * g.h * g.w;
          const T* wk = wt + (co * g.cin + ci) * g.kh * g.kw;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const long iy = static_cast<long>(oy) - g.pt + static_cast<long>(ky) * g.dil;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const T* xrow = xplane + iy * static_cast<long>(g.w);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              long off, lo, hi;
              valid_columns(g, static_cast<long>(kx), off, lo, hi);
              const T wv = wk[ky * g.kw + kx];
              for (long ox = lo; ox < hi; ++ox) yrow[ox] += wv * xrow[ox + off];
            }
          }
        }
      }
    }
  }
}

template <Scalar T>
void conv_forward_generic(const ConvGeometry& g, const T* x, const T* wt, const T* bias, T* y) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t oy = 0; oy < g.ho; ++oy)
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
          T acc = bias ? bias[co] : T{0};
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long iy = g.map(static_cast<long>(oy), static_cast<long>(ky), g.pt,
                                    static_cast<long>(g.h));
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long ix = g.map(static_cast<long>(ox), static_cast<long>(kx), g.pl,
                                      static_cast<long>(g.w));
                if (ix < 0) continue;
                acc += wt[((co * g.cin + ci) * g.kh + ky) * g.kw + kx] *
                       x[((b * g.cin + ci) * g.h + iy) * g.w + ix];
              }
            }
          y[((b * g.cout + co) * g.ho + oy) * g.wo + ox] = acc;
        }
}

template <Scalar T>
void conv_backward_fast(const ConvGeometry& g, const T* x, const T* wt, const T* gy, T* gx,
                        T* gw, T* gb) {
  if (gb) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      double acc = 0;
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T* plane = gy + (b * g.cout + co) * g.ho * g.wo;
        for (std::size_t i = 0; i < g.ho * g.wo; ++i) acc += plane[i];
      }
      gb[co] += static_cast<T>(acc);
    }
  }
  if (gw) {
    // Thirty-two float lanes per tap accumulate over one (b, co, ci) plane,
    // then fold into double in a fixed order.
    const std::size_t kk = g.kh * g.kw;
    std::vector<double> acc(g.cout * g.cin * kk, 0.0);
    std::vector<T> lanes(kk * kLanes);
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* gplane = gy + (b * g.cout + co) * g.ho * g.wo;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const T* xplane = x + (b * g.cin + ci) * g.h * g.w;
          std::fill(lanes.begin(), lanes.end(), T{0});
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const T* grow = gplane + oy * g.wo;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long iy = static_cast<long>(oy) - g.pt + static_cast<long>(ky) * g.dil;
              if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
              const T* xrow = xplane + iy * static_cast<long>(g.w);
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                long off, lo, hi;
                valid_columns(g, static_cast<long>(kx), off, lo, hi);
                if (lo >= hi) continue;
                T l[kLanes];
                T* dst = lanes.data() + (ky * g.kw + kx) * kLanes;
                for (std::size_t j = 0; j < kLanes; ++j) l[j] = dst[j];
                const T* xs = xrow + off;
                long i = lo;
                for (; i + static_cast<long>(kLanes) <= hi; i += kLanes) {
                  for (std::size_t j = 0; j < kLanes; ++j) l[j] += grow[i + j] * xs[i + j];
                }
                for (std::size_t j = 0; i < hi; ++i, ++j) l[j] += grow[i] * xs[i];
                for (std::size_t j = 0; j < kLanes; ++j) dst[j] = l[j];
              }
            }
          }
          double* a = acc.data() + (co * g.cin + ci) * kk;
          for (std::size_t k = 0; k < kk; ++k) {
            const T* l = lanes.data() + k * kLanes;
            double part = 0.0;
            for (std::size_t j = 0; j < kLanes; ++j) part += static_cast<double>(l[j]);
            a[k] += part;
          }
        }
      }
    for (std::size_t i = 0; i < acc.size(); ++i) gw[i] += static_cast<T>(acc[i]);
  }
  if (gx) {
    // Transposed traversal: each input-gradient row gathers from gy rows.
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        T* giplane = gx + (b * g.cin + ci) * g.h * g.w;
        for (std::size_t iy = 0; iy < g.h; ++iy) {
          T* girow = giplane + iy * g.w;
          for (std::size_t co = 0; co < g.cout; ++co) {
            const T* gplane = gy + (b * g.cout + co) * g.ho * g.wo;
            const T* wk = wt + (co * g.cin + ci) * g.kh * g.kw;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long oy = static_cast<long>(iy) + g.pt - static_cast<long>(ky) * g.dil;
              if (oy < 0 || oy >= static_cast<long>(g.ho)) continue;
              const T* grow = gplane + oy * static_cast<long>(g.wo);
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                long off, lo, hi;
                valid_columns(g, static_cast<long>(kx), off, lo, hi);
                if (lo >= hi) continue;
                const T wv = wk[ky * g.kw + kx];
                T* dst = girow + off;
                for (long ox = lo; ox < hi; ++ox) dst[ox] += wv * grow[ox];
              }
            }
          }
        }
      }
  }
}

template <Scalar T>
void conv_backward_generic(const ConvGeometry& g, const T* x, const T* wt, const T* gy, T* gx,
                           T* gw, T* gb) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t oy = 0; oy < g.ho; ++oy)
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
          const T go = gy[((b * g.cout + co) * g.ho + oy) * g.wo + ox];
          if (gb) gb[co] += go;
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long iy = g.map(static_cast<long>(oy), static_cast<long>(ky), g.pt,
                                    static_cast<long>(g.h));
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long ix = g.map(static_cast<long>(ox), static_cast<long>(kx), g.pl,
                                      static_cast<long>(g.w));
                if (ix < 0) continue;
                const std::size_t wi = ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
                const std::size_t xi = ((b * g.cin + ci) * g.h + iy) * g.w + ix;
                if (gw) gw[wi] += go * x[xi];
                if (gx) gx[xi] += go * wt[wi];
              }
            }
        }
}

}  // namespace

template <Scalar T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>* bias) {
  spec.validate();
  require_rank4(input.shape(), "conv2d");
  if (input.dim(1) != spec.in_channels) {
    throw DimensionError("conv2d input has " + std::to_string(input.dim(1)) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw DimensionError("conv2d weight shape " + shape_to_string(weight.shape()) +
                         " does not match spec " + shape_to_string(spec.weight_shape()));
  }
  if (spec.has_bias != (bias != nullptr && bias->defined())) {
    throw DimensionError("conv2d bias presence does not match spec.has_bias");
  }
  if (bias && bias->shape() != Shape{spec.out_channels}) {
    throw DimensionError("conv2d bias shape " + shape_to_string(bias->shape()) + ", expected [" +
                         std::to_string(spec.out_channels) + "]");
  }

  const ConvGeometry g = conv_geometry(input.shape(), spec);
  const bool fast = !g.circular && g.stride == 1;
  std::vector<T> out(g.batch * g.cout * g.ho * g.wo);
  const T* bias_ptr = bias ? bias->data().data() : nullptr;
  if (fast) {
    conv_forward_fast(g, input.data().data(), weight.data().data(), bias_ptr, out.data());
  } else {
    conv_forward_generic(g, input.data().data(), weight.data().data(), bias_ptr, out.data());
  }

  std::vector<typename Tensor<T>::NodePtr> inputs{input.node(), weight.node()};
  if (bias) inputs.push_back(bias->node());
  return make_result<T>({g.batch, g.cout, g.ho, g.wo}, std::move(out), std::move(inputs),
                        [g, fast](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          auto& wn = *self.inputs[1];
                          T* gx = xn.requires_grad ? xn.grad.data() : nullptr;
                          T* gw = wn.requires_grad ? wn.grad.data() : nullptr;
                          T* gb = nullptr;
                          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                            gb = self.inputs[2]->grad.data();
                          }
                          if (fast) {
                            conv_backward_fast(g, xn.data.data(), wn.data.data(),
                                               self.grad.data(), gx, gw, gb);
                          } else {
                            conv_backward_generic(g, xn.data.data(), wn.data.data(),
                                                  self.grad.data(), gx, gw, gb);
                          }
                        });
}

// ---------------------------------------------------------------------------
// Batch normalisation

template <Scalar T>
BatchNormState<T>::BatchNormState(std::size_t channels, double momentum, double epsilon)
    : gamma(Tensor<T>::full({channels}, T{1}, true)),
      beta(Tensor<T>::full({channels}, T{0}, true)),
      running_mean(channels, T{0}),
      running_var(channels, T{1}),
      momentum(momentum),
      epsilon(epsilon) {}

template <Scalar T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BatchNormState<T>& state) {
  require_rank4(input.shape(), "batchnorm2d");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (channels != state.channels()) {
    throw DimensionError("batchnorm2d input has " + std::to_string(channels) +
                         " channels, state has " + std::to_string(state.channels()));
  }
  const std::size_t count = batch * plane;
  const T* x = input.data().data();
  std::vector<T> out(input.numel());
  std::vector<T> xhat(input.numel());
  std::vector<T> inv_std(channels);
  const T* gamma = state.gamma.data().data();
  const T* beta = state.beta.data().data();

  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (state.training) {
      double s = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mean = s / static_cast<double>(count);
      double sq = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      const double phi = state.momentum;
      state.running_mean[c] =
          static_cast<T>((1.0 - phi) * state.running_mean[c] + phi * mean);
      state.running_var[c] = static_cast<T>((1.0 - phi) * state.running_var[c] + phi * var);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
    const T m = static_cast<T>(mean);
    inv_std[c] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (x[base + i] - m) * inv;
        xhat[base + i] = xh;
        out[base + i] = gamma[c] * xh + beta[c];
      }
    }
  }

  const bool training = state.training;
  return make_result<T>(
      input.shape(), std::move(out),
      {input.node(), state.gamma.node(), state.beta.node()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, plane,
       training](NodeT<T>& self) {
        auto& xn = *self.inputs[0];
        auto& gn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        const T* gy = self.grad.data();
        const double n = static_cast<double>(batch * plane);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += gy[base + i];
              sum_gx += static_cast<double>(gy[base + i]) * xhat[base + i];
            }
          }
          if (gn.requires_grad) gn.grad[c] += static_cast<T>(sum_gx);
          if (bn.requires_grad) bn.grad[c] += static_cast<T>(sum_g);
          if (!xn.requires_grad) continue;
          const T gamma = gn.data[c];
          const T k = gamma * inv_std[c];
          if (training) {
            const T mean_g = static_cast<T>(sum_g / n);
            const T mean_gx = static_cast<T>(sum_gx / n);
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t base = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                xn.grad[base + i] += k * (gy[base + i] - mean_g - xhat[base + i] * mean_gx);
              }
            }
          } else {
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t base = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) xn.grad[base + i] += k * gy[base + i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops

template <Scalar T>
Tensor<T> dropout(const Tensor<T>& input, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return input;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  // Each 64-bit draw yields two 32-bit uniforms; element dropped when u < rate * 2^32.
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(rate, 32));
  std::vector<T> mask(input.numel());
  std::size_t i = 0;
  for (; i + 1 < mask.size(); i += 2) {
    const std::uint64_t r = rng.next_u64();
    mask[i] = (r & 0xffffffffULL) < threshold ? T{0} : keep_scale;
    mask[i + 1] = (r >> 32) < threshold ? T{0} : keep_scale;
  }
  if (i < mask.size()) mask[i] = (rng.next_u64() & 0xffffffffULL) < threshold ? T{0} : keep_scale;
  std::vector<T> out(input.numel());
  const auto x = input.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k] * mask[k];
  return make_result<T>(input.shape(), std::move(out), {input.node()},
                        [mask = std::move(mask)](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          for (std::size_t i = 0; i < mask.size(); ++i) {
                            xn.grad[i] += self.grad[i] * mask[i];
                          }
                        });
}

template <Scalar T>
Tensor<T> relu(const Tensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] < T{0} ? T{0} : x[i];  // NaN passes through
  return make_result<T>(input.shape(), std::move(out), {input.node()}, [](NodeT<T>& self) {
    auto& xn = *self.inputs[0];
    T* g = xn.grad.data();
    const T* d = xn.data.data();
    const T* up = self.grad.data();
    for (std::size_t i = 0; i < xn.data.size(); ++i) g[i] += d[i] > T{0} ? up[i] : T{0};
  });
}

template <Scalar T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-x[i]));
    } else {
      const T e = std::exp(x[i]);
      out[i] = e / (T{1} + e);
    }
  }
  return make_result<T>(input.shape(), out, {input.node()}, [out](NodeT<T>& self) {
    auto& xn = *self.inputs[0];
    for (std::size_t i = 0; i < out.size(); ++i) {
      xn.grad[i] += self.grad[i] * out[i] * (T{1} - out[i]);
    }
  });
}

template <Scalar T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels of an empty list");
  for (const auto& t : inputs) require_rank4(t.shape(), "concat_channels");
  const Shape& first = inputs.front().shape();
  std::size_t channels = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw DimensionError("concat_channels shape " + shape_to_string(s) +
                           " disagrees with " + shape_to_string(first) +
                           " outside the channel axis");
    }
    channels += s[1];
  }
  const std::size_t batch = first[0], plane = first[2] * first[3];
  std::vector<T> out(batch * channels * plane);
  std::vector<std::size_t> offsets;
  std::vector<typename Tensor<T>::NodePtr> nodes;
  std::size_t offset = 0;
  for (const auto& t : inputs) {
    const std::size_t c = t.dim(1);
    const auto src = t.data();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(src.data() + b * c * plane, c * plane,
                  out.data() + (b * channels + offset) * plane);
    }
    offsets.push_back(offset);
    nodes.push_back(t.node());
    offset += c;
  }
  return make_result<T>({batch, channels, first[2], first[3]}, std::move(out), std::move(nodes),
                        [offsets, batch, channels, plane](NodeT<T>& self) {
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            auto& in = *self.inputs[k];
                            if (!in.requires_grad) continue;
                            const std::size_t c = in.shape[1];
                            for (std::size_t b = 0; b < batch; ++b) {
                              const T* g = self.grad.data() + (b * channels + offsets[k]) * plane;
                              T* dst = in.grad.data() + b * c * plane;
                              for (std::size_t i = 0; i < c * plane; ++i) dst[i] += g[i];
                            }
                          }
                        });
}

template <Scalar T>
Tensor<T> global_avg_pool_broadcast(const Tensor<T>& input) {
  require_rank4(input.shape(), "global_avg_pool_broadcast");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (plane == 0) throw DimensionError("global_avg_pool_broadcast needs H,W >= 1");
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += x[p * plane + i];
    std::fill_n(out.data() + p * plane, plane, static_cast<T>(s / static_cast<double>(plane)));
  }
  return make_result<T>(input.shape(), std::move(out), {input.node()},
                        [planes, plane](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          for (std::size_t p = 0; p < planes; ++p) {
                            double s = 0;
                            for (std::size_t i = 0; i < plane; ++i) s += self.grad[p * plane + i];
                            const T g = static_cast<T>(s / static_cast<double>(plane));
                            for (std::size_t i = 0; i < plane; ++i) xn.grad[p * plane + i] += g;
                          }
                        });
}

template <Scalar T>
Tensor<T> maxpool2(const Tensor<T>& input) {
  require_rank4(input.shape(), "maxpool2");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (h % 2 || w % 2) {
    throw DimensionError("maxpool2 needs even spatial extents, got " +
                         shape_to_string(input.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  const auto x = input.data();
  std::vector<T> out(planes * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (p * h + 2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (p * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = x[best];
        argmax[o] = best;
      }
  return make_result<T>({input.dim(0), input.dim(1), ho, wo}, std::move(out), {input.node()},
                        [argmax = std::move(argmax)](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          for (std::size_t o = 0; o < argmax.size(); ++o) {
                            xn.grad[argmax[o]] += self.grad[o];
                          }
                        });
}

template <Scalar T>
Tensor<T> upsample_nearest2(const Tensor<T>& input) {
  require_rank4(input.shape(), "upsample_nearest2");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  const auto x = input.data();
  std::vector<T> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        out[(p * ho + oy) * wo + ox] = x[(p * h + oy / 2) * w + ox / 2];
      }
  return make_result<T>({input.dim(0), input.dim(1), ho, wo}, std::move(out), {input.node()},
                        [planes, h, w](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          const std::size_t ho = 2 * h, wo = 2 * w;
                          for (std::size_t p = 0; p < planes; ++p)
                            for (std::size_t oy = 0; oy < ho; ++oy)
                              for (std::size_t ox = 0; ox < wo; ++ox) {
                                xn.grad[(p * h + oy / 2) * w + ox / 2] +=
                                    self.grad[(p * ho + oy) * wo + ox];
                              }
                        });
}

template <Scalar T>
Tensor<T> pad2d(const Tensor<T>& input, const Padding& pad) {
  require_rank4(input.shape(), "pad2d");
  if (pad.top < 0 || pad.bottom < 0 || pad.left < 0 || pad.right < 0) {
    throw ContractError("pad2d padding must be non-negative");
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = h + pad.top + pad.bottom, wo = w + pad.left + pad.right;
  const auto x = input.data();
  std::vector<T> out(planes * ho * wo, T{0});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(x.data() + (p * h + y) * w, w,
                  out.data() + (p * ho + y + pad.top) * wo + pad.left);
    }
  return make_result<T>({input.dim(0), input.dim(1), ho, wo}, std::move(out), {input.node()},
                        [planes, h, w, ho, wo, pad](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          for (std::size_t p = 0; p < planes; ++p)
                            for (std::size_t y = 0; y < h; ++y)
                              for (std::size_t xx = 0; xx < w; ++xx) {
                                xn.grad[(p * h + y) * w + xx] +=
                                    self.grad[(p * ho + y + pad.top) * wo + xx + pad.left];
                              }
                        });
}

template <Scalar T>
Tensor<T> crop2d(const Tensor<T>& input, std::size_t top, std::size_t left, std::size_t height,
                 std::size_t width) {
  require_rank4(input.shape(), "crop2d");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (top + height > h || left + width > w) {
    throw DimensionError("crop2d window exceeds input " + shape_to_string(input.shape()));
  }
  const auto x = input.data();
  std::vector<T> out(planes * height * width);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(x.data() + (p * h + y + top) * w + left, width,
                  out.data() + (p * height + y) * width);
    }
  return make_result<T>({input.dim(0), input.dim(1), height, width}, std::move(out),
                        {input.node()},
                        [planes, h, w, top, left, height, width](NodeT<T>& self) {
                          auto& xn = *self.inputs[0];
                          for (std::size_t p = 0; p < planes; ++p)
                            for (std::size_t y = 0; y < height; ++y)
                              for (std::size_t xx = 0; xx < width; ++xx) {
                                xn.grad[(p * h + y + top) * w + xx + left] +=
                                    self.grad[(p * height + y) * width + xx];
                              }
                        });
}

template <Scalar T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](NodeT<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

template <Scalar T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](NodeT<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an.requires_grad) an.grad[i] += self.grad[i] * bn.data[i];
      if (bn.requires_grad) bn.grad[i] += self.grad[i] * an.data[i];
    }
  });
}

template <Scalar T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result<T>(a.shape(), std::move(out), {a.node()}, [factor](NodeT<T>& self) {
    auto& an = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * factor;
  });
}

template <Scalar T>
Tensor<T> sum(const Tensor<T>& a) {
  double s = 0;
  for (T v : a.data()) s += v;
  return make_result<T>({1}, {static_cast<T>(s)}, {a.node()}, [](NodeT<T>& self) {
    auto& an = *self.inputs[0];
    for (auto& g : an.grad) g += self.grad[0];
  });
}

#define GMSEG_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,              \
                            const Tensor<T>*);                                                \
  template struct BatchNormState<T>;                                                          \
  template Tensor<T> batchnorm2d(const Tensor<T>&, BatchNormState<T>&);                       \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                           \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                          \
  template Tensor<T> global_avg_pool_broadcast(const Tensor<T>&);                             \
  template Tensor<T> maxpool2(const Tensor<T>&);                                              \
  template Tensor<T> upsample_nearest2(const Tensor<T>&);                                     \
  template Tensor<T> pad2d(const Tensor<T>&, const Padding&);                                 \
  template Tensor<T> crop2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t,          \
                            std::size_t);                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> sum(const Tensor<T>&);

GMSEG_INSTANTIATE_OPS(float)
GMSEG_INSTANTIATE_OPS(double)

}  // namespace gmseg
