// Layer kernels: 2-D convolution, fully connected, pooling, ReLU, softmax and
// cross-entropy, each with a hand-written backward pass.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neuroedge/tensor.hpp"

namespace neuroedge {

enum class Padding { valid, same };

struct ConvGeometry {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t pad_h = 0;  // total padding along rows
  std::size_t pad_w = 0;
};

// Output extent is floor((H + pad - k) / stride) + 1 per dimension. "same"
// padding chooses pad so that the output is ceil(H / stride); odd totals put
// the extra row/column at the bottom/right.
inline ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                                  std::size_t stride, Padding padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (kh == 0 || kw == 0) throw ShapeError("conv2d: kernel extent must be positive");
  ConvGeometry g;
  if (padding == Padding::same) {
    const std::size_t oh = (h + stride - 1) / stride;
    const std::size_t ow = (w + stride - 1) / stride;
    const auto need_h = static_cast<long long>((oh - 1) * stride + kh) - static_cast<long long>(h);
    const auto need_w = static_cast<long long>((ow - 1) * stride + kw) - static_cast<long long>(w);
    g.pad_h = static_cast<std::size_t>(std::max(need_h, 0LL));
    g.pad_w = static_cast<std::size_t>(std::max(need_w, 0LL));
    g.pad_top = g.pad_h / 2;
    g.pad_left = g.pad_w / 2;
  }
  if (h + g.pad_h < kh) {
    throw ShapeError("conv2d: kernel rows (" + std::to_string(kh) + ") exceed padded input rows (" +
                     std::to_string(h + g.pad_h) + ")");
  }
  if (w + g.pad_w < kw) {
    throw ShapeError("conv2d: kernel columns (" + std::to_string(kw) +
                     ") exceed padded input columns (" + std::to_string(w + g.pad_w) + ")");
  }
  g.out_h = (h + g.pad_h - kh) / stride + 1;
  g.out_w = (w + g.pad_w - kw) / stride + 1;
  return g;
}

template <std::floating_point T>
struct ConvLayer {
  Tensor<T> kernel;  // kh x kw x cin x cout
  std::vector<T> bias;
  std::size_t stride = 1;
  Padding padding = Padding::valid;

  std::size_t kh() const { return kernel.dim(0); }
  std::size_t kw() const { return kernel.dim(1); }
  std::size_t cin() const { return kernel.dim(2); }
  std::size_t cout() const { return kernel.dim(3); }
  std::size_t param_count() const { return kernel.size() + bias.size(); }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

template <std::floating_point T>
struct DenseLayer {
  Tensor<T> weights;  // cin x cout
  std::vector<T> bias;

  std::size_t cin() const { return weights.dim(0); }
  std::size_t cout() const { return weights.dim(1); }
  std::size_t param_count() const { return weights.size() + bias.size(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

template <std::floating_point T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  std::vector<T> bias;
};

template <std::floating_point T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

namespace detail {

template <std::floating_point T>
void check_conv(const Tensor<T>& input, const ConvLayer<T>& layer) {
  if (layer.kernel.rank() != 4) {
    throw ShapeError("conv2d: kernel must be rank 4 (kh x kw x cin x cout), got " +
                     shape_to_string(layer.kernel.shape()));
  }
  if (input.rank() != 3) {
    throw ShapeError("conv2d: input must be rank 3 (rows x cols x channels), got " +
                     shape_to_string(input.shape()));
  }
  if (input.dim(2) != layer.cin()) {
    throw ShapeError("conv2d: input channels (" + std::to_string(input.dim(2)) +
                     ") != kernel cin (" + std::to_string(layer.cin()) + ")");
  }
  if (layer.bias.size() != layer.cout()) {
    throw ShapeError("conv2d: bias length (" + std::to_string(layer.bias.size()) +
                     ") != kernel cout (" + std::to_string(layer.cout()) + ")");
  }
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayer<T>& layer) {
  detail::check_conv(input, layer);
  const std::size_t h = input.dim(0), w = input.dim(1), cin = layer.cin(), cout = layer.cout();
  const std::size_t kh = layer.kh(), kw = layer.kw(), stride = layer.stride;
  const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, layer.padding);

  Tensor<T> out({g.out_h, g.out_w, cout});
  const T* in = input.data().data();
  const T* k = layer.kernel.data().data();
  T* o = out.data().data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* acc = o + (oy * g.out_w + ox) * cout;
      std::copy(layer.bias.begin(), layer.bias.end(), acc);
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(g.pad_top);
        if (iy < 0 || iy >= static_cast<long long>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ix =
              static_cast<long long>(ox * stride + kx) - static_cast<long long>(g.pad_left);
          if (ix < 0 || ix >= static_cast<long long>(w)) continue;
          const T* px = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const T* kk = k + (ky * kw + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T v = px[ci];
            if (v == T{0}) continue;
            const T* kr = kk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) acc[co] += v * kr[co];
          }
        }
      }
    }
  }
  return out;
}

template <std::floating_point T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvLayer<T>& layer,
                             const Tensor<T>& upstream) {
  detail::check_conv(input, layer);
  const std::size_t h = input.dim(0), w = input.dim(1), cin = layer.cin(), cout = layer.cout();
  const std::size_t kh = layer.kh(), kw = layer.kw(), stride = layer.stride;
  const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, layer.padding);
  const Shape expected{g.out_h, g.out_w, cout};
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d backward: upstream gradient shape " +
                     shape_to_string(upstream.shape()) + " != forward output shape " +
                     shape_to_string(expected));
  }

  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(layer.kernel.shape()),
                     std::vector<T>(cout, T{0})};
  const T* in = input.data().data();
  const T* k = layer.kernel.data().data();
  const T* up = upstream.data().data();
  T* gin = grads.input.data().data();
  T* gk = grads.kernel.data().data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* gu = up + (oy * g.out_w + ox) * cout;
      for (std::size_t co = 0; co < cout; ++co) grads.bias[co] += gu[co];
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(g.pad_top);
        if (iy < 0 || iy >= static_cast<long long>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ix =
              static_cast<long long>(ox * stride + kx) - static_cast<long long>(g.pad_left);
          if (ix < 0 || ix >= static_cast<long long>(w)) continue;
          const std::size_t pix = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const std::size_t tap = (ky * kw + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* kr = k + tap + ci * cout;
            T* gkr = gk + tap + ci * cout;
            const T v = in[pix + ci];
            T acc{0};
            for (std::size_t co = 0; co < cout; ++co) {
              acc += kr[co] * gu[co];
              gkr[co] += v * gu[co];
            }
            gin[pix + ci] += acc;
          }
        }
      }
    }
  }
  return grads;
}

// Accepts any input whose element count equals cin (flattened row-major).
template <std::floating_point T>
Tensor<T> dense_forward(const Tensor<T>& input, const DenseLayer<T>& layer) {
  if (input.empty()) throw ShapeError("dense: empty input");
  if (input.size() != layer.cin()) {
    throw ShapeError("dense: input length (" + std::to_string(input.size()) +
                     ") != weights cin (" + std::to_string(layer.cin()) + ")");
  }
  const std::size_t cin = layer.cin(), cout = layer.cout();
  Tensor<T> out({cout});
  T* o = out.data().data();
  std::copy(layer.bias.begin(), layer.bias.end(), o);
  const T* x = input.data().data();
  const T* wt = layer.weights.data().data();
  for (std::size_t i = 0; i < cin; ++i) {
    const T v = x[i];
    if (v == T{0}) continue;
    const T* row = wt + i * cout;
    for (std::size_t j = 0; j < cout; ++j) o[j] += v * row[j];
  }
  return out;
}

template <std::floating_point T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const DenseLayer<T>& layer,
                             const Tensor<T>& upstream) {
  if (input.size() != layer.cin()) {
    throw ShapeError("dense backward: input length (" + std::to_string(input.size()) +
                     ") != weights cin (" + std::to_string(layer.cin()) + ")");
  }
  if (upstream.size() != layer.cout()) {
    throw ShapeError("dense backward: upstream length (" + std::to_string(upstream.size()) +
                     ") != weights cout (" + std::to_string(layer.cout()) + ")");
  }
  const std::size_t cin = layer.cin(), cout = layer.cout();
  DenseGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(layer.weights.shape()),
                      std::vector<T>(upstream.data().begin(), upstream.data().end())};
  const T* x = input.data().data();
  const T* g = upstream.data().data();
  const T* wt = layer.weights.data().data();
  T* gx = grads.input.data().data();
  T* gw = grads.weights.data().data();
  for (std::size_t i = 0; i < cin; ++i) {
    const T* row = wt + i * cout;
    T* grow = gw + i * cout;
    const T v = x[i];
    T acc{0};
    for (std::size_t j = 0; j < cout; ++j) {
      acc += row[j] * g[j];
      grow[j] += v * g[j];
    }
    gx[i] = acc;
  }
  return grads;
}

template <std::floating_point T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  if (input.empty()) throw ShapeError("relu: empty input");
  Tensor<T> out = input;
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <std::floating_point T>
T relu(T x) {
  return x > T{0} ? x : T{0};
}

template <std::floating_point T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& upstream) {
  if (input.shape() != upstream.shape()) {
    throw ShapeError("relu backward: upstream shape " + shape_to_string(upstream.shape()) +
                     " != input shape " + shape_to_string(input.shape()));
  }
  Tensor<T> grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(input[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

enum class PoolKind { max, average };

inline std::size_t pool_extent(std::size_t extent, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0) throw ShapeError("pool: size and stride must be positive");
  if (extent < size) {
    throw ShapeError("pool: window (" + std::to_string(size) + ") exceeds input extent (" +
                     std::to_string(extent) + ")");
  }
  return (extent - size) / stride + 1;
}

template <std::floating_point T>
Tensor<T> pool_forward(const Tensor<T>& input, PoolKind kind, std::size_t size, std::size_t stride) {
  if (input.rank() != 3) {
    throw ShapeError("pool: input must be rank 3, got " + shape_to_string(input.shape()));
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t oh = pool_extent(h, size, stride), ow = pool_extent(w, size, stride);
  Tensor<T> out({oh, ow, c});
  const T scale = T{1} / static_cast<T>(size * size);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        T acc = kind == PoolKind::max ? -std::numeric_limits<T>::infinity() : T{0};
        for (std::size_t ky = 0; ky < size; ++ky) {
          for (std::size_t kx = 0; kx < size; ++kx) {
            const T v = input.at(oy * stride + ky, ox * stride + kx, ch);
            if (kind == PoolKind::max) {
              acc = std::max(acc, v);
            } else {
              acc += v;
            }
          }
        }
        out.at(oy, ox, ch) = kind == PoolKind::max ? acc : acc * scale;
      }
    }
  }
  return out;
}

// Max routes the gradient to the first maximal element of each window.
template <std::floating_point T>
Tensor<T> pool_backward(const Tensor<T>& input, PoolKind kind, std::size_t size,
                        std::size_t stride, const Tensor<T>& upstream) {
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t oh = pool_extent(h, size, stride), ow = pool_extent(w, size, stride);
  if (upstream.shape() != Shape{oh, ow, c}) {
    throw ShapeError("pool backward: upstream shape " + shape_to_string(upstream.shape()) +
                     " != forward output shape " + shape_to_string({oh, ow, c}));
  }
  Tensor<T> grad(input.shape());
  const T scale = T{1} / static_cast<T>(size * size);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T g = upstream.at(oy, ox, ch);
        if (kind == PoolKind::average) {
          for (std::size_t ky = 0; ky < size; ++ky) {
            for (std::size_t kx = 0; kx < size; ++kx) {
              grad.at(oy * stride + ky, ox * stride + kx, ch) += g * scale;
            }
          }
          continue;
        }
        std::size_t by = oy * stride, bx = ox * stride;
        T best = input.at(by, bx, ch);
        for (std::size_t ky = 0; ky < size; ++ky) {
          for (std::size_t kx = 0; kx < size; ++kx) {
            const T v = input.at(oy * stride + ky, ox * stride + kx, ch);
            if (v > best) {
              best = v;
              by = oy * stride + ky;
              bx = ox * stride + kx;
            }
          }
        }
        grad.at(by, bx, ch) += g;
      }
    }
  }
  return grad;
}

template <std::floating_point T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (T& v : out) v /= total;
  return out;
}

template <std::floating_point T>
T cross_entropy_loss(std::span<const T> logits, std::size_t label) {
  if (logits.empty()) throw ShapeError("cross_entropy: empty input");
  if (label >= logits.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total{0};
  for (const T v : logits) total += std::exp(v - peak);
  return std::log(total) + peak - logits[label];
}

// d(cross_entropy)/d(logits) = softmax(logits) - onehot(label).
template <std::floating_point T>
std::vector<T> cross_entropy_grad(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  std::vector<T> grad = softmax(logits);
  grad[label] -= T{1};
  return grad;
}

}  // namespace neuroedge
