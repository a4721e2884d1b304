#include "kandu/nn.hpp"

// Always take the blocked GEMM path: the coefficient-based kernel for small products peels to
// the buffer alignment, which makes the summation order depend on where malloc placed the data.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kandu {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

bool g_corrupt_relu = false;

void require_nchw(const Shape& s, const char* op) {
  if (s.size() != 4)
    throw std::invalid_argument(std::string(op) + ": expected N,C,H,W input, got " + shape_str(s));
}

struct ConvGeometry {
  std::size_t cin, h, w, k, stride, pad, ho, wo;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// col[(c*k + ki)*k + kj, oh*wo + ow] = x[c, oh*s - p + ki, ow*s - p + kj] (0 outside).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = col + ((c * g.k + ki) * g.k + kj) * cols;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = long(oh * g.stride + ki) - long(g.pad);
          T* out = row + oh * g.wo;
          if (ih < 0 || ih >= long(g.h)) {
            std::fill_n(out, g.wo, T(0));
            continue;
          }
          const T* in = x + (c * g.h + std::size_t(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = long(ow * g.stride + kj) - long(g.pad);
            out[ow] = (iw < 0 || iw >= long(g.w)) ? T(0) : in[iw];
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t cols = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((c * g.k + ki) * g.k + kj) * cols;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = long(oh * g.stride + ki) - long(g.pad);
          if (ih < 0 || ih >= long(g.h)) continue;
          T* out = x + (c * g.h + std::size_t(ih)) * g.w;
          const T* in = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = long(ow * g.stride + kj) - long(g.pad);
            if (iw >= 0 && iw < long(g.w)) out[iw] += in[ow];
          }
        }
      }
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

namespace testing {
void set_corrupt_relu_backward(bool on) { g_corrupt_relu = on; }
bool corrupt_relu_backward() { return g_corrupt_relu; }
}  // namespace testing

template <typename T>
std::size_t ConvParams<T>::out_channels() const { return weight.size(0); }
template <typename T>
std::size_t ConvParams<T>::in_channels() const { return weight.size(1); }

template <typename T>
ConvParams<T> make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t padding,
                        Rng& rng) {
  ConvParams<T> p;
  p.weight = Tensor<T>(Shape{out, in, k, k});
  const double bound = std::sqrt(6.0 / double(in * k * k));
  for (auto& v : p.weight.mutable_data()) v = T(rng.uniform(-bound, bound));
  p.bias = Tensor<T>(Shape{out});
  p.stride = 1;
  p.padding = padding;
  p.weight.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

template <typename T>
ConvParams<T> make_upsample(std::size_t in, std::size_t out, Rng& rng) {
  ConvParams<T> p;
  p.weight = Tensor<T>(Shape{in, out, 2, 2});
  const double bound = std::sqrt(6.0 / double(in * 4));
  for (auto& v : p.weight.mutable_data()) v = T(rng.uniform(-bound, bound));
  p.bias = Tensor<T>(Shape{out});
  p.stride = 2;
  p.padding = 0;
  p.weight.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

template <typename T>
BatchNormState<T>::BatchNormState(std::size_t channels)
    : gamma(Shape{channels}, T(1)),
      beta(Shape{channels}, T(0)),
      running_mean(Shape{channels}, T(0)),
      running_var(Shape{channels}, T(1)) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  require_nchw(x.shape(), "conv2d");
  if (p.weight.dim() != 4 || p.weight.size(2) != p.weight.size(3))
    throw std::invalid_argument("conv2d: weight must be [Cout,Cin,k,k], got " +
                                shape_str(p.weight.shape()));
  const std::size_t n = x.size(0), cin = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t cout = p.weight.size(0), k = p.weight.size(2);
  if (p.weight.size(1) != cin)
    throw std::invalid_argument("conv2d: input has " + std::to_string(cin) +
                                " channels, weight expects " + std::to_string(p.weight.size(1)));
  if (p.bias.numel() != cout)
    throw std::invalid_argument("conv2d: bias shape " + shape_str(p.bias.shape()) +
                                " for " + std::to_string(cout) + " output channels");
  if (p.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (h + 2 * p.padding < k || w + 2 * p.padding < k ||
      (h + 2 * p.padding - k) % p.stride != 0 || (w + 2 * p.padding - k) % p.stride != 0)
    throw std::invalid_argument("conv2d: extent " + std::to_string(h) + "x" + std::to_string(w) +
                                " with kernel " + std::to_string(k) + ", padding " +
                                std::to_string(p.padding) + ", stride " +
                                std::to_string(p.stride) + " does not divide exactly");
  const ConvGeometry g{cin, h, w, k, p.stride, p.padding,
                       (h + 2 * p.padding - k) / p.stride + 1,
                       (w + 2 * p.padding - k) / p.stride + 1};
  const std::size_t rows = cin * k * k, cols = g.ho * g.wo;

  std::vector<T> out(n * cout * cols);
  std::vector<T> col(g.pointwise() ? 0 : rows * cols);
  ConstMapMat<T> wm(p.weight.data().data(), cout, rows);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(p.bias.data().data(), cout);
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x.data().data() + i * cin * h * w;
    const T* cm = xi;
    if (!g.pointwise()) {
      im2col(xi, g, col.data());
      cm = col.data();
    }
    MapMat<T> y(out.data() + i * cout * cols, cout, cols);
    y.noalias() = wm * ConstMapMat<T>(cm, rows, cols);
    y.colwise() += bias;
  }

  auto xi = x.impl_ptr();
  auto wi = p.weight.impl_ptr();
  auto bi = p.bias.impl_ptr();
  return detail::make_result<T>(Shape{n, cout, g.ho, g.wo}, std::move(out), "conv2d",
                                {&x, &p.weight, &p.bias}, [=](std::span<const T> grad) {
    std::vector<T> col(g.pointwise() ? 0 : rows * cols);
    std::vector<T> dcol(rows * cols);
    ConstMapMat<T> wm(wi->data.data(), cout, rows);
    for (std::size_t i = 0; i < n; ++i) {
      ConstMapMat<T> gy(grad.data() + i * cout * cols, cout, cols);
      const T* xs = xi->data.data() + i * cin * h * w;
      if (bi->requires_grad) {
        auto gb = bi->grad_buffer();
        for (std::size_t c = 0; c < cout; ++c) {
          const T* r = grad.data() + (i * cout + c) * cols;
          T acc = 0;
          for (std::size_t j = 0; j < cols; ++j) acc += r[j];
          gb[c] += acc;
        }
      }
      if (wi->requires_grad) {
        const T* cm = xs;
        if (!g.pointwise()) {
          im2col(xs, g, col.data());
          cm = col.data();
        }
        MapMat<T> gw(wi->grad_buffer().data(), cout, rows);
        gw.noalias() += gy * ConstMapMat<T>(cm, rows, cols).transpose();
      }
      if (xi->requires_grad) {
        T* gx = xi->grad_buffer().data() + i * cin * h * w;
        if (g.pointwise()) {
          MapMat<T>(gx, rows, cols).noalias() += wm.transpose() * gy;
        } else {
          MapMat<T>(dcol.data(), rows, cols).noalias() = wm.transpose() * gy;
          col2im_add(dcol.data(), g, gx);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& s) {
  require_nchw(x.shape(), "batchnorm2d");
  const std::size_t n = x.size(0), c = x.size(1), plane = x.size(2) * x.size(3);
  if (c != s.channels())
    throw std::invalid_argument("batchnorm2d: input has " + std::to_string(c) +
                                " channels, state has " + std::to_string(s.channels()));
  const std::size_t m = n * plane;
  const bool train = s.mode == Mode::train;
  if (train && m < 2)
    throw std::invalid_argument("batchnorm2d: train mode needs N*H*W >= 2, got " +
                                std::to_string(m));

  const auto xs = x.data();
  const auto gamma = s.gamma.data();
  const auto beta = s.beta.data();
  std::vector<T> invstd(c), xhat(xs.size()), out(xs.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mu, var;
    if (train) {
      T acc = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < plane; ++k) acc += xs[(i * c + ch) * plane + k];
      mu = acc / T(m);
      T sq = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < plane; ++k) {
          const T d = xs[(i * c + ch) * plane + k] - mu;
          sq += d * d;
        }
      var = sq / T(m);
      auto rm = s.running_mean.mutable_data();
      auto rv = s.running_var.mutable_data();
      rm[ch] = (T(1) - s.momentum) * rm[ch] + s.momentum * mu;
      rv[ch] = (T(1) - s.momentum) * rv[ch] + s.momentum * (sq / T(m - 1));
    } else {
      mu = s.running_mean.data()[ch];
      var = s.running_var.data()[ch];
    }
    invstd[ch] = T(1) / std::sqrt(var + s.epsilon);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t idx = (i * c + ch) * plane + k;
        xhat[idx] = (xs[idx] - mu) * invstd[ch];
        out[idx] = gamma[ch] * xhat[idx] + beta[ch];
      }
  }

  auto xi = x.impl_ptr();
  auto gi = s.gamma.impl_ptr();
  auto bti = s.beta.impl_ptr();
  return detail::make_result<T>(x.shape(), std::move(out), "batchnorm2d",
                                {&x, &s.gamma, &s.beta},
                                [=, xhat = std::move(xhat), invstd = std::move(invstd)](
                                    std::span<const T> g) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sum_g = 0, sum_gx = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < plane; ++k) {
          const std::size_t idx = (i * c + ch) * plane + k;
          sum_g += g[idx];
          sum_gx += g[idx] * xhat[idx];
        }
      if (gi->requires_grad) gi->grad_buffer()[ch] += sum_gx;
      if (bti->requires_grad) bti->grad_buffer()[ch] += sum_g;
      if (!xi->requires_grad) continue;
      auto gx = xi->grad_buffer();
      const T gm = gi->data[ch];
      if (train) {
        const T scale = gm * invstd[ch] / T(m);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < plane; ++k) {
            const std::size_t idx = (i * c + ch) * plane + k;
            gx[idx] += scale * (T(m) * g[idx] - sum_g - xhat[idx] * sum_gx);
          }
      } else {
        const T scale = gm * invstd[ch];
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < plane; ++k) {
            const std::size_t idx = (i * c + ch) * plane + k;
            gx[idx] += scale * g[idx];
          }
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
  require_nchw(x.shape(), "maxpool2d");
  const std::size_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("maxpool2d: spatial extents must be even, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  const std::size_t ho = h / 2, wo = w / 2;
  const auto xs = x.data();
  std::vector<T> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = (p * h + 2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (p * h + 2 * i + di) * w + 2 * j + dj;
            if (xs[idx] > xs[best]) best = idx;
          }
        const std::size_t o = (p * ho + i) * wo + j;
        out[o] = xs[best];
        argmax[o] = best;
      }
  auto xi = x.impl_ptr();
  return detail::make_result<T>(Shape{n, c, ho, wo}, std::move(out), "maxpool2d", {&x},
                                [xi, argmax = std::move(argmax)](std::span<const T> g) {
    auto gx = xi->grad_buffer();
    for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
  });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, const ConvParams<T>& p) {
  require_nchw(x.shape(), "upsample2x");
  if (p.weight.dim() != 4 || p.weight.size(2) != 2 || p.weight.size(3) != 2 || p.stride != 2 ||
      p.padding != 0)
    throw std::invalid_argument("upsample2x: needs a [Cin,Cout,2,2] kernel, stride 2, padding 0; "
                                "got weight " + shape_str(p.weight.shape()) + ", stride " +
                                std::to_string(p.stride) + ", padding " +
                                std::to_string(p.padding));
  const std::size_t n = x.size(0), cin = x.size(1), h = x.size(2), w = x.size(3);
  if (p.weight.size(0) != cin)
    throw std::invalid_argument("upsample2x: input has " + std::to_string(cin) +
                                " channels, weight expects " + std::to_string(p.weight.size(0)));
  const std::size_t cout = p.weight.size(1);
  if (p.bias.numel() != cout)
    throw std::invalid_argument("upsample2x: bias shape " + shape_str(p.bias.shape()));
  const std::size_t hw = h * w, rows = cout * 4;

  // Y[(co*2 + a)*2 + b, i*w + j] = sum_ci W[ci, co, a, b] x[ci, i, j]
  std::vector<T> out(n * cout * 4 * hw);
  RowMat<T> y(rows, hw);
  ConstMapMat<T> wm(p.weight.data().data(), cin, rows);
  const auto bias = p.bias.data();
  for (std::size_t b = 0; b < n; ++b) {
    y.noalias() = wm.transpose() * ConstMapMat<T>(x.data().data() + b * cin * hw, cin, hw);
    T* ob = out.data() + b * cout * 4 * hw;
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t e = 0; e < 2; ++e)
              ob[(co * 2 * h + 2 * i + a) * 2 * w + 2 * j + e] =
                  y((co * 2 + a) * 2 + e, i * w + j) + bias[co];
  }

  auto xi = x.impl_ptr();
  auto wi = p.weight.impl_ptr();
  auto bi = p.bias.impl_ptr();
  return detail::make_result<T>(Shape{n, cout, 2 * h, 2 * w}, std::move(out), "upsample2x",
                                {&x, &p.weight, &p.bias}, [=](std::span<const T> g) {
    RowMat<T> gy(rows, hw);
    ConstMapMat<T> wm(wi->data.data(), cin, rows);
    for (std::size_t b = 0; b < n; ++b) {
      const T* gb = g.data() + b * cout * 4 * hw;
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            for (std::size_t a = 0; a < 2; ++a)
              for (std::size_t e = 0; e < 2; ++e)
                gy((co * 2 + a) * 2 + e, i * w + j) =
                    gb[(co * 2 * h + 2 * i + a) * 2 * w + 2 * j + e];
      if (bi->requires_grad) {
        auto gbias = bi->grad_buffer();
        for (std::size_t co = 0; co < cout; ++co) {
          const T* r = gy.data() + co * 4 * hw;
          T acc = 0;
          for (std::size_t j = 0; j < 4 * hw; ++j) acc += r[j];
          gbias[co] += acc;
        }
      }
      ConstMapMat<T> xm(xi->data.data() + b * cin * hw, cin, hw);
      if (wi->requires_grad)
        MapMat<T>(wi->grad_buffer().data(), cin, rows).noalias() += xm * gy.transpose();
      if (xi->requires_grad)
        MapMat<T>(xi->grad_buffer().data() + b * cin * hw, cin, hw).noalias() += wm * gy;
    }
  });
}

template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] < T(0) ? T(0) : xs[i];  // NaN passes through
      break;
    case Activation::silu:
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * sigmoid_scalar(xs[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = sigmoid_scalar(xs[i]);
      break;
  }
  auto xi = x.impl_ptr();
  const T relu_scale = g_corrupt_relu ? T(1.01) : T(1);
  return detail::make_result<T>(x.shape(), std::move(out), "activation", {&x},
                                [kind, xi, relu_scale](std::span<const T> g) {
    auto gx = xi->grad_buffer();
    const auto& v = xi->data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind) {
        case Activation::relu:
          if (v[i] > T(0)) gx[i] += g[i] * relu_scale;
          break;
        case Activation::silu: {
          const T s = sigmoid_scalar(v[i]);
          gx[i] += g[i] * s * (T(1) + v[i] * (T(1) - s));
          break;
        }
        case Activation::sigmoid: {
          const T s = sigmoid_scalar(v[i]);
          gx[i] += g[i] * s * (T(1) - s);
          break;
        }
      }
    }
  });
}

#define KANDU_INSTANTIATE_NN(T)                                                          \
  template struct ConvParams<T>;                                                         \
  template struct BatchNormState<T>;                                                     \
  template ConvParams<T> make_conv(std::size_t, std::size_t, std::size_t, std::size_t, Rng&); \
  template ConvParams<T> make_upsample(std::size_t, std::size_t, Rng&);                  \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);                     \
  template Tensor<T> batchnorm2d(const Tensor<T>&, BatchNormState<T>&);                  \
  template Tensor<T> maxpool2d(const Tensor<T>&);                                        \
  template Tensor<T> upsample2x(const Tensor<T>&, const ConvParams<T>&);                 \
  template Tensor<T> activation(Activation, const Tensor<T>&);

KANDU_INSTANTIATE_NN(float)
KANDU_INSTANTIATE_NN(double)

}  // namespace kandu
