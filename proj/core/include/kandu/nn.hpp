#pragma once

// Convolutional-network primitives: convolution, batch normalization,
// 2x2 max pooling, stride-2 transposed convolution and activations.

#include <cstddef>

#include "kandu/random.hpp"
#include "kandu/tensor.hpp"

namespace kandu {

enum class Mode { train, eval };

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [Cout, Cin, k, k]; transposed conv: [Cin, Cout, 2, 2]
  Tensor<T> bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const;
  std::size_t in_channels() const;
  std::size_t kernel() const { return weight.size(2); }
};

/// He-uniform weights, zero bias.
template <typename T>
ConvParams<T> make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t padding,
                        Rng& rng);
/// Weights for upsample2x ([Cin, Cout, 2, 2], stride 2).
template <typename T>
ConvParams<T> make_upsample(std::size_t in, std::size_t out, Rng& rng);

template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);
  Mode mode = Mode::train;

  explicit BatchNormState(std::size_t channels = 0);
  std::size_t channels() const { return gamma.numel(); }
};

/// Cross-correlation plus per-channel bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p);

/// Train mode normalizes by batch statistics over N,H,W and updates the
/// running statistics (new = (1 - m) old + m batch, unbiased batch variance);
/// eval mode uses the running statistics and leaves them untouched.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& s);

/// 2x2 window, stride 2. Gradient goes to the first maximum in row-major
/// window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x);

/// Transposed convolution with a 2x2 kernel and stride 2.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, const ConvParams<T>& p);

enum class Activation { relu, silu, sigmoid };

template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x);

template <typename T>
Tensor<T> relu(const Tensor<T>& x) { return activation(Activation::relu, x); }
template <typename T>
Tensor<T> silu(const Tensor<T>& x) { return activation(Activation::silu, x); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) { return activation(Activation::sigmoid, x); }

namespace testing {
/// Fault injection for the gradient-check tooling: when set, the relu
/// backward rule is scaled by 1.01. Never enabled in normal operation.
void set_corrupt_relu_backward(bool on);
bool corrupt_relu_backward();
}  // namespace testing

}  // namespace kandu
