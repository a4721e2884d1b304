#pragma once

// Elementwise arithmetic, channel concatenation and reductions.
// Broadcasting is limited to tensor-vs-scalar.

#include <type_traits>
#include <vector>

#include "kandu/tensor.hpp"

namespace kandu {

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { neg, exp, log, square, sqrt };
enum class ReduceOp { sum, mean };

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, std::type_identity_t<T> b);
template <typename T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::div, a, b); }

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, std::type_identity_t<T> b) { return elementwise(BinaryOp::add, a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, std::type_identity_t<T> b) { return elementwise(BinaryOp::sub, a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, std::type_identity_t<T> b) { return elementwise(BinaryOp::mul, a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, std::type_identity_t<T> b) { return elementwise(BinaryOp::div, a, b); }

/// Joins two N,C,H,W tensors along the channel axis: a's channels first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, begin + count) of an N,C,H,W tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

/// Reduces over `axes` (removed from the result shape). Empty `axes` reduces
/// everything to a scalar.
template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& a, const std::vector<std::size_t>& axes = {});

template <typename T>
Tensor<T> sum(const Tensor<T>& a, const std::vector<std::size_t>& axes = {}) {
  return reduce(ReduceOp::sum, a, axes);
}
template <typename T>
Tensor<T> mean(const Tensor<T>& a, const std::vector<std::size_t>& axes = {}) {
  return reduce(ReduceOp::mean, a, axes);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

}  // namespace kandu
