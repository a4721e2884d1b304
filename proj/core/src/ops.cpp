#include "kandu/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kandu {

namespace {

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

template <typename T>
T apply(BinaryOp op, T a, T b) {
  switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    case BinaryOp::div: return a / b;
  }
  return T(0);
}

void check_nchw(const Shape& s, const char* what) {
  if (s.size() != 4)
    throw std::invalid_argument(std::string(what) + ": expected N,C,H,W tensor, got " + shape_str(s));
}

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(binary_name(op)) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto x = a.data();
  const auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, x[i], y[i]);

  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  return detail::make_result<T>(a.shape(), std::move(out), binary_name(op), {&a, &b},
                                [op, ai, bi](std::span<const T> g) {
    const auto& xa = ai->data;
    const auto& xb = bi->data;
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case BinaryOp::add:
          case BinaryOp::sub: ga[i] += g[i]; break;
          case BinaryOp::mul: ga[i] += g[i] * xb[i]; break;
          case BinaryOp::div: ga[i] += g[i] / xb[i]; break;
        }
      }
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case BinaryOp::add: gb[i] += g[i]; break;
          case BinaryOp::sub: gb[i] -= g[i]; break;
          case BinaryOp::mul: gb[i] += g[i] * xa[i]; break;
          case BinaryOp::div: gb[i] -= g[i] * xa[i] / (xb[i] * xb[i]); break;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, std::type_identity_t<T> b) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, x[i], b);
  auto ai = a.impl_ptr();
  return detail::make_result<T>(a.shape(), std::move(out), binary_name(op), {&a},
                                [op, ai, b](std::span<const T> g) {
    auto ga = ai->grad_buffer();
    const T scale = (op == BinaryOp::mul) ? b : (op == BinaryOp::div ? T(1) / b : T(1));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * scale;
  });
}

template <typename T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& a) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case UnaryOp::neg: out[i] = -x[i]; break;
      case UnaryOp::exp: out[i] = std::exp(x[i]); break;
      case UnaryOp::log: out[i] = std::log(x[i]); break;
      case UnaryOp::square: out[i] = x[i] * x[i]; break;
      case UnaryOp::sqrt: out[i] = std::sqrt(x[i]); break;
    }
  }
  auto ai = a.impl_ptr();
  auto result = detail::make_result<T>(a.shape(), std::move(out), "unary", {&a}, nullptr);
  if (result.requires_grad()) {
    // The rule needs the output values, which live in the result itself;
    // copy them rather than capture the result (that would form a cycle).
    std::vector<T> y(result.data().begin(), result.data().end());
    result.impl_ptr()->node->backward = [op, ai, y = std::move(y)](std::span<const T> g) {
      auto ga = ai->grad_buffer();
      const auto& xs = ai->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case UnaryOp::neg: ga[i] -= g[i]; break;
          case UnaryOp::exp: ga[i] += g[i] * y[i]; break;
          case UnaryOp::log: ga[i] += g[i] / xs[i]; break;
          case UnaryOp::square: ga[i] += g[i] * T(2) * xs[i]; break;
          case UnaryOp::sqrt: ga[i] += g[i] / (T(2) * y[i]); break;
        }
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check_nchw(a.shape(), "concat_channels");
  check_nchw(b.shape(), "concat_channels");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::invalid_argument("concat_channels: batch/spatial mismatch " + shape_str(sa) +
                                " vs " + shape_str(sb));
  const std::size_t n = sa[0], ca = sa[1], cb = sb[1], plane = sa[2] * sa[3];
  std::vector<T> out(n * (ca + cb) * plane);
  const auto xa = a.data();
  const auto xb = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(xa.begin() + i * ca * plane, ca * plane, out.begin() + i * (ca + cb) * plane);
    std::copy_n(xb.begin() + i * cb * plane, cb * plane,
                out.begin() + (i * (ca + cb) + ca) * plane);
  }
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  return detail::make_result<T>(Shape{n, ca + cb, sa[2], sa[3]}, std::move(out), "concat_channels",
                                {&a, &b}, [=](std::span<const T> g) {
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = g.data() + i * (ca + cb) * plane;
      if (ai->requires_grad) {
        T* dst = ai->grad_buffer().data() + i * ca * plane;
        for (std::size_t k = 0; k < ca * plane; ++k) dst[k] += src[k];
      }
      if (bi->requires_grad) {
        T* dst = bi->grad_buffer().data() + i * cb * plane;
        for (std::size_t k = 0; k < cb * plane; ++k) dst[k] += src[ca * plane + k];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  check_nchw(x.shape(), "slice_channels");
  const auto& s = x.shape();
  if (begin + count > s[1])
    throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + "," +
                                std::to_string(begin + count) + ") outside " + shape_str(s));
  const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
  std::vector<T> out(n * count * plane);
  const auto src = x.data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(src.begin() + (i * c + begin) * plane, count * plane,
                out.begin() + i * count * plane);
  auto xi = x.impl_ptr();
  return detail::make_result<T>(Shape{n, count, s[2], s[3]}, std::move(out), "slice_channels", {&x},
                                [=](std::span<const T> g) {
    auto gx = xi->grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < count * plane; ++k)
        gx[(i * c + begin) * plane + k] += g[i * count * plane + k];
  });
}

template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  std::vector<bool> reduced(s.size(), axes.empty());
  for (auto ax : axes) {
    if (ax >= s.size())
      throw std::invalid_argument("reduce: axis " + std::to_string(ax) + " invalid for shape " +
                                  shape_str(s));
    if (reduced[ax])
      throw std::invalid_argument("reduce: axis " + std::to_string(ax) + " given twice");
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t reduced_count = 1;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (reduced[d]) reduced_count *= s[d];
    else out_shape.push_back(s[d]);
  }

  // Row-major strides of the output, placed on the input's axes (0 when reduced).
  std::vector<std::size_t> out_stride(s.size(), 0);
  {
    std::size_t stride = 1;
    for (std::size_t d = s.size(); d-- > 0;) {
      if (!reduced[d]) {
        out_stride[d] = stride;
        stride *= s[d];
      }
    }
  }
  const std::size_t total = a.numel();
  std::vector<std::size_t> map(total);
  {
    std::vector<std::size_t> idx(s.size(), 0);
    for (std::size_t i = 0; i < total; ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < s.size(); ++d) o += idx[d] * out_stride[d];
      map[i] = o;
      for (std::size_t d = s.size(); d-- > 0;) {
        if (++idx[d] < s[d]) break;
        idx[d] = 0;
      }
    }
  }

  std::vector<T> out(shape_numel(out_shape), T(0));
  const auto x = a.data();
  for (std::size_t i = 0; i < total; ++i) out[map[i]] += x[i];
  const T scale = (op == ReduceOp::mean && reduced_count > 0) ? T(1) / T(reduced_count) : T(1);
  if (op == ReduceOp::mean)
    for (auto& v : out) v *= scale;

  auto ai = a.impl_ptr();
  return detail::make_result<T>(std::move(out_shape), std::move(out), "reduce", {&a},
                                [ai, map = std::move(map), scale](std::span<const T> g) {
    auto ga = ai->grad_buffer();
    for (std::size_t i = 0; i < map.size(); ++i) ga[i] += g[map[i]] * scale;
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  auto ai = a.impl_ptr();
  return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {&a},
                                [ai](std::span<const T> g) {
    auto ga = ai->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

#define KANDU_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, std::type_identity_t<T>);  \
  template Tensor<T> unary(UnaryOp, const Tensor<T>&);                                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> reduce(ReduceOp, const Tensor<T>&, const std::vector<std::size_t>&); \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

KANDU_INSTANTIATE_OPS(float)
KANDU_INSTANTIATE_OPS(double)

}  // namespace kandu
