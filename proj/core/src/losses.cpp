#include "kandu/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kandu/ops.hpp"

namespace kandu {

namespace {
void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
}
}  // namespace

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same(pred.shape(), target.shape(), "bce_loss");
  const auto p = pred.data();
  const auto t = target.data();
  const T lo = T(kBceClamp), hi = T(1) - T(kBceClamp);
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T pc = std::clamp(p[i], lo, hi);
    acc -= t[i] * std::log(pc) + (T(1) - t[i]) * std::log(T(1) - pc);
  }
  const T count = T(p.size());
  auto pi = pred.impl_ptr();
  auto ti = target.impl_ptr();
  return detail::make_result<T>(Shape{}, {acc / count}, "bce_loss", {&pred, &target},
                                [pi, ti, lo, hi, count](std::span<const T> g) {
    const auto& p = pi->data;
    const auto& t = ti->data;
    if (pi->requires_grad) {
      auto gp = pi->grad_buffer();
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < lo || p[i] > hi) continue;
        gp[i] += g[0] * (-t[i] / p[i] + (T(1) - t[i]) / (T(1) - p[i])) / count;
      }
    }
    if (ti->requires_grad) {
      auto gt = ti->grad_buffer();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T pc = std::clamp(p[i], lo, hi);
        gt[i] += g[0] * (std::log(T(1) - pc) - std::log(pc)) / count;
      }
    }
  });
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same(pred.shape(), target.shape(), "dice_loss");
  const std::size_t batch = pred.dim() == 0 ? 1 : pred.size(0);
  if (batch == 0) throw std::invalid_argument("dice_loss: empty batch");
  const std::size_t per = pred.numel() / batch;
  const auto p = pred.data();
  const auto t = target.data();
  const T s = T(kDiceSmooth);
  std::vector<T> inter(batch, 0), denom(batch, 0);
  T acc = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    T i_sum = 0, p_sum = 0, t_sum = 0;
    for (std::size_t k = n * per; k < (n + 1) * per; ++k) {
      i_sum += p[k] * t[k];
      p_sum += p[k];
      t_sum += t[k];
    }
    inter[n] = i_sum;
    denom[n] = p_sum + t_sum + s;
    acc += T(1) - (T(2) * i_sum + s) / denom[n];
  }
  auto pi = pred.impl_ptr();
  auto ti = target.impl_ptr();
  return detail::make_result<T>(
      Shape{}, {acc / T(batch)}, "dice_loss", {&pred, &target},
      [=, inter = std::move(inter), denom = std::move(denom)](std::span<const T> g) {
        const auto& p = pi->data;
        const auto& t = ti->data;
        const T scale = g[0] / T(batch);
        for (std::size_t n = 0; n < batch; ++n) {
          const T num = T(2) * inter[n] + s;
          const T d2 = denom[n] * denom[n];
          for (std::size_t k = n * per; k < (n + 1) * per; ++k) {
            if (pi->requires_grad)
              pi->grad_buffer()[k] -= scale * (T(2) * t[k] * denom[n] - num) / d2;
            if (ti->requires_grad)
              ti->grad_buffer()[k] -= scale * (T(2) * p[k] * denom[n] - num) / d2;
          }
        }
      });
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& target, double aux_weight) {
  return add(bce_loss(pred, target), dice_loss(pred, target) * T(aux_weight));
}

#define KANDU_INSTANTIATE_LOSSES(T)                                        \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, double);

KANDU_INSTANTIATE_LOSSES(float)
KANDU_INSTANTIATE_LOSSES(double)

}  // namespace kandu
