#pragma once

#include "kandu/tensor.hpp"

namespace kandu {

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
/// Clamped elements receive no gradient.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// 1 - (2 sum(p t) + 1) / (sum p + sum t + 1) per image (axis 0 is the
/// batch), averaged over the batch.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// bce + aux_weight * dice, both on the same prediction.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& target, double aux_weight);

}  // namespace kandu
