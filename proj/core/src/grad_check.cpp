#include "kandu/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kandu {

GradCheckResult grad_check(const ScalarFn& fn, std::vector<Tensor<double>> inputs, double eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tensor<double> loss = fn();
    if (loss.numel() != 1)
      throw std::invalid_argument("grad_check: objective must be scalar, got " +
                                  shape_str(loss.shape()));
    backward(loss);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    std::vector<double> analytic = t.has_grad()
                                       ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = fn().item();
      values[i] = saved - eps;
      const double minus = fn().item();
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw std::runtime_error("grad_check: non-finite objective when perturbing input " +
                                 std::to_string(k) + " element " + std::to_string(i));
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      if (err > result.max_relative_error) {
        result = {err, k, i, analytic[i], numeric};
      }
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return result;
}

}  // namespace kandu
