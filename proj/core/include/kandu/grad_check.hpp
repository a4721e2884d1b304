#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "kandu/tensor.hpp"

namespace kandu {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;    // index into the inputs list
  std::size_t worst_element = 0;  // flat index inside that input
  double analytic = 0.0;          // values at the worst element
  double numeric = 0.0;
};

using ScalarFn = std::function<Tensor<double>()>;

/// Compares backward() against central differences for every element of
/// every tensor in `inputs`. `fn` must recompute the scalar from the current
/// values of those tensors (it normally captures them). Each input is made a
/// leaf requiring a gradient. Per-element error is
/// |a - n| / max(1e-8, |a| + |n|). A non-finite objective during the
/// numerical sweep throws std::runtime_error naming the input and element.
GradCheckResult grad_check(const ScalarFn& fn, std::vector<Tensor<double>> inputs,
                           double eps = 1e-5);

}  // namespace kandu
