#pragma once

// Kolmogorov-Arnold layers: every (input, output) edge carries its own
// learnable univariate function
//
//   phi_ji(v) = base_weight[j,i] * silu(v) + spline_scale[j,i] * sum_m c[j,i,m] B_m(v)
//
// with B_m the B-spline basis of a fixed uniform grid. Outputs are sums of
// edge functions over the inputs. pixelwise_kan applies one shared layer to
// the channel vector of every pixel of an N,C,H,W tensor.

#include <cstddef>
#include <span>
#include <vector>

#include "kandu/random.hpp"
#include "kandu/tensor.hpp"

namespace kandu {

struct BSplineGrid {
  std::size_t degree = 3;
  std::size_t intervals = 5;
  double lo = -2.0;
  double hi = 2.0;
  /// intervals + 2*degree + 1 uniform knots; the domain [lo, hi] is the span
  /// from knots[degree] to knots[degree + intervals].
  std::vector<double> knots;

  static BSplineGrid uniform(std::size_t degree, std::size_t intervals, double lo, double hi);
  std::size_t basis_count() const { return intervals + degree; }
};

/// Cox-de Boor values of all basis functions at x. Degree-0 pieces are
/// half-open [t_j, t_{j+1}), so a point past the outermost knots gets zeros.
std::vector<double> bspline_basis(double x, const BSplineGrid& grid);

/// Values and first derivatives, written into spans of basis_count() length.
template <typename T>
void bspline_basis(T x, const BSplineGrid& grid, std::span<T> values, std::span<T> derivs);

template <typename T>
struct KanLayer {
  BSplineGrid grid;
  Tensor<T> spline_coeffs;  // [out, in, basis_count]
  Tensor<T> base_weight;    // [out, in]
  Tensor<T> spline_scale;   // [out, in]

  std::size_t in_dim() const { return base_weight.size(1); }
  std::size_t out_dim() const { return base_weight.size(0); }
};

/// Coefficients uniform in +-0.1/basis_count; base weights and spline scales
/// uniform in +-1/sqrt(in).
template <typename T>
KanLayer<T> make_kan_layer(std::size_t in, std::size_t out, Rng& rng,
                           BSplineGrid grid = BSplineGrid::uniform(3, 5, -2.0, 2.0));

/// Layer applied to one vector of length in_dim.
template <typename T>
Tensor<T> kan_layer_forward(const Tensor<T>& v, const KanLayer<T>& layer);

/// Layer applied independently to each pixel's channel vector:
/// [N, C, H, W] -> [N, C1, H, W].
template <typename T>
Tensor<T> pixelwise_kan(const Tensor<T>& x, const KanLayer<T>& layer);

}  // namespace kandu
