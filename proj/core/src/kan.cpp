#include "kandu/kan.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kandu {

BSplineGrid BSplineGrid::uniform(std::size_t degree, std::size_t intervals, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("BSplineGrid: lo must be below hi");
  if (intervals == 0) throw std::invalid_argument("BSplineGrid: need at least one interval");
  BSplineGrid g;
  g.degree = degree;
  g.intervals = intervals;
  g.lo = lo;
  g.hi = hi;
  const double h = (hi - lo) / double(intervals);
  const std::size_t count = intervals + 2 * degree + 1;
  g.knots.resize(count);
  for (std::size_t j = 0; j < count; ++j)
    g.knots[j] = lo + (double(j) - double(degree)) * h;
  g.knots[degree] = lo;
  g.knots[degree + intervals] = hi;
  return g;
}

namespace {

// Scratch-holding evaluator so per-pixel calls do not allocate.
template <typename T>
class BasisEvaluator {
 public:
  explicit BasisEvaluator(const BSplineGrid& grid)
      : k_(grid.degree), t_(grid.knots.begin(), grid.knots.end()),
        work_(t_.size()), lower_(t_.size()) {
    if (t_.size() != grid.intervals + 2 * grid.degree + 1)
      throw std::invalid_argument("BSplineGrid: knot vector size does not match degree/intervals");
  }

  std::size_t count() const { return t_.size() - 1 - k_; }

  void eval(T x, T* values, T* derivs) {
    const std::size_t pieces = t_.size() - 1;
    for (std::size_t j = 0; j < pieces; ++j)
      work_[j] = (x >= t_[j] && x < t_[j + 1]) ? T(1) : T(0);
    for (std::size_t d = 1; d <= k_; ++d) {
      if (d == k_)
        for (std::size_t j = 0; j < pieces - d + 1; ++j) lower_[j] = work_[j];
      for (std::size_t j = 0; j + d < pieces; ++j) {
        const T left = (x - t_[j]) / (t_[j + d] - t_[j]);
        const T right = (t_[j + d + 1] - x) / (t_[j + d + 1] - t_[j + 1]);
        work_[j] = left * work_[j] + right * work_[j + 1];
      }
    }
    const std::size_t n = count();
    for (std::size_t m = 0; m < n; ++m) values[m] = work_[m];
    if (!derivs) return;
    if (k_ == 0) {
      for (std::size_t m = 0; m < n; ++m) derivs[m] = T(0);
      return;
    }
    const T kk = T(k_);
    for (std::size_t m = 0; m < n; ++m)
      derivs[m] = kk * (lower_[m] / (t_[m + k_] - t_[m]) -
                        lower_[m + 1] / (t_[m + k_ + 1] - t_[m + 1]));
  }

 private:
  std::size_t k_;
  std::vector<T> t_;
  std::vector<T> work_;
  std::vector<T> lower_;  // degree k-1 values
};

template <typename T>
T sigmoid_of(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
void check_layer(const KanLayer<T>& layer) {
  const std::size_t nb = layer.grid.basis_count();
  const Shape expect{layer.out_dim(), layer.in_dim(), nb};
  if (layer.spline_coeffs.shape() != expect || layer.spline_scale.shape() != layer.base_weight.shape())
    throw std::invalid_argument("KanLayer: coefficient shape " +
                                shape_str(layer.spline_coeffs.shape()) + " inconsistent with " +
                                shape_str(expect));
}

// x laid out as [batch, C, P]; result [batch, C1, P].
template <typename T>
Tensor<T> kan_apply(const Tensor<T>& x, const KanLayer<T>& layer, std::size_t batch,
                    std::size_t pixels, Shape out_shape) {
  check_layer(layer);
  const std::size_t c = layer.in_dim(), c1 = layer.out_dim(), nb = layer.grid.basis_count();
  const auto xs = x.data();
  const auto coeff = layer.spline_coeffs.data();
  const auto bw = layer.base_weight.data();
  const auto sc = layer.spline_scale.data();

  BasisEvaluator<T> basis(layer.grid);
  std::vector<T> b(nb);
  std::vector<T> out(batch * c1 * pixels, T(0));
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t p = 0; p < pixels; ++p) {
        const T v = xs[(n * c + i) * pixels + p];
        basis.eval(v, b.data(), nullptr);
        const T act = v * sigmoid_of(v);
        for (std::size_t j = 0; j < c1; ++j) {
          const T* cj = coeff.data() + (j * c + i) * nb;
          T s = 0;
          for (std::size_t m = 0; m < nb; ++m) s += cj[m] * b[m];
          out[(n * c1 + j) * pixels + p] += bw[j * c + i] * act + sc[j * c + i] * s;
        }
      }

  auto xi = x.impl_ptr();
  auto ci = layer.spline_coeffs.impl_ptr();
  auto bi = layer.base_weight.impl_ptr();
  auto si = layer.spline_scale.impl_ptr();
  const BSplineGrid grid = layer.grid;
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), "kan", {&x, &layer.spline_coeffs, &layer.base_weight,
                                                    &layer.spline_scale},
      [=](std::span<const T> g) {
        BasisEvaluator<T> basis(grid);
        std::vector<T> b(nb), db(nb);
        const auto& xs = xi->data;
        const auto& coeff = ci->data;
        const auto& bw = bi->data;
        const auto& sc = si->data;
        T* gc = ci->requires_grad ? ci->grad_buffer().data() : nullptr;
        T* gb = bi->requires_grad ? bi->grad_buffer().data() : nullptr;
        T* gs = si->requires_grad ? si->grad_buffer().data() : nullptr;
        T* gx = xi->requires_grad ? xi->grad_buffer().data() : nullptr;
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t i = 0; i < c; ++i)
            for (std::size_t p = 0; p < pixels; ++p) {
              const T v = xs[(n * c + i) * pixels + p];
              basis.eval(v, b.data(), db.data());
              const T sg = sigmoid_of(v);
              const T act = v * sg;
              const T dact = sg * (T(1) + v * (T(1) - sg));
              T gv = 0;
              for (std::size_t j = 0; j < c1; ++j) {
                const T go = g[(n * c1 + j) * pixels + p];
                if (go == T(0)) continue;
                const std::size_t e = j * c + i;
                const T* cj = coeff.data() + e * nb;
                T s = 0, ds = 0;
                for (std::size_t m = 0; m < nb; ++m) {
                  s += cj[m] * b[m];
                  ds += cj[m] * db[m];
                }
                if (gb) gb[e] += go * act;
                if (gs) gs[e] += go * s;
                if (gc) {
                  const T w = go * sc[e];
                  for (std::size_t m = 0; m < nb; ++m) gc[e * nb + m] += w * b[m];
                }
                gv += go * (bw[e] * dact + sc[e] * ds);
              }
              if (gx) gx[(n * c + i) * pixels + p] += gv;
            }
      });
}

}  // namespace

std::vector<double> bspline_basis(double x, const BSplineGrid& grid) {
  BasisEvaluator<double> basis(grid);
  std::vector<double> out(basis.count());
  basis.eval(x, out.data(), nullptr);
  return out;
}

template <typename T>
void bspline_basis(T x, const BSplineGrid& grid, std::span<T> values, std::span<T> derivs) {
  BasisEvaluator<T> basis(grid);
  if (values.size() != basis.count() || (!derivs.empty() && derivs.size() != basis.count()))
    throw std::invalid_argument("bspline_basis: output spans must have basis_count() entries");
  basis.eval(x, values.data(), derivs.empty() ? nullptr : derivs.data());
}

template <typename T>
KanLayer<T> make_kan_layer(std::size_t in, std::size_t out, Rng& rng, BSplineGrid grid) {
  KanLayer<T> layer;
  const std::size_t nb = grid.basis_count();
  layer.grid = std::move(grid);
  layer.spline_coeffs = Tensor<T>(Shape{out, in, nb});
  layer.base_weight = Tensor<T>(Shape{out, in});
  layer.spline_scale = Tensor<T>(Shape{out, in});
  const double cbound = 0.1 / double(nb);
  const double fbound = 1.0 / std::sqrt(double(in));
  for (auto& v : layer.spline_coeffs.mutable_data()) v = T(rng.uniform(-cbound, cbound));
  for (auto& v : layer.base_weight.mutable_data()) v = T(rng.uniform(-fbound, fbound));
  for (auto& v : layer.spline_scale.mutable_data()) v = T(rng.uniform(-fbound, fbound));
  layer.spline_coeffs.set_requires_grad(true);
  layer.base_weight.set_requires_grad(true);
  layer.spline_scale.set_requires_grad(true);
  return layer;
}

template <typename T>
Tensor<T> kan_layer_forward(const Tensor<T>& v, const KanLayer<T>& layer) {
  if (v.dim() != 1 || v.numel() != layer.in_dim())
    throw std::invalid_argument("kan_layer_forward: expected vector of length " +
                                std::to_string(layer.in_dim()) + ", got shape " +
                                shape_str(v.shape()));
  return kan_apply(v, layer, 1, 1, Shape{layer.out_dim()});
}

template <typename T>
Tensor<T> pixelwise_kan(const Tensor<T>& x, const KanLayer<T>& layer) {
  if (x.dim() != 4)
    throw std::invalid_argument("pixelwise_kan: expected N,C,H,W input, got " +
                                shape_str(x.shape()));
  if (x.size(1) != layer.in_dim())
    throw std::invalid_argument("pixelwise_kan: input has " + std::to_string(x.size(1)) +
                                " channels, layer expects " + std::to_string(layer.in_dim()));
  return kan_apply(x, layer, x.size(0), x.size(2) * x.size(3),
                   Shape{x.size(0), layer.out_dim(), x.size(2), x.size(3)});
}

#define KANDU_INSTANTIATE_KAN(T)                                                      \
  template struct KanLayer<T>;                                                        \
  template void bspline_basis(T, const BSplineGrid&, std::span<T>, std::span<T>);     \
  template KanLayer<T> make_kan_layer(std::size_t, std::size_t, Rng&, BSplineGrid);   \
  template Tensor<T> kan_layer_forward(const Tensor<T>&, const KanLayer<T>&);         \
  template Tensor<T> pixelwise_kan(const Tensor<T>&, const KanLayer<T>&);

KANDU_INSTANTIATE_KAN(float)
KANDU_INSTANTIATE_KAN(double)

}  // namespace kandu
