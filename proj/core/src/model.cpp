#include "kandu/model.hpp"

#include <stdexcept>
#include <string>

#include "kandu/ops.hpp"

namespace kandu {

void ModelConfig::validate() const {
  if (widths.size() < 2)
    throw std::invalid_argument("model config: need at least 2 encoder stages, got " +
                                std::to_string(widths.size()));
  if (in_channels == 0 || out_channels == 0 || bottleneck == 0)
    throw std::invalid_argument("model config: channel counts must be positive");
  for (auto w : widths)
    if (w == 0) throw std::invalid_argument("model config: stage widths must be positive");
}

template <typename T>
FusionBlock<T> make_fusion_block(std::size_t ca, std::size_t cb, std::size_t cout, Rng& rng) {
  FusionBlock<T> f;
  f.conv3 = make_conv<T>(ca + cb, cout, 3, 1, rng);
  f.bn1 = BatchNormState<T>(cout);
  f.conv1 = make_conv<T>(cout, cout, 1, 0, rng);
  f.bn2 = BatchNormState<T>(cout);
  return f;
}

template <typename T>
DualChannelBlock<T> make_dual_block(std::size_t cin, std::size_t cout, Rng& rng) {
  DualChannelBlock<T> b;
  b.conv.conv_a = make_conv<T>(cin, cout, 3, 1, rng);
  b.conv.bn_a = BatchNormState<T>(cout);
  b.conv.conv_b = make_conv<T>(cout, cout, 3, 1, rng);
  b.conv.bn_b = BatchNormState<T>(cout);
  b.kan.bn_in = BatchNormState<T>(cin);
  b.kan.layer = make_kan_layer<T>(cin, cout, rng);
  b.kan.bn_out = BatchNormState<T>(cout);
  b.fusion = make_fusion_block<T>(cout, cout, cout, rng);
  return b;
}

template <typename T>
Tensor<T> fusion_forward(const Tensor<T>& x1, const Tensor<T>& x2, FusionBlock<T>& f) {
  if (x1.dim() != 4 || x2.dim() != 4 || x1.size(0) != x2.size(0) || x1.size(2) != x2.size(2) ||
      x1.size(3) != x2.size(3))
    throw std::invalid_argument("fusion_forward: incompatible inputs " + shape_str(x1.shape()) +
                                " and " + shape_str(x2.shape()));
  if (x1.size(1) + x2.size(1) != f.conv3.in_channels())
    throw std::invalid_argument("fusion_forward: " + std::to_string(x1.size(1)) + "+" +
                                std::to_string(x2.size(1)) + " channels, block expects " +
                                std::to_string(f.conv3.in_channels()));
  auto x = concat_channels(x1, x2);
  x = batchnorm2d(conv2d(x, f.conv3), f.bn1);
  x = batchnorm2d(conv2d(x, f.conv1), f.bn2);
  return relu(x);
}

template <typename T>
Tensor<T> conv_path_forward(const Tensor<T>& x, ConvPath<T>& p) {
  auto h = relu(batchnorm2d(conv2d(x, p.conv_a), p.bn_a));
  return relu(batchnorm2d(conv2d(h, p.conv_b), p.bn_b));
}

template <typename T>
Tensor<T> kan_path_forward(const Tensor<T>& x, KanPath<T>& p) {
  return batchnorm2d(pixelwise_kan(batchnorm2d(x, p.bn_in), p.layer), p.bn_out);
}

template <typename T>
Tensor<T> dual_block_forward(const Tensor<T>& x, DualChannelBlock<T>& b) {
  if (x.dim() != 4 || x.size(1) != b.in_channels())
    throw std::invalid_argument("dual_block_forward: input " + shape_str(x.shape()) +
                                " for a block with " + std::to_string(b.in_channels()) +
                                " input channels");
  auto conv = conv_path_forward(x, b.conv);
  auto kan = kan_path_forward(x, b.kan);
  if (conv.shape() != kan.shape())
    throw std::logic_error("dual_block_forward: conv path " + shape_str(conv.shape()) +
                           " and KAN path " + shape_str(kan.shape()) + " disagree");
  return fusion_forward(conv, kan, b.fusion);
}

template <typename T>
KanduNet<T>::KanduNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const std::size_t stages = cfg_.stages();
  std::size_t cin = cfg_.in_channels;
  for (std::size_t s = 0; s < stages; ++s) {
    encoder_.push_back(make_dual_block<T>(cin, cfg_.widths[s], rng));
    cin = cfg_.widths[s];
  }
  bottleneck_ = make_dual_block<T>(cin, cfg_.bottleneck, rng);
  up_.resize(stages);
  decoder_.resize(stages);
  for (std::size_t s = stages; s-- > 0;) {
    const std::size_t from = (s + 1 == stages) ? cfg_.bottleneck : cfg_.widths[s + 1];
    up_[s] = make_upsample<T>(from, cfg_.widths[s], rng);
    decoder_[s] = make_dual_block<T>(2 * cfg_.widths[s], cfg_.widths[s], rng);
  }
  head_ = make_conv<T>(cfg_.widths[0], cfg_.out_channels, 1, 0, rng);
}

template <typename T>
Tensor<T> KanduNet<T>::forward(const Tensor<T>& x, const ForwardOptions& opts) {
  if (x.dim() != 4 || x.size(1) != cfg_.in_channels)
    throw std::invalid_argument("model forward: expected [N," + std::to_string(cfg_.in_channels) +
                                ",H,W] input, got " + shape_str(x.shape()));
  const std::size_t multiple = cfg_.spatial_multiple();
  if (x.size(2) % multiple != 0 || x.size(3) % multiple != 0)
    throw std::invalid_argument("model forward: H and W must be multiples of " +
                                std::to_string(multiple) + ", got " + std::to_string(x.size(2)) +
                                "x" + std::to_string(x.size(3)));
  const std::size_t stages = cfg_.stages();
  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (std::size_t s = 0; s < stages; ++s) {
    h = dual_block_forward(h, encoder_[s]);
    if (opts.feature_shapes) opts.feature_shapes->push_back(h.shape());
    skips.push_back(opts.zero_skip == s ? Tensor<T>(h.shape()) : h);
    h = maxpool2d(h);
  }
  h = dual_block_forward(h, bottleneck_);
  if (opts.feature_shapes) opts.feature_shapes->push_back(h.shape());
  for (std::size_t s = stages; s-- > 0;) {
    h = upsample2x(h, up_[s]);
    h = dual_block_forward(concat_channels(skips[s], h), decoder_[s]);
  }
  return sigmoid(conv2d(h, head_));
}

template <typename T>
void KanduNet<T>::set_mode(Mode mode) {
  mode_ = mode;
  visit([mode](const std::string&, Tensor<T>*, BatchNormState<T>* bn, bool) {
    if (bn) bn->mode = mode;
  });
}

// fn(name, param-or-null, batchnorm-or-null, is_aux). Batch norms are visited
// once (with a null tensor) after their gamma/beta.
template <typename T>
template <typename Fn>
void KanduNet<T>::visit(Fn&& fn) {
  auto conv = [&](const std::string& name, ConvParams<T>& c, bool aux) {
    fn(name + ".weight", &c.weight, nullptr, aux);
    fn(name + ".bias", &c.bias, nullptr, aux);
  };
  auto bn = [&](const std::string& name, BatchNormState<T>& b, bool aux) {
    fn(name + ".gamma", &b.gamma, nullptr, aux);
    fn(name + ".beta", &b.beta, nullptr, aux);
    fn(name, nullptr, &b, aux);
  };
  auto block = [&](const std::string& name, DualChannelBlock<T>& b) {
    conv(name + ".conv.conv_a", b.conv.conv_a, false);
    bn(name + ".conv.bn_a", b.conv.bn_a, false);
    conv(name + ".conv.conv_b", b.conv.conv_b, false);
    bn(name + ".conv.bn_b", b.conv.bn_b, false);
    bn(name + ".kan.bn_in", b.kan.bn_in, false);
    fn(name + ".kan.layer.spline_coeffs", &b.kan.layer.spline_coeffs, nullptr, false);
    fn(name + ".kan.layer.base_weight", &b.kan.layer.base_weight, nullptr, false);
    fn(name + ".kan.layer.spline_scale", &b.kan.layer.spline_scale, nullptr, false);
    bn(name + ".kan.bn_out", b.kan.bn_out, false);
    conv(name + ".fusion.conv3", b.fusion.conv3, true);
    bn(name + ".fusion.bn1", b.fusion.bn1, true);
    conv(name + ".fusion.conv1", b.fusion.conv1, true);
    bn(name + ".fusion.bn2", b.fusion.bn2, true);
  };
  for (std::size_t s = 0; s < encoder_.size(); ++s) block("enc" + std::to_string(s), encoder_[s]);
  block("bottleneck", bottleneck_);
  for (std::size_t s = decoder_.size(); s-- > 0;) {
    conv("up" + std::to_string(s), up_[s], false);
    block("dec" + std::to_string(s), decoder_[s]);
  }
  conv("head", head_, false);
}

template <typename T>
std::vector<NamedTensor<T>> KanduNet<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, Tensor<T>* t, BatchNormState<T>*, bool) {
    if (t) out.push_back({name, *t});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> KanduNet<T>::aux_parameters() {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, Tensor<T>* t, BatchNormState<T>*, bool aux) {
    if (t && aux) out.push_back({name, *t});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> KanduNet<T>::main_parameters() {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, Tensor<T>* t, BatchNormState<T>*, bool aux) {
    if (t && !aux) out.push_back({name, *t});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> KanduNet<T>::buffers() {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, Tensor<T>*, BatchNormState<T>* bn, bool) {
    if (!bn) return;
    out.push_back({name + ".running_mean", bn->running_mean});
    out.push_back({name + ".running_var", bn->running_var});
  });
  return out;
}

template <typename T>
std::size_t KanduNet<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
KanduNet<T> build_model(const ModelConfig& cfg) {
  KanduNet<T> model(cfg);
  const std::size_t side = cfg.spatial_multiple();
  {
    NoGradGuard no_grad;
    model.set_mode(Mode::eval);
    model.forward(Tensor<T>(Shape{1, cfg.in_channels, side, side}));
    model.set_mode(Mode::train);
  }
  return model;
}

template <typename T>
Tensor<T> model_forward(KanduNet<T>& m, const Tensor<T>& x, Mode mode) {
  if (m.mode() != mode) m.set_mode(mode);
  return m.forward(x);
}

#define KANDU_INSTANTIATE_MODEL(T)                                                              \
  template FusionBlock<T> make_fusion_block(std::size_t, std::size_t, std::size_t, Rng&);       \
  template DualChannelBlock<T> make_dual_block(std::size_t, std::size_t, Rng&);                 \
  template Tensor<T> fusion_forward(const Tensor<T>&, const Tensor<T>&, FusionBlock<T>&);       \
  template Tensor<T> conv_path_forward(const Tensor<T>&, ConvPath<T>&);                         \
  template Tensor<T> kan_path_forward(const Tensor<T>&, KanPath<T>&);                           \
  template Tensor<T> dual_block_forward(const Tensor<T>&, DualChannelBlock<T>&);                \
  template class KanduNet<T>;                                                                    \
  template KanduNet<T> build_model(const ModelConfig&);                                          \
  template Tensor<T> model_forward(KanduNet<T>&, const Tensor<T>&, Mode);

KANDU_INSTANTIATE_MODEL(float)
KANDU_INSTANTIATE_MODEL(double)

}  // namespace kandu
