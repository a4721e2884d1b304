#pragma once

// KANDU-Net: a U-Net in which every stage is a dual-channel block. The conv
// channel is a double 3x3 conv/BN/ReLU; the KAN channel normalizes its input,
// applies a pixel-wise KAN layer and normalizes again. A fusion block
// (concat, 3x3 conv, BN, 1x1 conv, BN, ReLU) merges the two channels.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kandu/kan.hpp"
#include "kandu/nn.hpp"

namespace kandu {

struct ModelConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> widths{16, 32, 64, 128};  // one per encoder stage
  std::size_t bottleneck = 256;
  std::size_t out_channels = 1;
  std::uint64_t seed = 42;

  std::size_t stages() const { return widths.size(); }
  /// Input extents must be multiples of this.
  std::size_t spatial_multiple() const { return std::size_t{1} << widths.size(); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct FusionBlock {
  ConvParams<T> conv3;  // 3x3, padding 1, (Ca + Cb) -> Cout
  BatchNormState<T> bn1;
  ConvParams<T> conv1;  // 1x1, Cout -> Cout
  BatchNormState<T> bn2;
};

template <typename T>
struct ConvPath {
  ConvParams<T> conv_a;
  BatchNormState<T> bn_a;
  ConvParams<T> conv_b;
  BatchNormState<T> bn_b;
};

template <typename T>
struct KanPath {
  BatchNormState<T> bn_in;
  KanLayer<T> layer;
  BatchNormState<T> bn_out;
};

template <typename T>
struct DualChannelBlock {
  ConvPath<T> conv;
  KanPath<T> kan;
  FusionBlock<T> fusion;
  std::size_t in_channels() const { return conv.conv_a.in_channels(); }
  std::size_t out_channels() const { return conv.conv_b.out_channels(); }
};

template <typename T>
FusionBlock<T> make_fusion_block(std::size_t ca, std::size_t cb, std::size_t cout, Rng& rng);
template <typename T>
DualChannelBlock<T> make_dual_block(std::size_t cin, std::size_t cout, Rng& rng);

/// Out = ReLU(BN(Conv1x1(BN(Conv3x3(concat(x1, x2)))))).
template <typename T>
Tensor<T> fusion_forward(const Tensor<T>& x1, const Tensor<T>& x2, FusionBlock<T>& f);

template <typename T>
Tensor<T> conv_path_forward(const Tensor<T>& x, ConvPath<T>& p);
template <typename T>
Tensor<T> kan_path_forward(const Tensor<T>& x, KanPath<T>& p);
template <typename T>
Tensor<T> dual_block_forward(const Tensor<T>& x, DualChannelBlock<T>& b);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Hooks for tests and tooling.
struct ForwardOptions {
  std::optional<std::size_t> zero_skip;       // replace this encoder output by zeros in the skip
  std::vector<Shape>* feature_shapes = nullptr;  // encoder outputs, then the bottleneck output
};

template <typename T>
class KanduNet {
 public:
  explicit KanduNet(const ModelConfig& cfg);
  // Tensors are shared handles; a copy would alias every parameter.
  KanduNet(const KanduNet&) = delete;
  KanduNet& operator=(const KanduNet&) = delete;
  KanduNet(KanduNet&&) = default;
  KanduNet& operator=(KanduNet&&) = default;

  const ModelConfig& config() const { return cfg_; }

  /// Probability map [N, out_channels, H, W] in (0, 1).
  Tensor<T> forward(const Tensor<T>& x, const ForwardOptions& opts = {});

  void set_mode(Mode mode);
  Mode mode() const { return mode_; }

  /// Trainable tensors in a fixed order. aux_parameters() are exactly the
  /// fusion-block parameters, main_parameters() everything else.
  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedTensor<T>> aux_parameters();
  std::vector<NamedTensor<T>> main_parameters();
  /// Batch-norm running statistics.
  std::vector<NamedTensor<T>> buffers();
  std::size_t parameter_count();

  std::vector<DualChannelBlock<T>>& encoder() { return encoder_; }
  DualChannelBlock<T>& bottleneck() { return bottleneck_; }
  std::vector<DualChannelBlock<T>>& decoder() { return decoder_; }

 private:
  template <typename Fn>
  void visit(Fn&& fn);

  ModelConfig cfg_;
  Mode mode_ = Mode::train;
  std::vector<DualChannelBlock<T>> encoder_;
  DualChannelBlock<T> bottleneck_;
  std::vector<ConvParams<T>> up_;            // up_[s]: from stage s+1 (or bottleneck) to stage s
  std::vector<DualChannelBlock<T>> decoder_;  // decoder_[s] operates at stage s resolution
  ConvParams<T> head_;
};

/// Builds a model with seeded initialization and runs a probe forward pass
/// that checks both channels of every block agree in shape.
template <typename T>
KanduNet<T> build_model(const ModelConfig& cfg);

template <typename T>
Tensor<T> model_forward(KanduNet<T>& m, const Tensor<T>& x, Mode mode);

}  // namespace kandu
