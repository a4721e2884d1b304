#pragma once

#include <cstdint>
#include <vector>

#include "kandu/data.hpp"
#include "kandu/metrics.hpp"
#include "kandu/model.hpp"
#include "kandu/optim.hpp"

namespace kandu {

struct TrainConfig {
  double main_lr = 0.001;
  double aux_lr = 0.01;
  double aux_loss_weight = 0.2;
  double weight_decay = 1e-6;
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  std::uint64_t seed = 42;
  std::vector<double> decay_milestones{0.5, 0.75};  // fractions of `epochs`
  double decay_factor = 0.1;
  bool augment = true;

  void validate() const;
};

struct LearningRates {
  double main;
  double aux;
  bool operator==(const LearningRates&) const = default;
};

/// Both rates are multiplied by decay_factor once for every milestone with
/// epoch >= milestone * epochs. `epoch` is 0-based.
LearningRates lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Stacks samples into [N, 3, H, W] images and [N, 1, H, W] masks.
template <typename T>
Tensor<T> image_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx);
template <typename T>
Tensor<T> mask_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx);

struct EpochLog {
  std::size_t epoch = 0;
  LearningRates lr{0, 0};
  double mean_loss = 0;
  std::vector<double> batch_losses;
  bool operator==(const EpochLog&) const = default;
};

/// Model, optimizer and the parameter grouping used by every epoch.
template <typename T>
struct Trainer {
  explicit Trainer(const ModelConfig& model_cfg, const TrainConfig& cfg);

  KanduNet<T> model;
  TrainConfig cfg;
  ParamGroups<T> groups;
  Adam<T> optimizer;
};

/// One pass over `dataset` in the seed-and-epoch-derived order:
/// forward (train mode), total loss, backward, Adam step with the scheduled
/// per-group rates. A non-finite loss throws std::runtime_error naming the
/// batch.
template <typename T>
EpochLog train_epoch(Trainer<T>& trainer, const std::vector<Sample>& dataset, std::size_t epoch);

/// Eval-mode probabilities, one vector of H*W values per sample.
template <typename T>
std::vector<std::vector<T>> predict(KanduNet<T>& model, const std::vector<Sample>& samples,
                                    std::size_t batch_size = 4);

/// Per-image IoU and Dice at threshold 0.5 in eval mode.
template <typename T>
MetricsReport evaluate(KanduNet<T>& model, const std::vector<Sample>& samples,
                       std::size_t batch_size = 4);

}  // namespace kandu
