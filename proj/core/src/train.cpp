#include "kandu/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kandu/losses.hpp"

namespace kandu {

void TrainConfig::validate() const {
  if (!(main_lr >= 0.0) || !(aux_lr >= 0.0))
    throw std::invalid_argument("train config: learning rates must be non-negative");
  if (!(aux_loss_weight >= 0.0 && aux_loss_weight <= 1.0))
    throw std::invalid_argument("train config: aux_loss_weight must lie in [0, 1]");
  if (!(weight_decay >= 0.0))
    throw std::invalid_argument("train config: weight_decay must be non-negative");
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    throw std::invalid_argument("train config: decay_factor must lie in (0, 1]");
}

LearningRates lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  double scale = 1.0;
  for (double m : cfg.decay_milestones)
    if (double(epoch) >= m * double(cfg.epochs)) scale *= cfg.decay_factor;
  return {cfg.main_lr * scale, cfg.aux_lr * scale};
}

template <typename T>
Tensor<T> image_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("image_batch: empty batch");
  const std::size_t h = samples[idx[0]].height, w = samples[idx[0]].width;
  std::vector<T> data(idx.size() * 3 * h * w);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const Sample& s = samples[idx[n]];
    if (s.height != h || s.width != w)
      throw std::invalid_argument("image_batch: samples differ in size");
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < h * w; ++p) data[((n * 3) + c) * h * w + p] = T(s.image[p * 3 + c]);
  }
  return Tensor<T>(Shape{idx.size(), 3, h, w}, std::move(data));
}

template <typename T>
Tensor<T> mask_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("mask_batch: empty batch");
  const std::size_t h = samples[idx[0]].height, w = samples[idx[0]].width;
  std::vector<T> data(idx.size() * h * w);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const Sample& s = samples[idx[n]];
    if (s.height != h || s.width != w)
      throw std::invalid_argument("mask_batch: samples differ in size");
    for (std::size_t p = 0; p < h * w; ++p) data[n * h * w + p] = T(s.mask[p]);
  }
  return Tensor<T>(Shape{idx.size(), 1, h, w}, std::move(data));
}

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg)
    : model(build_model<T>(model_cfg)),
      cfg(train_cfg),
      groups(partition_params(model)),
      optimizer(AdamConfig{0.9, 0.999, 1e-8, train_cfg.weight_decay}) {
  cfg.validate();
}

template <typename T>
EpochLog train_epoch(Trainer<T>& trainer, const std::vector<Sample>& dataset, std::size_t epoch) {
  if (dataset.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  const TrainConfig& cfg = trainer.cfg;
  EpochLog log;
  log.epoch = epoch;
  log.lr = lr_schedule(epoch, cfg);

  Rng order_rng = Rng::derive(cfg.seed, 0x0bde, epoch);
  const auto order = shuffled_indices(dataset.size(), order_rng);
  trainer.model.set_mode(Mode::train);

  std::vector<Sample> batch_samples;
  std::vector<std::size_t> local;
  double total = 0;
  for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    batch_samples.clear();
    local.clear();
    for (std::size_t k = start; k < end; ++k) {
      const Sample& s = dataset[order[k]];
      if (cfg.augment) {
        Rng aug = Rng::derive(cfg.seed ^ 0xa06e, epoch, order[k]);
        batch_samples.push_back(augment(s, aug));
      } else {
        batch_samples.push_back(s);
      }
      local.push_back(k - start);
    }
    const auto x = image_batch<T>(batch_samples, local);
    const auto y = mask_batch<T>(batch_samples, local);

    for (auto& p : trainer.groups.main.params) p.tensor.zero_grad();
    for (auto& p : trainer.groups.aux.params) p.tensor.zero_grad();
    auto pred = trainer.model.forward(x);
    auto loss = total_loss(pred, y, cfg.aux_loss_weight);
    const double value = double(loss.item());
    if (!std::isfinite(value))
      throw std::runtime_error("train_epoch: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(b));
    backward(loss);
    try {
      trainer.optimizer.step({&trainer.groups.main, &trainer.groups.aux}, {log.lr.main, log.lr.aux});
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train_epoch: epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(b) + ": " + e.what());
    }
    log.batch_losses.push_back(value);
    total += value;
  }
  log.mean_loss = total / double(log.batch_losses.size());
  return log;
}

template <typename T>
std::vector<std::vector<T>> predict(KanduNet<T>& model, const std::vector<Sample>& samples,
                                    std::size_t batch_size) {
  NoGradGuard no_grad;
  const Mode previous = model.mode();
  model.set_mode(Mode::eval);
  std::vector<std::vector<T>> out;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t k = start; k < std::min(samples.size(), start + batch_size); ++k)
      idx.push_back(k);
    const auto prob = model.forward(image_batch<T>(samples, idx));
    const std::size_t per = prob.numel() / idx.size();
    for (std::size_t n = 0; n < idx.size(); ++n)
      out.emplace_back(prob.data().begin() + n * per, prob.data().begin() + (n + 1) * per);
  }
  model.set_mode(previous);
  return out;
}

template <typename T>
MetricsReport evaluate(KanduNet<T>& model, const std::vector<Sample>& samples,
                       std::size_t batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  const auto probs = predict(model, samples, batch_size);
  MetricsReport report;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::vector<float> p(probs[i].begin(), probs[i].end());
    report.add(confusion_counts(std::span<const float>(p), std::span<const std::uint8_t>(samples[i].mask)));
  }
  report.finalize();
  return report;
}

#define KANDU_INSTANTIATE_TRAIN(T)                                                             \
  template Tensor<T> image_batch(const std::vector<Sample>&, const std::vector<std::size_t>&); \
  template Tensor<T> mask_batch(const std::vector<Sample>&, const std::vector<std::size_t>&);  \
  template struct Trainer<T>;                                                                  \
  template EpochLog train_epoch(Trainer<T>&, const std::vector<Sample>&, std::size_t);         \
  template std::vector<std::vector<T>> predict(KanduNet<T>&, const std::vector<Sample>&,       \
                                               std::size_t);                                   \
  template MetricsReport evaluate(KanduNet<T>&, const std::vector<Sample>&, std::size_t);

KANDU_INSTANTIATE_TRAIN(float)
KANDU_INSTANTIATE_TRAIN(double)

}  // namespace kandu
