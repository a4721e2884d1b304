#pragma once

// Binary checkpoints. Byte layout is documented in docs/checkpoint_format.md.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kandu/model.hpp"
#include "kandu/optim.hpp"

namespace kandu {

inline constexpr char kCheckpointMagic[8] = {'K', 'A', 'N', 'D', 'U', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  bool buffer = false;  // running statistic rather than a trainable parameter
  Shape shape;
  std::vector<float> values;
  bool operator==(const TensorRecord&) const = default;
};

struct Checkpoint {
  ModelConfig model;
  std::uint64_t epoch = 0;       // completed epochs
  std::uint64_t train_seed = 0;  // every per-epoch stream derives from this and the epoch
  double best_metric = -1.0;     // best validation Dice so far, -1 if none
  std::vector<TensorRecord> tensors;
  std::uint64_t optimizer_steps = 0;
  std::vector<Adam<float>::Moments> moments;
};

Checkpoint capture_checkpoint(KanduNet<float>& model, const Adam<float>* optimizer = nullptr);

/// Copies values into `model` (and `optimizer` when given). Names, order and
/// shapes must match the model exactly; a mismatch throws
/// std::runtime_error listing the differing tensors.
void restore_checkpoint(const Checkpoint& ckpt, KanduNet<float>& model,
                        Adam<float>* optimizer = nullptr);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kandu
