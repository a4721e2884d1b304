#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kandu/model.hpp"

namespace kandu {

template <typename T>
struct ParamGroup {
  std::string name;
  std::vector<NamedTensor<T>> params;
};

template <typename T>
struct ParamGroups {
  ParamGroup<T> main;
  ParamGroup<T> aux;
};

/// aux = every fusion-block parameter, main = the rest.
template <typename T>
ParamGroups<T> partition_params(KanduNet<T>& model);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2: g += weight_decay * theta
};

/// Adam with bias correction over any number of parameter groups. One step
/// counter is shared by all groups; moments are keyed by position within
/// each group.
template <typename T>
class Adam {
 public:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };

  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to each group with its learning rate. Parameters
  /// with no gradient are skipped. A non-finite gradient anywhere rejects
  /// the whole step (nothing is modified) with std::runtime_error naming the
  /// parameter.
  void step(std::vector<ParamGroup<T>*> groups, const std::vector<double>& lrs);

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  /// Flat moment list in (group, parameter) order, for checkpoints.
  const std::vector<Moments>& moments() const { return moments_; }
  void restore(std::uint64_t steps, std::vector<Moments> moments) {
    step_ = steps;
    moments_ = std::move(moments);
  }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace kandu
