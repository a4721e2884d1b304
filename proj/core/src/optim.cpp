#include "kandu/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kandu {

template <typename T>
ParamGroups<T> partition_params(KanduNet<T>& model) {
  ParamGroups<T> groups;
  groups.main.name = "main";
  groups.main.params = model.main_parameters();
  groups.aux.name = "aux";
  groups.aux.params = model.aux_parameters();
  return groups;
}

template <typename T>
void Adam<T>::step(std::vector<ParamGroup<T>*> groups, const std::vector<double>& lrs) {
  if (groups.size() != lrs.size())
    throw std::invalid_argument("Adam::step: one learning rate per group required");
  std::size_t total = 0;
  for (const auto* g : groups) total += g->params.size();
  if (moments_.empty()) {
    moments_.resize(total);
  } else if (moments_.size() != total) {
    throw std::logic_error("Adam::step: parameter set changed between steps");
  }

  for (const auto* g : groups)
    for (const auto& p : g->params) {
      if (!p.tensor.has_grad()) continue;
      for (T v : p.tensor.grad())
        if (!std::isfinite(v))
          throw std::runtime_error("Adam::step: non-finite gradient in " + p.name);
    }

  ++step_;
  const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2), eps = T(cfg_.eps), wd = T(cfg_.weight_decay);
  const T c1 = T(1) - T(std::pow(cfg_.beta1, double(step_)));
  const T c2 = T(1) - T(std::pow(cfg_.beta2, double(step_)));
  std::size_t slot = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const T lr = T(lrs[gi]);
    for (auto& p : groups[gi]->params) {
      Moments& mo = moments_[slot++];
      if (!p.tensor.has_grad()) continue;
      auto theta = p.tensor.mutable_data();
      const auto grad = p.tensor.grad();
      if (mo.m.size() != theta.size()) {
        mo.m.assign(theta.size(), T(0));
        mo.v.assign(theta.size(), T(0));
      }
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const T g = grad[i] + wd * theta[i];
        mo.m[i] = b1 * mo.m[i] + (T(1) - b1) * g;
        mo.v[i] = b2 * mo.v[i] + (T(1) - b2) * g * g;
        const T mhat = mo.m[i] / c1;
        const T vhat = mo.v[i] / c2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
}

template ParamGroups<float> partition_params(KanduNet<float>&);
template ParamGroups<double> partition_params(KanduNet<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace kandu
