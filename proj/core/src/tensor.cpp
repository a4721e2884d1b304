#include "kandu/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace kandu {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  if (values.size() != shape_numel(shape))
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data);
}

template class Tensor<float>;
template class Tensor<double>;

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(std::span<const T>)> rule) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!any_requires_grad<T>(inputs)) return out;
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  for (const auto* t : inputs)
    if (t->requires_grad()) node->inputs.push_back(t->impl_ptr());
  node->backward = std::move(rule);
  const auto& impl = out.impl_ptr();
  impl->requires_grad = true;
  impl->node = std::move(node);
  return out;
}

template Tensor<float> make_result(Shape, std::vector<float>, const char*,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(std::span<const float>)>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(std::span<const double>)>);

}  // namespace detail

template <typename T>
void backward(const Tensor<T>& loss) {
  using Impl = detail::TensorImpl<T>;
  if (loss.numel() != 1)
    throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                shape_str(loss.shape()));
  const auto& root = loss.impl_ptr();
  if (!root->requires_grad) return;
  if (!root->node) {
    root->grad_buffer()[0] += T(1);
    return;
  }

  // Iterative post-order DFS; `order` ends up with producers before consumers.
  std::vector<std::shared_ptr<Impl>> order;
  std::unordered_set<const Impl*> visited;
  std::vector<std::pair<std::shared_ptr<Impl>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& node = impl->node;
    if (node->consumed)
      throw std::logic_error(std::string("backward through an already-consumed graph (op '") +
                             node->op + "')");
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->node && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl& impl = **it;
    auto& node = *impl.node;
    if (impl.grad.size() == impl.data.size() && !impl.data.empty()) node.backward(impl.grad);
    node.backward = nullptr;
    node.inputs.clear();
    node.consumed = true;
    // Intermediate gradients are not retained.
    std::vector<T>().swap(impl.grad);
  }
}

template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace kandu
