#include "tdl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace tdl {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

void TensorImpl::accumulate(std::span<const double> g) {
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not hold " + std::to_string(data.size()) +
                     " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

int64_t Tensor::dim(int i) const {
  const auto n = static_cast<int>(impl_->shape.size());
  if (i < 0) i += n;
  if (i < 0 || i >= n) throw ShapeError("dim index out of range for shape " + shape_str(impl_->shape));
  return impl_->shape[static_cast<std::size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

namespace {
thread_local bool g_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined tensor");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw Error("backward: loss is detached from any graph (no input requires grad)");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->inputs.size()) {
      TensorImpl* in = t->node->inputs[next++].get();
      if (in->requires_grad && seen.insert(in).second) stack.emplace_back(in, 0);
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  loss.impl()->accumulate(std::vector<double>{1.0});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->node || t->grad.empty()) continue;
    t->node->backward(*t);
  }
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw Error("sgd step: parameter " + std::to_string(i) + " " + shape_str(params_[i].shape()) +
                  " has no gradient; run backward first");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto data = p.mutable_data();
    auto g = p.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      data[j] -= lr_ * v[j];
    }
    p.zero_grad();
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double eps, uint64_t seed,
                         int max_params, double floor) {
  for (auto& p : params) p.zero_grad();
  backward(loss_fn());

  struct Entry {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (int64_t j = 0; j < params[i].numel(); ++j) entries.push_back({i, static_cast<std::size_t>(j)});
  }
  Rng rng(seed);
  // Partial Fisher-Yates: the first `take` entries become a uniform sample.
  const std::size_t take = std::min(entries.size(), static_cast<std::size_t>(std::max(max_params, 0)));
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(entries[i], entries[i + rng.below(entries.size() - i)]);
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < take; ++k) {
    auto& p = params[entries[k].param];
    const std::size_t j = entries[k].index;
    const double analytic = p.grad()[j];
    auto data = p.mutable_data();
    const double saved = data[j];
    data[j] = saved + eps;
    const double up = loss_fn().item();
    data[j] = saved - eps;
    const double down = loss_fn().item();
    data[j] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace tdl
