#pragma once

// Dense row-major float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to shared storage. Every op whose inputs require
// gradients records a node on the produced tensor; `backward` walks the nodes
// reachable from a scalar loss in reverse topological order, visiting each
// exactly once. Layout for images is NHWC throughout.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdl/common.hpp"

namespace tdl {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct TensorImpl;

/// Operation record. `backward` reads the output's grad and accumulates into
/// the grads of `inputs`.
struct Node {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  void accumulate(std::span<const double> g);
  std::span<double> grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim(int i) const;
  int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access; only for initialization and optimizer updates.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad();
  bool is_leaf() const { return impl_->node == nullptr; }

  /// Same data, no graph history, no grad requirement. Shares nothing.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Primitives. All throw ShapeError on incompatible inputs.

Tensor add(const Tensor& a, const Tensor& b);  // same shape, or one side scalar
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
/// x[..., C] + bias[C].
Tensor add_bias(const Tensor& x, const Tensor& bias);

struct Conv2dAttrs {
  int stride = 1;
  int pad = 0;
};
/// x[N,H,W,Ci] (*) w[kh,kw,Ci,Co] (+ b[Co]) -> [N,Ho,Wo,Co]. `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dAttrs attrs);
/// 2x2 max-pool with stride 2 over NHWC; H and W must be even.
Tensor maxpool2x2(const Tensor& x);
/// Nearest-neighbour 2x upsampling over NHWC.
Tensor upsample2x(const Tensor& x);
/// Concatenation along the last (channel) axis; leading dims must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Mean over all elements -> scalar.
Tensor mean(const Tensor& x);
/// Softmax over the last axis.
Tensor softmax_channels(const Tensor& logits);
/// Mean over positions of -log softmax(logits)[target]; logits [..., C],
/// one target id per position.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// Mean absolute difference; differentiable w.r.t. `pred` only.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

/// Generic dispatch used by tooling and tests.
enum class OpKind {
  add,
  sub,
  mul,
  matmul,
  add_bias,
  conv2d,
  maxpool2x2,
  upsample2x,
  concat_channels,
  relu,
  tanh,
  reshape,
  mean,
  abs,
  softmax_channels,
  cross_entropy,
  l1_loss,
};

struct OpAttrs {
  Conv2dAttrs conv;
  Shape new_shape;
  std::vector<int> targets;
};

Tensor forward_primitive(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

// ---------------------------------------------------------------------------

/// While alive on a thread, ops on that thread record no graph nodes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool previous_;
};

/// Populates grads of every requires_grad leaf reachable from `loss`.
/// Grads accumulate; callers zero them between steps.
void backward(const Tensor& loss);

/// SGD with heavy-ball momentum: v <- m*v + g; p <- p - lr*v. Grads are zeroed
/// after each step.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double momentum);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
};

/// Compares analytic gradients with central differences on at most
/// `max_params` randomly sampled parameter entries. Returns the worst
/// relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is below the central difference's roundoff from
/// dominating; for losses averaged over thousands of terms 1e-6 is too small.
double finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double eps,
                         uint64_t seed = 0, int max_params = 200, double floor = 1e-6);

}  // namespace tdl
