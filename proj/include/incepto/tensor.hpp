#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace incepto {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulated into
  bool requires_grad = false;
  bool is_leaf = true;
  bool grad_touched = false;  // reached during the current backward sweep

  std::vector<double>& ensure_grad();
};

/// Dense row-major tensor of doubles. Copies of a Tensor share storage;
/// use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  const double* ptr() const { return impl_->data.data(); }
  double item() const;
  double operator[](std::size_t flat) const { return impl_->data[flat]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient view; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();

  Tensor clone() const;
  std::string shape_string() const { return shape_str(impl_->shape); }

  TensorImpl* impl() const { return impl_.get(); }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable operations. Backward visits nodes in
/// exact reverse of recording order.
class Tape {
 public:
  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward);
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Accumulates dLoss/dT into every requires_grad leaf reachable from loss.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

/// Makes `tape` the recording tape of the calling thread for the guard's
/// lifetime. Without an active tape ops compute values only.
class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape);
  ~TapeGuard();
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Backward through the thread's active tape.
void backward(const Tensor& loss);

namespace detail {

/// Output tensor for an op; records a node when a tape is active and any
/// input requires grad. `make_backward` is only invoked when recording.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   const std::function<std::function<void()>(TensorImpl* out)>& make_backward);

/// Accumulation target for an input's gradient, or nullptr when the input
/// does not take gradients.
double* grad_target(const Tensor& input);

/// Test hook: when set to an op name, that op's backward scales the gradient
/// it propagates by 1.5. Empty string disables it.
void set_backward_corruption(std::string op);
double corruption_factor(std::string_view op);

}  // namespace detail

}  // namespace incepto
