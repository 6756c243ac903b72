#include "incepto/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "incepto/errors.hpp"

namespace incepto {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be >= 1, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values but " + std::to_string(data.size()) + " were given");
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string());
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local std::string g_corrupt_op;
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeGuard::TapeGuard(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeGuard::~TapeGuard() { g_active_tape = previous_; }

void Tape::record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void()> backward) {
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? loss.shape_string() : std::string("<undefined>")));
  }
  const bool on_tape = std::any_of(nodes_.begin(), nodes_.end(),
                                   [&](const Node& n) { return n.output.same(loss); });
  if (!on_tape) throw ContractError("backward: loss was not produced on the active tape");

  for (Node& n : nodes_) {
    TensorImpl* out = n.output.impl();
    out->grad.clear();
    out->grad_touched = false;
    for (Tensor& in : n.inputs) in.impl()->grad_touched = false;
  }
  TensorImpl* root = loss.impl();
  root->grad.assign(1, 1.0);
  root->grad_touched = true;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    TensorImpl* out = it->output.impl();
    if (!out->grad_touched) continue;
    if (const double f = detail::corruption_factor(it->op); f != 1.0) {
      for (double& g : out->grad) g *= f;
    }
    it->backward();
  }
}

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw ContractError("backward called without an active tape");
  tape->backward(loss);
}

namespace detail {

Tensor make_result(std::string_view op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   const std::function<std::function<void()>(TensorImpl* out)>& make_backward) {
  Tensor out(std::move(shape), std::move(data));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.impl()->requires_grad = true;
  out.impl()->is_leaf = false;
  tape->record(op, std::move(inputs), out, make_backward(out.impl()));
  return out;
}

double* grad_target(const Tensor& input) {
  TensorImpl* impl = input.impl();
  if (!impl->requires_grad) return nullptr;
  impl->grad_touched = true;
  return impl->ensure_grad().data();
}

void set_backward_corruption(std::string op) { g_corrupt_op = std::move(op); }

double corruption_factor(std::string_view op) {
  return (!g_corrupt_op.empty() && g_corrupt_op == op) ? 1.5 : 1.0;
}

}  // namespace detail

}  // namespace incepto
