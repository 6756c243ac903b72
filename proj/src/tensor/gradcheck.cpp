#include "incepto/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "incepto/errors.hpp"
#include "incepto/rng.hpp"

namespace incepto {

namespace {

double evaluate(const std::function<Tensor()>& loss_fn, std::size_t param, std::size_t index) {
  const Tensor loss = loss_fn();
  if (loss.numel() != 1) throw ContractError("gradcheck: function must return a scalar, got " + loss.shape_string());
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw NumericalError("gradcheck: non-finite loss while perturbing parameter " + std::to_string(param) +
                         " entry " + std::to_string(index));
  }
  return v;
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double eps,
                          double tolerance) {
  if (!(eps > 0.0)) throw ConfigError("gradcheck: eps must be > 0");
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeGuard guard(tape);
    const Tensor loss = loss_fn();
    if (loss.numel() != 1) throw ContractError("gradcheck: function must return a scalar, got " + loss.shape_string());
    if (!std::isfinite(loss.item())) throw NumericalError("gradcheck: non-finite loss at the base point");
    if (tape.size() > 0) backward(loss);
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    analytic.push_back(params[pi].grad());
    for (std::size_t i = 0; i < analytic.back().size(); ++i) {
      if (!std::isfinite(analytic.back()[i])) {
        throw NumericalError("gradcheck: non-finite analytic gradient at parameter " + std::to_string(pi) +
                             " entry " + std::to_string(i));
      }
    }
  }

  GradcheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::span<double> values = params[pi].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = evaluate(loss_fn, pi, i);
      values[i] = original - eps;
      const double down = evaluate(loss_fn, pi, i);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.checked;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

GradcheckReport gradcheck(const std::function<Tensor(std::span<const Tensor>)>& fn,
                          const std::vector<Shape>& input_shapes, std::uint64_t seed, double eps,
                          double tolerance) {
  Rng rng(seed);
  std::vector<Tensor> inputs;
  for (const Shape& s : input_shapes) {
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = rng.normal();
    inputs.emplace_back(s, std::move(v), true);
  }
  return gradcheck([&] { return fn(inputs); }, inputs, eps, tolerance);
}

}  // namespace incepto
