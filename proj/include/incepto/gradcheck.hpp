#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "incepto/tensor.hpp"

namespace incepto {

struct GradcheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::size_t checked = 0;
  // Location and values of the worst entry.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline constexpr double kGradcheckEps = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;

/// Compares reverse-mode gradients of the scalar `loss_fn()` with respect to
/// each tensor in `params` against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps). Relative error per entry is
/// |a - n| / max(|a|, |n|, 1e-8). Throws NumericalError on a non-finite value.
GradcheckReport gradcheck(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                          double eps = kGradcheckEps, double tolerance = kGradcheckTolerance);

/// Variant that draws standard-normal inputs of the given shapes and checks
/// gradients of `fn(inputs)` with respect to those inputs.
GradcheckReport gradcheck(const std::function<Tensor(std::span<const Tensor>)>& fn,
                          const std::vector<Shape>& input_shapes, std::uint64_t seed,
                          double eps = kGradcheckEps, double tolerance = kGradcheckTolerance);

}  // namespace incepto
