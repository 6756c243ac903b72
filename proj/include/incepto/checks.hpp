#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "incepto/gradcheck.hpp"

namespace incepto {

struct LayerCheck {
  std::string name;
  GradcheckReport report;
  double seconds = 0.0;
};

/// Finite-difference gradchecks for every layer type plus a tiny full model
/// (batch normalization in its deterministic eval mode), at eps 1e-5.
std::vector<LayerCheck> layer_gradchecks(std::uint64_t seed = 0);

/// Op names accepted by the backward-corruption hook.
const std::vector<std::string>& differentiable_ops();

}  // namespace incepto
