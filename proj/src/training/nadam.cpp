#include <cmath>
#include <map>

#include "incepto/errors.hpp"
#include "incepto/training.hpp"

namespace incepto {

NadamState nadam_init(std::span<const Tensor> params, double eta) {
  NadamState s;
  s.eta = eta;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void nadam_apply(std::span<Tensor> params, NadamState& state, std::span<const std::string> names) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("optimizer state holds " + std::to_string(state.m.size()) + " slots for " +
                         std::to_string(params.size()) + " parameters");
  }
  std::vector<std::vector<double>> grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string label = i < names.size() ? names[i] : "parameter " + std::to_string(i);
    if (state.m[i].size() != params[i].numel()) throw DimensionError("optimizer state shape mismatch for " + label);
    grads[i] = params[i].grad();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      if (!std::isfinite(grads[i][k])) {
        throw NumericalError("non-finite gradient in " + label + " at index " + std::to_string(k));
      }
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1_next = 1.0 - std::pow(b1, t + 1.0);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = b1 * m[k] / c1_next + (1.0 - b1) * g[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= state.eta * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

std::vector<io::NamedArray> nadam_to_arrays(const NadamState& state, std::span<const std::string> names) {
  std::vector<io::NamedArray> out;
  out.push_back({"nadam.hyper", {5},
                 {static_cast<double>(state.t), state.beta1, state.beta2, state.eta, state.epsilon}});
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    out.push_back({"nadam.m." + names[i], {state.m[i].size()}, state.m[i]});
    out.push_back({"nadam.v." + names[i], {state.v[i].size()}, state.v[i]});
  }
  return out;
}

NadamState nadam_from_arrays(const std::vector<io::NamedArray>& arrays, std::span<const Tensor> params,
                             std::span<const std::string> names) {
  std::map<std::string, const io::NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  auto get = [&](const std::string& name, std::size_t n) -> const std::vector<double>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("optimizer state is missing " + name);
    if (it->second->values.size() != n) throw FormatError("optimizer array " + name + " has the wrong size");
    return it->second->values;
  };
  const auto& hyper = get("nadam.hyper", 5);
  NadamState s;
  s.t = static_cast<std::size_t>(hyper[0]);
  s.beta1 = hyper[1];
  s.beta2 = hyper[2];
  s.eta = hyper[3];
  s.epsilon = hyper[4];
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.push_back(get("nadam.m." + names[i], params[i].numel()));
    s.v.push_back(get("nadam.v." + names[i], params[i].numel()));
  }
  return s;
}

}  // namespace incepto
