#include "asbf/autodiff/adam.hpp"

#include <cmath>

#include "asbf/errors.hpp"

namespace asbf::ad {

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  for (const auto& [name, g] : grads) {
    const Parameter& p = params.at(name);
    if (g.size() != p.value.size()) {
      throw DimensionError("adam_step: gradient for " + name + " has " + std::to_string(g.size()) +
                           " entries, parameter has " + std::to_string(p.value.size()));
    }
    for (double v : g) {
      if (!std::isfinite(v)) throw NumericalError("adam_step: non-finite gradient for parameter " + name);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Parameter& p = params.at(name);
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace asbf::ad
