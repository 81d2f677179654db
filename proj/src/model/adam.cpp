#include <cmath>

#include "texsr/error.hpp"
#include "texsr/model.hpp"

namespace texsr {

AdamState make_adam(const Network& net, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& l : net.layers) {
    s.m.emplace_back(l.weight.size(), 0.0);
    s.m.emplace_back(l.bias.size(), 0.0);
  }
  s.v = s.m;
  return s;
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(Errc::shape_mismatch, "optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size() ||
        state.v[i].size() != params[i].size()) {
      throw Error(Errc::shape_mismatch, "parameter tensor " + std::to_string(i) + " size mismatch");
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      const double g = grads[i][k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      params[i][k] -= state.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

void adam_step(Network& net, const Gradients& grads, AdamState& state) {
  const auto p = parameters(net);
  const auto g = parameters(grads);
  adam_step(p, g, state);
}

} // namespace texsr
