#include "ssvmr/optim.hpp"

#include <cmath>

#include "ssvmr/error.hpp"

namespace ssvmr {

AdamState make_adam_state(std::span<const Tensor> params, AdamOptions options) {
  if (!(options.learning_rate > 0.0)) throw ContractError("Adam learning rate must be > 0");
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.rows(), p.cols());
    state.second_moment.emplace_back(p.rows(), p.cols());
  }
  return state;
}

void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string name = p < names.size() ? names[p] : "param#" + std::to_string(p);
    if (!params[p].same_shape(grads[p]) || !params[p].same_shape(state.first_moment[p])) {
      throw DimensionError("adam_step: shape mismatch for " + name);
    }
    if (!grads[p].all_finite()) throw NumericError("non-finite gradient for parameter " + name);
  }

  const auto& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].data();
    auto g = grads[p].data();
    auto m = state.first_moment[p].data();
    auto v = state.second_moment[p].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace ssvmr
