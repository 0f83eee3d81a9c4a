#include "diffcast/optim.hpp"

#include <cmath>

#include "diffcast/error.hpp"

namespace diffcast {

void adam_step(const std::vector<Param*>& params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const Param* p : params) {
      state.first_moment.push_back(Tensor::like(p->value));
      state.second_moment.push_back(Tensor::like(p->value));
    }
  }
  require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
          ErrorKind::Shape, "adam: optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = *params[i];
    require(p.grad.shape() == p.value.shape() && state.first_moment[i].shape() == p.value.shape(),
            ErrorKind::Shape, "adam: shape mismatch for parameter '" + p.name + "'");
    require(p.grad.all_finite(), ErrorKind::Numeric,
            "adam: non-finite gradient in parameter group '" + p.name + "'");
  }

  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.value[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace diffcast
