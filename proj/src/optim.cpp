#include "driveflow/optim.hpp"

#include <cmath>
#include <string>

#include "driveflow/error.hpp"

namespace driveflow {

void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg) {
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state, cfg);
}

void adam_step(std::span<Tensor> params, std::span<const Eigen::VectorXd> grads,
               AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.push_back(Eigen::VectorXd::Zero(p.values().size()));
      state.second_moment.push_back(Eigen::VectorXd::Zero(p.values().size()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].values().size() ||
        state.first_moment[i].size() != grads[i].size()) {
      throw DimensionError("adam_step: gradient/state size mismatch for parameter " +
                           std::to_string(i) + " of shape " +
                           shape_string(params[i].shape()));
    }
    if (!grads[i].allFinite()) {
      throw TrainingError("adam_step: non-finite gradient for parameter " +
                          std::to_string(i) + " of shape " +
                          shape_string(params[i].shape()));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::VectorXd& m = state.first_moment[i];
    Eigen::VectorXd& v = state.second_moment[i];
    const Eigen::VectorXd& g = grads[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const auto m_hat = m.array() / correction1;
    const auto v_hat = v.array() / correction2;
    params[i].mutable_values().array() -=
        cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
  }
}

}  // namespace driveflow
