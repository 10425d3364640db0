#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "driveflow/tensor.hpp"

namespace driveflow {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one parameter group.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
};

/// One bias-corrected Adam update of `params` in place, using their
/// accumulated gradients. Throws TrainingError if any gradient is non-finite;
/// in that case neither the parameters nor the state are touched.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg);

/// Same update with gradients supplied explicitly.
void adam_step(std::span<Tensor> params, std::span<const Eigen::VectorXd> grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace driveflow
