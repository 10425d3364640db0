#pragma once

// Finite-difference oracle for the autograd engine. It only evaluates forward
// values; the analytic side goes through the tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "driveflow/ops.hpp"
#include "driveflow/rng.hpp"
#include "driveflow/tensor.hpp"

namespace driveflow::testing {

using Function = std::function<Tensor(const std::vector<Tensor>&)>;

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Values in [-1, 1] with pairwise gaps >= 1/n. For max-style ops.
inline Tensor distinct_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  const std::size_t n = t.numel();
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(rank[i - 1], rank[rng.below(i)]);
  for (std::size_t i = 0; i < n; ++i) {
    t.mutable_data()[i] = -1.0 + 2.0 * (static_cast<double>(rank[i]) + 0.5 + 0.25 * rng.uniform()) /
                                     static_cast<double>(n);
  }
  return t;
}

// Values in [-1, -margin] U [margin, 1].
inline Tensor off_zero_tensor(Shape shape, Rng& rng, double margin = 1e-2) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.mutable_data()) {
    const double m = rng.uniform(margin, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<Eigen::VectorXd> analytic;
  std::vector<Eigen::VectorXd> numeric;
};

// Scalarizes f with a fixed random projection, then compares tape gradients
// against central differences for every input element. The relative error of
// input i is ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
inline GradCheckResult gradient_check(const Function& f, std::vector<Tensor> inputs, double step,
                                      std::uint64_t seed) {
  for (Tensor& t : inputs) t.set_requires_grad(true);
  Tensor probe = f(inputs);
  Rng rng(seed);
  Tensor projection = uniform_tensor(probe.shape(), rng, 0.5, 1.5);
  for (double& v : projection.mutable_data()) v = rng.uniform() < 0.5 ? -v : v;

  auto scalar_value = [&](const std::vector<Tensor>& in) {
    const Tensor out = f(in);
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * projection[i];
    return s;
  };

  GradCheckResult result;
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(mul(f(inputs), projection));
  }
  for (Tensor& t : inputs) t.zero_grad();
  backward(loss, tape);
  for (const Tensor& t : inputs) result.analytic.push_back(t.grad());

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Eigen::VectorXd numeric(static_cast<Eigen::Index>(inputs[k].numel()));
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      double& x = inputs[k].mutable_data()[i];
      const double saved = x;
      x = saved + step;
      const double plus = scalar_value(inputs);
      x = saved - step;
      const double minus = scalar_value(inputs);
      x = saved;
      numeric[static_cast<Eigen::Index>(i)] = (plus - minus) / (2.0 * step);
    }
    const Eigen::VectorXd& analytic = result.analytic[k];
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    result.max_relative_error = std::max(result.max_relative_error, (analytic - numeric).norm() / denom);
    result.numeric.push_back(std::move(numeric));
  }
  return result;
}

struct OpCase {
  const char* name;
  // Builds fresh random inputs for instance `i`.
  std::function<std::vector<Tensor>(Rng&)> make_inputs;
  Function fn;
};

// One entry per differentiable operation.
inline std::vector<OpCase> differentiable_op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"matmul", [](Rng& r) { return std::vector{uniform_tensor({3, 4}, r), uniform_tensor({4, 2}, r)}; },
                   [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); }});
  cases.push_back({"conv2d_stride1",
                   [](Rng& r) { return std::vector{uniform_tensor({3, 8, 8}, r), uniform_tensor({4, 3, 3, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], 1); }});
  cases.push_back({"conv2d_stride2",
                   [](Rng& r) { return std::vector{uniform_tensor({3, 8, 8}, r), uniform_tensor({4, 3, 3, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], 2); }});
  cases.push_back({"relu", [](Rng& r) { return std::vector{off_zero_tensor({5, 6}, r)}; },
                   [](const std::vector<Tensor>& in) { return relu(in[0]); }});
  cases.push_back({"sigmoid", [](Rng& r) { return std::vector{uniform_tensor({7}, r, -3.0, 3.0)}; },
                   [](const std::vector<Tensor>& in) { return sigmoid(in[0]); }});
  cases.push_back({"sqrt", [](Rng& r) { return std::vector{uniform_tensor({6}, r, 0.1, 1.0)}; },
                   [](const std::vector<Tensor>& in) { return driveflow::sqrt(in[0]); }});
  cases.push_back({"maxpool2d", [](Rng& r) { return std::vector{distinct_tensor({2, 6, 6}, r)}; },
                   [](const std::vector<Tensor>& in) { return maxpool2d(in[0], 2, 2); }});
  cases.push_back({"maxpool2d_overlapping", [](Rng& r) { return std::vector{distinct_tensor({2, 5, 5}, r)}; },
                   [](const std::vector<Tensor>& in) { return maxpool2d(in[0], 3, 1); }});
  cases.push_back({"global_max_over_points", [](Rng& r) { return std::vector{distinct_tensor({16, 8}, r)}; },
                   [](const std::vector<Tensor>& in) { return global_max_over_points(in[0]); }});
  cases.push_back({"add", [](Rng& r) { return std::vector{uniform_tensor({3, 3}, r), uniform_tensor({3, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return add(in[0], in[1]); }});
  cases.push_back({"sub", [](Rng& r) { return std::vector{uniform_tensor({3, 3}, r), uniform_tensor({3, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); }});
  cases.push_back({"mul", [](Rng& r) { return std::vector{uniform_tensor({3, 3}, r), uniform_tensor({3, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); }});
  cases.push_back({"scale", [](Rng& r) { return std::vector{uniform_tensor({4}, r)}; },
                   [](const std::vector<Tensor>& in) { return scale(in[0], -2.5); }});
  cases.push_back({"add_bias", [](Rng& r) { return std::vector{uniform_tensor({4, 3}, r), uniform_tensor({3}, r)}; },
                   [](const std::vector<Tensor>& in) { return add_bias(in[0], in[1]); }});
  cases.push_back({"add_channel_bias",
                   [](Rng& r) { return std::vector{uniform_tensor({3, 2, 4}, r), uniform_tensor({3}, r)}; },
                   [](const std::vector<Tensor>& in) { return add_channel_bias(in[0], in[1]); }});
  cases.push_back({"sum", [](Rng& r) { return std::vector{uniform_tensor({2, 5}, r)}; },
                   [](const std::vector<Tensor>& in) { return sum(in[0]); }});
  cases.push_back({"mean", [](Rng& r) { return std::vector{uniform_tensor({2, 5}, r)}; },
                   [](const std::vector<Tensor>& in) { return mean(in[0]); }});
  cases.push_back({"reshape", [](Rng& r) { return std::vector{uniform_tensor({2, 6}, r)}; },
                   [](const std::vector<Tensor>& in) { return reshape(in[0], {3, 4}); }});
  cases.push_back({"take", [](Rng& r) { return std::vector{uniform_tensor({2, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return take(in[0], 4); }});
  cases.push_back({"concat",
                   [](Rng& r) { return std::vector{uniform_tensor({2, 3}, r), uniform_tensor({1, 3}, r)}; },
                   [](const std::vector<Tensor>& in) { return concat({in[0], in[1]}); }});
  cases.push_back({"composite_conv_relu_matmul",
                   [](Rng& r) {
                     return std::vector{uniform_tensor({2, 6, 6}, r), uniform_tensor({3, 2, 3, 3}, r),
                                        uniform_tensor({48, 2}, r)};
                   },
                   [](const std::vector<Tensor>& in) {
                     Tensor h = relu(conv2d(in[0], in[1], 1));
                     Tensor out = matmul(reshape(h, {1, 48}), in[2]);
                     return driveflow::sqrt(add(mul(out, out), Tensor({1, 2}, 1.0)));
                   }});
  return cases;
}

}  // namespace driveflow::testing
