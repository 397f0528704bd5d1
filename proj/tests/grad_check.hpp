#pragma once

#include "test_util.hpp"

namespace vlafp::testing {

/// Largest relative error (Frobenius, per input) between the tape gradient of
/// sum(build(inputs) .* R) and central differences, R fixed and random.
template <typename Build>
double max_op_gradient_error(std::vector<Matrix<double>> inputs, Build build, std::uint64_t seed = 1, double step = 1e-6) {
  Matrix<double> weights;
  const auto evaluate = [&](std::vector<Matrix<double>>& in, std::vector<Matrix<double>>* grads) {
    ad::Tape<double> t;
    std::vector<ad::Id> ids;
    for (auto& m : in) ids.push_back(t.variable(m));
    const ad::Id out = build(t, ids);
    if (weights.size() == 0) {
      Rng rng = Rng(seed).derive(0x5eed);
      weights = random_matrix<double>(t.value(out).rows(), t.value(out).cols(), rng);
    }
    const ad::Id loss = ad::weighted_sum(t, out, weights);
    if (grads) {
      t.backward(loss);
      for (auto id : ids) grads->push_back(t.grad(id));
    }
    return t.value(loss)(0, 0);
  };
  std::vector<Matrix<double>> analytic;
  evaluate(inputs, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix<double> numeric(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index e = 0; e < inputs[i].size(); ++e) {
      const double orig = inputs[i].data()[e];
      inputs[i].data()[e] = orig + step;
      const double up = evaluate(inputs, nullptr);
      inputs[i].data()[e] = orig - step;
      const double down = evaluate(inputs, nullptr);
      inputs[i].data()[e] = orig;
      numeric.data()[e] = (up - down) / (2.0 * step);
    }
    worst = std::max(worst, (numeric - analytic[i]).norm() / std::max(1e-12, numeric.norm()));
  }
  return worst;
}

}  // namespace vlafp::testing
