#pragma once

// Central-difference gradient oracle for scalar functions built on the
// autodiff engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "jscc/autodiff.hpp"

namespace jscc::testing {

/// Numerical gradient of `loss` with respect to every entry of every leaf,
/// flattened in leaf order. Leaf values are restored afterwards.
inline std::vector<double> numeric_gradient(std::vector<ad::Tensor>& leaves,
                                            const std::function<ad::Tensor()>& loss, double step = 1e-5) {
  std::vector<double> out;
  for (auto& leaf : leaves) {
    auto v = leaf.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + step;
      const double up = loss().item();
      v[i] = keep - step;
      const double down = loss().item();
      v[i] = keep;
      out.push_back((up - down) / (2.0 * step));
    }
  }
  return out;
}

inline std::vector<double> analytic_gradient(std::vector<ad::Tensor>& leaves,
                                             const std::function<ad::Tensor()>& loss) {
  for (auto& leaf : leaves) leaf.zero_grad();
  ad::backward(loss());
  std::vector<double> out;
  for (const auto& leaf : leaves) out.insert(out.end(), leaf.grad().begin(), leaf.grad().end());
  return out;
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||); zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

inline double gradient_error(std::vector<ad::Tensor> leaves, const std::function<ad::Tensor()>& loss,
                             double step = 1e-5) {
  const auto analytic = analytic_gradient(leaves, loss);
  const auto numeric = numeric_gradient(leaves, loss, step);
  return relative_error(analytic, numeric);
}

inline ad::Tensor random_parameter(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return ad::Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace jscc::testing
