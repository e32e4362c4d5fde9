#pragma once

#include <functional>
#include <span>

#include "promptforge/tensor.hpp"

namespace promptforge {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient estimate (f(x + h e_i) - f(x - h e_i)) / 2h
/// for every coordinate of x. f is evaluated on detached copies of x.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||); zero when both norms are below `floor`.
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-12);

}  // namespace promptforge
