#include "promptforge/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "promptforge/errors.hpp"

namespace promptforge {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw ParameterError("finite_diff_grad: step must be positive");
    std::vector<double> point = x.values();
    std::vector<double> grad(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double original = point[i];
        point[i] = original + h;
        const double up = f(Tensor::from(x.shape(), point));
        point[i] = original - h;
        const double down = f(Tensor::from(x.shape(), point));
        point[i] = original;
        grad[i] = (up - down) / (2.0 * h);
    }
    return Tensor::from(x.shape(), std::move(grad));
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    if (denom < floor) return 0.0;
    return std::sqrt(diff) / denom;
}

}  // namespace promptforge
