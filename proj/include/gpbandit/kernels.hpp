#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace gpbandit {

using Point = std::vector<double>;

enum class KernelFamily { SE, Matern };

// Stationary kernel with k(x,x) = 1. Matern smoothness is restricted to the
// half integers 1/2, 3/2, 5/2 that have closed forms; general smoothness
// would drag in Bessel functions for no benefit here.
struct KernelSpec {
    KernelFamily family = KernelFamily::SE;
    double lengthscale = 1.0;
    double smoothness = 1.5;  // Matern only

    void validate() const {
        if (!(lengthscale > 0.0))
            throw std::invalid_argument("kernel lengthscale must be positive");
        if (family == KernelFamily::Matern && smoothness != 0.5 && smoothness != 1.5 &&
            smoothness != 2.5)
            throw std::invalid_argument("Matern smoothness must be one of 0.5, 1.5, 2.5");
    }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("point dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double kernel_eval(const KernelSpec& spec, std::span<const double> x,
                          std::span<const double> x2) {
    const double r2 = squared_distance(x, x2);
    const double l = spec.lengthscale;
    if (spec.family == KernelFamily::SE)
        return std::exp(-r2 / (2.0 * l * l));
    // z = sqrt(2 nu) r / l
    const double z = std::sqrt(2.0 * spec.smoothness * r2) / l;
    if (spec.smoothness == 0.5)
        return std::exp(-z);
    if (spec.smoothness == 1.5)
        return (1.0 + z) * std::exp(-z);
    return (1.0 + z + z * z / 3.0) * std::exp(-z);
}

inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const std::vector<Point>& X) {
    const auto n = static_cast<Eigen::Index>(X.size());
    if (n < 1)
        throw std::invalid_argument("gram_matrix needs at least one point");
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = kernel_eval(spec, X[i], X[i]);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = kernel_eval(spec, X[i], X[j]);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

}  // namespace gpbandit
