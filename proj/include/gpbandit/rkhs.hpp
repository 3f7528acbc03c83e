#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gpbandit/kernels.hpp"
#include "gpbandit/random.hpp"

namespace gpbandit {

// Reward functions are finite kernel expansions f = sum_i alpha_i k(., c_i).
// Unlike GP prior draws these have an exactly computable norm, which the
// B-dependent experiments need.
struct RkhsFunction {
    KernelSpec kernel;
    std::vector<Point> centers;
    std::vector<double> coeffs;
    double norm = 0.0;  // sqrt(alpha^T K(C,C) alpha), cached
};

inline RkhsFunction make_function(const KernelSpec& kernel, std::vector<Point> centers,
                                  std::vector<double> coeffs) {
    kernel.validate();
    if (centers.empty() || centers.size() != coeffs.size())
        throw std::invalid_argument("make_function: need |centers| = |coeffs| >= 1");
    const auto K = gram_matrix(kernel, centers);
    double q = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i)
        for (std::size_t j = 0; j < coeffs.size(); ++j)
            q += coeffs[i] * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                 coeffs[j];
    RkhsFunction f{kernel, std::move(centers), std::move(coeffs), 0.0};
    f.norm = std::sqrt(std::max(q, 0.0));
    return f;
}

inline double eval(const RkhsFunction& f, const Point& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.centers.size(); ++i)
        s += f.coeffs[i] * kernel_eval(f.kernel, x, f.centers[i]);
    return s;
}

inline RkhsFunction scale_to_norm(const RkhsFunction& f, double target) {
    if (!(target > 0.0))
        throw std::invalid_argument("scale_to_norm: target must be positive");
    if (!(f.norm > 0.0))
        throw std::invalid_argument("scale_to_norm: zero-norm input");
    RkhsFunction g = f;
    const double c = target / f.norm;
    for (auto& a : g.coeffs)
        a *= c;
    g.norm = f.norm * c;
    return g;
}

// m distinct centers drawn uniformly from the domain, unit-normal
// coefficients, rescaled so the norm is exactly B. Fully determined by seed.
inline RkhsFunction sample_function(std::uint64_t seed, const KernelSpec& kernel, int m, double B,
                                    const std::vector<Point>& domain) {
    if (m < 1)
        throw std::invalid_argument("sample_function: m must be >= 1");
    if (static_cast<std::size_t>(m) > domain.size())
        throw std::invalid_argument("sample_function: m exceeds domain size");
    if (!(B > 0.0))
        throw std::invalid_argument("sample_function: B must be positive");
    std::vector<std::size_t> picked;
    picked.reserve(static_cast<std::size_t>(m));
    std::uint64_t ctr = 0;
    while (picked.size() < static_cast<std::size_t>(m)) {
        const std::size_t j = uniform_index(seed, streams::rkhs_centers, ctr++, domain.size());
        if (std::find(picked.begin(), picked.end(), j) == picked.end())
            picked.push_back(j);
    }
    std::vector<Point> centers;
    std::vector<double> coeffs;
    for (std::size_t i = 0; i < picked.size(); ++i) {
        centers.push_back(domain[picked[i]]);
        coeffs.push_back(standard_normal(seed, streams::rkhs_coeffs, i));
    }
    return scale_to_norm(make_function(kernel, std::move(centers), std::move(coeffs)), B);
}

}  // namespace gpbandit
