#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

#include "gpbandit/gp.hpp"
#include "gpbandit/kernels.hpp"

namespace gpbandit {

// Computable stand-in for the maximum information gain, which is a max over
// all size-T point sequences and intractable exactly. lower is the gain the
// greedy selection achieves, upper = lower / (1 - 1/e) by submodularity.
struct MigBracket {
    double lower = 0.0;
    double upper = 0.0;
};

// 1/2 ln det(Sigma + K)/det(Sigma), evaluated as 1/2 ln det of the whitened
// matrix I + Sigma^{-1/2} K Sigma^{-1/2} so no determinant over/underflows.
inline double info_gain(const KernelSpec& kernel, const std::vector<Point>& X,
                        std::span<const double> noise_vars) {
    if (X.size() != noise_vars.size())
        throw std::invalid_argument("info_gain: |X| != |noise_vars|");
    for (double nv : noise_vars)
        if (!(nv > 0.0))
            throw std::invalid_argument("info_gain requires strictly positive noise variances");
    const auto n = static_cast<Eigen::Index>(X.size());
    if (n == 0)
        return 0.0;
    Eigen::MatrixXd B = gram_matrix(kernel, X);
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i)
        s(i) = 1.0 / std::sqrt(noise_vars[static_cast<std::size_t>(i)]);
    B = s.asDiagonal() * B * s.asDiagonal();
    B.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("info_gain: whitened matrix factorization failed");
    double half_logdet = 0.0;
    const auto& L = llt.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i)
        half_logdet += std::log(L(i, i));
    return half_logdet;
}

// Greedy information-gain accumulator over a fixed domain. Each step picks
// the candidate with the largest current posterior variance (which is the
// largest marginal gain when every step uses one shared noise level, and the
// surrogate we standardize on in the per-step noise case), pays that step's
// noise, and adds 1/2 ln(1 + var/noise) to the running total. Ties go to the
// lowest candidate index. Kept incremental because the adaptive confidence
// bound extends the same selection as the horizon grows.
class GreedyMig {
public:
    GreedyMig(KernelSpec kernel, std::vector<Point> domain, int capacity)
        : state_(std::move(kernel), std::move(domain), capacity) {}

    void extend(double noise_var) {
        if (!(noise_var > 0.0))
            throw std::invalid_argument("greedy MIG requires positive noise variance");
        const int j = state_.argmax_var();
        lower_ += 0.5 * std::log1p(state_.var(j) / noise_var);
        state_.add(j, 0.0, noise_var);
    }

    double lower() const { return lower_; }
    MigBracket bracket() const { return {lower_, lower_ / (1.0 - 1.0 / std::numbers::e)}; }
    int steps() const { return state_.size(); }
    const std::vector<int>& chosen() const { return state_.chosen(); }

private:
    DomainPosterior state_;
    double lower_ = 0.0;
};

inline MigBracket greedy_mig_bracket(const KernelSpec& kernel, const std::vector<Point>& domain,
                                     int T, double noise_var) {
    if (T < 1)
        throw std::invalid_argument("greedy_mig_bracket needs T >= 1");
    GreedyMig g(kernel, domain, T);
    for (int t = 0; t < T; ++t)
        g.extend(noise_var);
    return g.bracket();
}

// per-step noise variant; horizon is the schedule length
inline MigBracket greedy_mig_bracket(const KernelSpec& kernel, const std::vector<Point>& domain,
                                     std::span<const double> noise_vars) {
    if (noise_vars.empty())
        throw std::invalid_argument("greedy_mig_bracket needs at least one noise entry");
    GreedyMig g(kernel, domain, static_cast<int>(noise_vars.size()));
    for (double nv : noise_vars)
        g.extend(nv);
    return g.bracket();
}

// Number of steps whose pre-update posterior deviation exceeds the noise
// scale, |{t : sigma_{t-1}(x_t) > lambda}|, evaluated sequentially over the
// given ordering.
inline int epcl_count(const KernelSpec& kernel, const std::vector<Point>& X, double noise_var) {
    if (!(noise_var > 0.0))
        throw std::invalid_argument("epcl_count requires positive noise variance");
    PosteriorState st(kernel);
    int count = 0;
    for (const auto& x : X) {
        if (st.posterior_var(x) > noise_var)
            ++count;
        st.append(x, 0.0, noise_var);
    }
    return count;
}

inline int epcl_count_nonstationary(const KernelSpec& kernel, const std::vector<Point>& X,
                                    std::span<const double> noise_vars) {
    if (X.size() != noise_vars.size())
        throw std::invalid_argument("epcl_count_nonstationary: |X| != |noise_vars|");
    PosteriorState st(kernel);
    int count = 0;
    for (std::size_t t = 0; t < X.size(); ++t) {
        const double nv = noise_vars[t];
        if (!(nv > 0.0))
            throw std::invalid_argument("epcl_count_nonstationary requires positive noise");
        if (st.posterior_var(X[t]) > nv)
            ++count;
        st.append(X[t], 0.0, nv);
    }
    return count;
}

// Raising noise entrywise can only lose information. Returns whether the two
// gains are ordered that way (slack 1e-10); callers treat false as a failure.
inline bool mig_monotonicity_check(const KernelSpec& kernel, const std::vector<Point>& X,
                                   std::span<const double> noise_vars_a,
                                   std::span<const double> noise_vars_b) {
    if (noise_vars_a.size() != noise_vars_b.size())
        throw std::invalid_argument("mig_monotonicity_check: schedule lengths differ");
    for (std::size_t i = 0; i < noise_vars_a.size(); ++i)
        if (noise_vars_a[i] > noise_vars_b[i])
            throw std::invalid_argument("mig_monotonicity_check expects a <= b entrywise");
    return info_gain(kernel, X, noise_vars_a) >= info_gain(kernel, X, noise_vars_b) - 1e-10;
}

}  // namespace gpbandit
