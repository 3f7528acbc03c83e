#pragma once

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gpbandit/kernels.hpp"

namespace gpbandit {

// Added to every diagonal entry before factorization. Keeps the noiseless
// lambda = 0 regime (and repeated selections of one point) solvable without
// branching, and sits far below every tolerance used by the test suites.
constexpr double kJitter = 1e-10;

struct Observation {
    Point x;
    double y = 0.0;
    double noise_var = 0.0;  // lambda_t^2, may be 0
};

struct CholeskyError : std::runtime_error {
    int pivot_index;
    explicit CholeskyError(int idx)
        : std::runtime_error("Cholesky breakdown at pivot " + std::to_string(idx)),
          pivot_index(idx) {}
};

// Heteroscedastic GP posterior over a growing observation set.
//
// Keeps the lower Cholesky factor L of A = K + diag(noise_var) + jitter I in
// packed row-major form (row t holds t+1 entries) together with z = L^{-1} y.
// Appending an observation is a bordered update, O(n^2); mean and variance
// queries forward-solve against the factor, O(n^2) per point.
//
//   mean(x) = k(x,X)^T A^{-1} y = (L^{-1} k)^T z
//   var(x)  = k(x,x) - |L^{-1} k|^2
class PosteriorState {
public:
    explicit PosteriorState(KernelSpec kernel) : kernel_(std::move(kernel)) {
        kernel_.validate();
    }

    int size() const { return static_cast<int>(obs_.size()); }
    const KernelSpec& kernel() const { return kernel_; }
    const std::vector<Observation>& observations() const { return obs_; }

    void append(Point x, double y, double noise_var) {
        if (!(noise_var >= 0.0))
            throw std::invalid_argument("noise_var must be nonnegative");
        if (!std::isfinite(y))
            throw std::invalid_argument("observation value must be finite");
        const int m = size();
        std::vector<double> row(static_cast<std::size_t>(m) + 1);
        forward_solve_k(x, row.data());
        double dot = 0.0;
        for (int i = 0; i < m; ++i)
            dot += row[i] * row[i];
        const double ann = kernel_eval(kernel_, x, x) + noise_var + kJitter;
        const double pivot2 = ann - dot;
        if (!(pivot2 > 0.0))
            throw CholeskyError(m);
        row[m] = std::sqrt(pivot2);
        double zd = 0.0;
        for (int i = 0; i < m; ++i)
            zd += row[i] * z_[i];
        z_.push_back((y - zd) / row[m]);
        chol_.insert(chol_.end(), row.begin(), row.end());
        obs_.push_back({std::move(x), y, noise_var});
    }

    void append(const Observation& o) { append(o.x, o.y, o.noise_var); }

    double posterior_mean(const Point& x) const {
        const int m = size();
        if (m == 0)
            return 0.0;
        std::vector<double> v(static_cast<std::size_t>(m));
        forward_solve_k(x, v.data());
        double s = 0.0;
        for (int i = 0; i < m; ++i)
            s += v[i] * z_[i];
        return s;
    }

    double posterior_var(const Point& x) const {
        const double kxx = kernel_eval(kernel_, x, x);
        const int m = size();
        if (m == 0)
            return kxx;
        std::vector<double> v(static_cast<std::size_t>(m));
        forward_solve_k(x, v.data());
        double s = 0.0;
        for (int i = 0; i < m; ++i)
            s += v[i] * v[i];
        const double raw = kxx - s;
        assert(raw >= -1e-9);
        return raw < 0.0 ? 0.0 : raw;
    }

    // packed lower factor, row t at offset t(t+1)/2 with t+1 entries
    const std::vector<double>& packed_chol() const { return chol_; }
    const std::vector<double>& solved_y() const { return z_; }

private:
    // out[i] = (k(x, x_i) - sum_{j<i} L_ij out[j]) / L_ii
    void forward_solve_k(const Point& x, double* out) const {
        const int m = size();
        const double* L = chol_.data();
        std::size_t off = 0;
        for (int i = 0; i < m; ++i) {
            double s = kernel_eval(kernel_, x, obs_[i].x);
            for (int j = 0; j < i; ++j)
                s -= L[off + j] * out[j];
            out[i] = s / L[off + i];
            off += static_cast<std::size_t>(i) + 1;
        }
    }

    KernelSpec kernel_;
    std::vector<Observation> obs_;
    std::vector<double> chol_;
    std::vector<double> z_;
};

inline PosteriorState empty_posterior(KernelSpec kernel) {
    return PosteriorState(std::move(kernel));
}

inline PosteriorState update(const PosteriorState& state, const Observation& obs) {
    PosteriorState next = state;
    next.append(obs);
    return next;
}

inline double posterior_mean(const PosteriorState& state, const Point& x) {
    return state.posterior_mean(x);
}

inline double posterior_var(const PosteriorState& state, const Point& x) {
    return state.posterior_var(x);
}

// Incremental posterior restricted to a fixed candidate list.
//
// Selection loops need mean and variance at every candidate after every
// update. Forward-solving each query against the factor costs O(t^2) per
// point; instead we cache, for each candidate x, the solved vector
// v_x = L^{-1} k(x, X_t) and extend all of them by one entry per update
// (O(n t) per step overall). Variances are maintained as running
// k(x,x) - |v_x|^2. For a candidate that gets selected, its cached column is
// exactly the new Cholesky row, so no extra solve is ever needed.
class DomainPosterior {
public:
    DomainPosterior(KernelSpec kernel, std::vector<Point> domain, int capacity)
        : kernel_(std::move(kernel)),
          domain_(std::move(domain)),
          cap_(capacity) {
        kernel_.validate();
        if (domain_.empty())
            throw std::invalid_argument("DomainPosterior needs a nonempty domain");
        if (cap_ < 0)
            throw std::invalid_argument("negative capacity");
        const std::size_t n = domain_.size();
        kdiag_.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            kdiag_[j] = kernel_eval(kernel_, domain_[j], domain_[j]);
        svar_ = kdiag_;
        v_.assign(n * static_cast<std::size_t>(cap_), 0.0);
        z_.reserve(static_cast<std::size_t>(cap_));
        lrow_.resize(static_cast<std::size_t>(cap_));
        chosen_.reserve(static_cast<std::size_t>(cap_));
    }

    int size() const { return m_; }
    int domain_size() const { return static_cast<int>(domain_.size()); }
    const std::vector<Point>& domain() const { return domain_; }
    const KernelSpec& kernel() const { return kernel_; }
    const std::vector<int>& chosen() const { return chosen_; }

    double var(int j) const {
        const double raw = svar_[static_cast<std::size_t>(j)];
        assert(raw >= -1e-9);
        return raw < 0.0 ? 0.0 : raw;
    }
    double stddev(int j) const { return std::sqrt(var(j)); }

    double mean(int j) const {
        const double* col = v_.data() + static_cast<std::size_t>(j) * cap_;
        double s = 0.0;
        for (int i = 0; i < m_; ++i)
            s += col[i] * z_[i];
        return s;
    }

    // ties go to the lowest index, everywhere
    int argmax_var() const {
        int best = 0;
        for (int j = 1; j < domain_size(); ++j)
            if (svar_[static_cast<std::size_t>(j)] > svar_[static_cast<std::size_t>(best)])
                best = j;
        return best;
    }

    int argmax_mean() const {
        int best = 0;
        double bv = mean(0);
        for (int j = 1; j < domain_size(); ++j) {
            const double mj = mean(j);
            if (mj > bv) {
                best = j;
                bv = mj;
            }
        }
        return best;
    }

    double max_var() const { return var(argmax_var()); }

    double max_stddev() const { return std::sqrt(max_var()); }

    void add(int j, double y, double noise_var) {
        if (j < 0 || j >= domain_size())
            throw std::out_of_range("candidate index out of range");
        if (!(noise_var >= 0.0))
            throw std::invalid_argument("noise_var must be nonnegative");
        if (m_ >= cap_)
            throw std::logic_error("DomainPosterior capacity exceeded");
        const int m = m_;
        const std::size_t n = domain_.size();
        const double* colj = v_.data() + static_cast<std::size_t>(j) * cap_;
        double ll = 0.0;
        for (int i = 0; i < m; ++i) {
            lrow_[static_cast<std::size_t>(i)] = colj[i];
            ll += colj[i] * colj[i];
        }
        const double pivot2 = kdiag_[static_cast<std::size_t>(j)] + noise_var + kJitter - ll;
        if (!(pivot2 > 0.0))
            throw CholeskyError(m);
        const double p = std::sqrt(pivot2);
        const Point& xj = domain_[static_cast<std::size_t>(j)];
        for (std::size_t q = 0; q < n; ++q) {
            double s = kernel_eval(kernel_, xj, domain_[q]);
            double* col = v_.data() + q * cap_;
            for (int i = 0; i < m; ++i)
                s -= lrow_[static_cast<std::size_t>(i)] * col[i];
            const double nv = s / p;
            col[m] = nv;
            svar_[q] -= nv * nv;
        }
        double zd = 0.0;
        for (int i = 0; i < m; ++i)
            zd += lrow_[static_cast<std::size_t>(i)] * z_[i];
        z_.push_back((y - zd) / p);
        chosen_.push_back(j);
        ++m_;
    }

private:
    KernelSpec kernel_;
    std::vector<Point> domain_;
    int cap_ = 0;
    int m_ = 0;
    std::vector<double> kdiag_;
    std::vector<double> svar_;
    std::vector<double> v_;  // column-major, column j = solved vector of candidate j
    std::vector<double> z_;
    std::vector<double> lrow_;
    std::vector<int> chosen_;
};

}  // namespace gpbandit
