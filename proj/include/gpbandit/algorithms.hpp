#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "gpbandit/envs.hpp"
#include "gpbandit/gp.hpp"
#include "gpbandit/infogain.hpp"

namespace gpbandit {

// ---------------------------------------------------------------------------
// Confidence widths

inline double beta_noiseless(double B) {
    if (!(B > 0.0))
        throw std::invalid_argument("beta_noiseless: B must be positive");
    return B;
}

// per-batch width for a fixed (noise-independent) design with common noise
// level lambda: B + (rho/lambda) sqrt(2 ln(2|X|/delta))
inline double fixed_noisy_width(double B, double rho, double lambda2, int domain_size,
                                double delta) {
    if (!(B >= 0.0) || !(rho >= 0.0))
        throw std::invalid_argument("fixed_noisy_width: B and rho must be nonnegative");
    if (!(lambda2 > 0.0))
        throw std::invalid_argument("fixed_noisy_width: lambda2 must be positive");
    if (domain_size < 1)
        throw std::invalid_argument("fixed_noisy_width: empty domain");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("fixed_noisy_width: delta must lie in (0,1)");
    return B + rho / std::sqrt(lambda2) *
                   std::sqrt(2.0 * std::log(2.0 * domain_size / delta));
}

// same, matched noise scale (lambda_t = rho_t): B + sqrt(2 ln(2|X|/delta))
inline double fixed_nsv_width(double B, int domain_size, double delta) {
    if (!(B >= 0.0))
        throw std::invalid_argument("fixed_nsv_width: B must be nonnegative");
    if (domain_size < 1)
        throw std::invalid_argument("fixed_nsv_width: empty domain");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("fixed_nsv_width: delta must lie in (0,1)");
    return B + std::sqrt(2.0 * std::log(2.0 * domain_size / delta));
}

// (B + rho/lambda) sqrt(2 ln(2|X|(1+log2 T)/delta)); the 1+log2 T factor is
// the delta split across the doubling batches
inline double beta_noisy_pe(double B, double rho, double lambda2, int domain_size, double delta,
                            int horizon) {
    if (!(B >= 0.0) || !(rho >= 0.0))
        throw std::invalid_argument("beta_noisy_pe: B and rho must be nonnegative");
    if (!(lambda2 > 0.0))
        throw std::invalid_argument("beta_noisy_pe: lambda2 must be positive");
    if (domain_size < 1 || horizon < 1)
        throw std::invalid_argument("beta_noisy_pe: domain_size and horizon must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("beta_noisy_pe: delta must lie in (0,1)");
    const double batches = 1.0 + std::log2(static_cast<double>(horizon));
    return (B + rho / std::sqrt(lambda2)) *
           std::sqrt(2.0 * std::log(2.0 * domain_size * batches / delta));
}

// B + sqrt(2 ln(2|X|(1+log2 T)/delta)), the additive variance-aware form
inline double beta_nsv(double B, int domain_size, double delta, int horizon) {
    if (horizon < 1)
        throw std::invalid_argument("beta_nsv: horizon must be >= 1");
    const double batches = 1.0 + std::log2(static_cast<double>(horizon));
    return fixed_nsv_width(B, domain_size, delta / batches);
}

// B + sqrt(2 mig_upper + 2 ln(1/delta)). realized_gain rides along purely as
// a diagnostic; the width itself charges the bracket upper value.
inline double beta_adaptive(double B, double delta, double realized_gain, double mig_upper) {
    if (!(B >= 0.0))
        throw std::invalid_argument("beta_adaptive: B must be nonnegative");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("beta_adaptive: delta must lie in (0,1)");
    if (!(realized_gain >= 0.0) || !(mig_upper >= 0.0))
        throw std::invalid_argument("beta_adaptive: gains must be nonnegative");
    (void)realized_gain;
    return B + std::sqrt(2.0 * mig_upper + 2.0 * std::log(1.0 / delta));
}

// default exploration noise for the fixed-variance MVR regimes: lambda^2 = c/B^2
inline double mvr_default_lambda2(double B, double c = 1.0) {
    if (!(B > 0.0) || !(c > 0.0))
        throw std::invalid_argument("mvr_default_lambda2: B and c must be positive");
    return c / (B * B);
}

struct NoiselessDeterministic {
    double B = 1.0;
};
struct NoisyFixed {
    double B = 1.0;
    double rho = 1.0;
    double lambda2 = 1.0;
    int domain_size = 2;
    double delta = 0.1;
    int horizon = 1;
};
struct NsvFixed {
    double B = 1.0;
    int domain_size = 2;
    double delta = 0.1;
    int horizon = 1;
};
// Width produced per step by the UCB runner: the mig term comes from the
// greedy bracket over the realized noise multiset, refreshed at powers of two.
struct AdaptiveHetero {
    double B = 1.0;
    double delta = 0.1;
};

using ConfidenceSetting =
    std::variant<NoiselessDeterministic, NoisyFixed, NsvFixed, AdaptiveHetero>;

inline double beta_half_for(const ConfidenceSetting& c) {
    if (const auto* nd = std::get_if<NoiselessDeterministic>(&c))
        return beta_noiseless(nd->B);
    if (const auto* nf = std::get_if<NoisyFixed>(&c))
        return beta_noisy_pe(nf->B, nf->rho, nf->lambda2, nf->domain_size, nf->delta,
                             nf->horizon);
    if (const auto* ns = std::get_if<NsvFixed>(&c))
        return beta_nsv(ns->B, ns->domain_size, ns->delta, ns->horizon);
    throw std::invalid_argument("adaptive confidence width is produced per step by the runner");
}

// ---------------------------------------------------------------------------
// Algorithm configs

struct MvrConfig {
    double lambda2 = 1.0;
};
struct PeConfig {
    ConfidenceSetting confidence;
    double lambda2 = 0.0;
    int N1 = 8;
};
struct VaMvrConfig {};
struct VaPeConfig {
    ConfidenceSetting confidence;
    int N1 = 8;
};
struct VaGpUcbConfig {
    AdaptiveHetero confidence;
    double zeta2 = 1e-3;
};

using AlgoConfig = std::variant<MvrConfig, PeConfig, VaMvrConfig, VaPeConfig, VaGpUcbConfig>;

// ---------------------------------------------------------------------------
// Runners

namespace detail {

// Shared MVR loop. lam2_of(t, rho2) decides the noise charged to the
// posterior at step t; selection never touches y.
template <typename Lam2Fn>
RunRecord mvr_impl(const BanditEnv& env, int T, Lam2Fn lam2_of) {
    if (T < 1)
        throw std::invalid_argument("run needs T >= 1");
    DomainPosterior post(env.f.kernel, env.domain, T);
    RunRecord rec;
    rec.steps.reserve(static_cast<std::size_t>(T));
    std::vector<char> seen(env.domain.size(), 0);
    double cum = 0.0;
    for (int t = 1; t <= T; ++t) {
        const int j = post.argmax_var();
        const auto [y, rho2] = observe(env, t, j);
        const double lam2 = lam2_of(t, rho2);
        if (seen[static_cast<std::size_t>(j)] && lam2 == 0.0)
            rec.duplicate_zero_noise = true;
        seen[static_cast<std::size_t>(j)] = 1;
        post.add(j, y, lam2);
        const double inst = env.fstar - env.fvals[static_cast<std::size_t>(j)];
        cum += inst;
        rec.steps.push_back({t, j, y, rho2, lam2, post.max_stddev(), inst, cum});
    }
    rec.recommendation = post.argmax_mean();
    rec.simple_regret = env.fstar - env.fvals[static_cast<std::size_t>(rec.recommendation)];
    return rec;
}

}  // namespace detail

inline RunRecord run_mvr(const BanditEnv& env, int T, double lambda2) {
    if (!(lambda2 >= 0.0))
        throw std::invalid_argument("run_mvr: lambda2 must be nonnegative");
    return detail::mvr_impl(env, T, [lambda2](int, double) { return lambda2; });
}

inline RunRecord run_va_mvr(const BanditEnv& env, int T) {
    return detail::mvr_impl(env, T, [](int, double rho2) { return rho2; });
}

struct PeTrace {
    std::vector<std::vector<int>> survivors_after_batch;  // full batches only
    std::vector<double> batch_sigma_max;                  // at batch end, pre-elimination
    std::vector<int> batch_sizes;
    std::vector<char> batch_full;
};

namespace detail {

template <typename Lam2Fn>
RunRecord pe_impl(const BanditEnv& env, int T, double beta_half, int N1, Lam2Fn lam2_of,
                  PeTrace* trace) {
    if (T < 1)
        throw std::invalid_argument("run needs T >= 1");
    if (N1 < 1)
        throw std::invalid_argument("PE needs N1 >= 1");
    if (!(beta_half > 0.0))
        throw std::invalid_argument("PE needs a positive confidence width");
    const int n = static_cast<int>(env.domain.size());
    std::vector<int> live(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        live[static_cast<std::size_t>(j)] = j;

    RunRecord rec;
    rec.steps.reserve(static_cast<std::size_t>(T));
    std::vector<char> seen(env.domain.size(), 0);
    double cum = 0.0;
    int t_global = 0;
    long batch_target = N1;

    // last completed batch, for the recommendation
    int last_full_argmax_lcb = -1;
    // only the final batch can be partial; kept around as the fallback when no
    // batch ever completes
    std::optional<DomainPosterior> partial_state;
    std::vector<int> partial_live;

    std::vector<Point> subdomain;

    while (t_global < T) {
        const int bs = static_cast<int>(std::min<long>(batch_target, T - t_global));
        subdomain.clear();
        subdomain.reserve(live.size());
        for (int j : live)
            subdomain.push_back(env.domain[static_cast<std::size_t>(j)]);
        DomainPosterior bp(env.f.kernel, subdomain, bs);
        for (int s = 0; s < bs; ++s) {
            const int jj = bp.argmax_var();
            const int j = live[static_cast<std::size_t>(jj)];
            ++t_global;
            const auto [y, rho2] = observe(env, t_global, j);
            const double lam2 = lam2_of(t_global, rho2);
            if (seen[static_cast<std::size_t>(j)] && lam2 == 0.0)
                rec.duplicate_zero_noise = true;
            seen[static_cast<std::size_t>(j)] = 1;
            bp.add(jj, y, lam2);
            const double inst = env.fstar - env.fvals[static_cast<std::size_t>(j)];
            cum += inst;
            rec.steps.push_back({t_global, j, y, rho2, lam2, bp.max_stddev(), inst, cum});
        }
        const bool full = bs == batch_target;
        if (trace) {
            trace->batch_sizes.push_back(bs);
            trace->batch_full.push_back(full ? 1 : 0);
            trace->batch_sigma_max.push_back(bp.max_stddev());
        }
        if (full) {
            // eliminate: keep x with ucb(x) >= max lcb
            const int nl = static_cast<int>(live.size());
            double max_lcb = -std::numeric_limits<double>::infinity();
            int arg_lcb = 0;
            std::vector<double> lcb(static_cast<std::size_t>(nl)), ucb(static_cast<std::size_t>(nl));
            for (int jj = 0; jj < nl; ++jj) {
                const double mu = bp.mean(jj);
                const double sd = bp.stddev(jj);
                lcb[static_cast<std::size_t>(jj)] = mu - beta_half * sd;
                ucb[static_cast<std::size_t>(jj)] = mu + beta_half * sd;
                if (lcb[static_cast<std::size_t>(jj)] > max_lcb) {
                    max_lcb = lcb[static_cast<std::size_t>(jj)];
                    arg_lcb = jj;
                }
            }
            std::vector<int> next;
            for (int jj = 0; jj < nl; ++jj)
                if (ucb[static_cast<std::size_t>(jj)] >= max_lcb)
                    next.push_back(live[static_cast<std::size_t>(jj)]);
            assert(!next.empty());
            last_full_argmax_lcb = live[static_cast<std::size_t>(arg_lcb)];
            live = std::move(next);
            if (trace)
                trace->survivors_after_batch.push_back(live);
        } else {
            // truncated final batch: no elimination
            partial_live = live;
            partial_state.emplace(std::move(bp));
        }
        batch_target *= 2;
    }

    if (last_full_argmax_lcb >= 0) {
        rec.recommendation = last_full_argmax_lcb;
    } else {
        // budget ended inside the very first batch; fall back to the posterior
        // mean over whatever was observed
        assert(partial_state.has_value());
        rec.recommendation = partial_live[static_cast<std::size_t>(partial_state->argmax_mean())];
    }
    rec.simple_regret = env.fstar - env.fvals[static_cast<std::size_t>(rec.recommendation)];
    return rec;
}

}  // namespace detail

inline RunRecord run_pe(const BanditEnv& env, int T, const PeConfig& cfg,
                        PeTrace* trace = nullptr) {
    if (!(cfg.lambda2 >= 0.0))
        throw std::invalid_argument("run_pe: lambda2 must be nonnegative");
    const double bh = beta_half_for(cfg.confidence);
    return detail::pe_impl(env, T, bh, cfg.N1, [&cfg](int, double) { return cfg.lambda2; },
                           trace);
}

inline RunRecord run_va_pe(const BanditEnv& env, int T, const VaPeConfig& cfg,
                           PeTrace* trace = nullptr) {
    const double bh = beta_half_for(cfg.confidence);
    return detail::pe_impl(env, T, bh, cfg.N1, [](int, double rho2) { return rho2; }, trace);
}

struct UcbTrace {
    std::vector<double> beta_half;   // per step, at selection time
    std::vector<double> lcb_chosen;  // lcb_t(x_t)
    double mig_lower_final = 0.0;
    double mig_upper_final = 0.0;
};

// Optimistic selection under the adaptive width. The mig term tracks the
// greedy bracket over the realized lambda multiset; it is extended up to
// Sigma_{t-1} whenever t-1 reaches a power of two, which keeps the width
// non-decreasing while costing one greedy sweep per run overall.
inline RunRecord run_va_gp_ucb(const BanditEnv& env, int T, const VaGpUcbConfig& cfg,
                               UcbTrace* trace = nullptr) {
    if (T < 1)
        throw std::invalid_argument("run needs T >= 1");
    if (!(cfg.zeta2 > 0.0))
        throw std::invalid_argument("run_va_gp_ucb: zeta2 must be positive");
    const double B = cfg.confidence.B;
    const double delta = cfg.confidence.delta;
    DomainPosterior post(env.f.kernel, env.domain, T);
    GreedyMig gamma(env.f.kernel, env.domain, T);
    std::vector<double> lam_hist;
    lam_hist.reserve(static_cast<std::size_t>(T));
    double mig_upper = 0.0;

    RunRecord rec;
    rec.steps.reserve(static_cast<std::size_t>(T));
    const int n = static_cast<int>(env.domain.size());
    double cum = 0.0;
    double best_lcb = -std::numeric_limits<double>::infinity();
    auto is_pow2 = [](int v) { return v > 0 && (v & (v - 1)) == 0; };

    for (int t = 1; t <= T; ++t) {
        if (t > 1 && is_pow2(t - 1)) {
            while (gamma.steps() < t - 1)
                gamma.extend(lam_hist[static_cast<std::size_t>(gamma.steps())]);
            mig_upper = gamma.bracket().upper;
        }
        const double bh = beta_adaptive(B, delta, gamma.lower(), mig_upper);
        int j = 0;
        double best_ucb = -std::numeric_limits<double>::infinity();
        for (int q = 0; q < n; ++q) {
            const double u = post.mean(q) + bh * post.stddev(q);
            if (u > best_ucb) {
                best_ucb = u;
                j = q;
            }
        }
        const double lcb_t = post.mean(j) - bh * post.stddev(j);
        if (lcb_t > best_lcb) {
            best_lcb = lcb_t;
            rec.recommendation = j;
        }
        const auto [y, rho2] = observe(env, t, j);
        const double lam2 = std::max(rho2, cfg.zeta2);
        post.add(j, y, lam2);
        lam_hist.push_back(lam2);
        const double inst = env.fstar - env.fvals[static_cast<std::size_t>(j)];
        cum += inst;
        rec.steps.push_back({t, j, y, rho2, lam2, post.max_stddev(), inst, cum});
        if (trace) {
            trace->beta_half.push_back(bh);
            trace->lcb_chosen.push_back(lcb_t);
        }
    }
    rec.simple_regret = env.fstar - env.fvals[static_cast<std::size_t>(rec.recommendation)];
    if (trace) {
        trace->mig_lower_final = gamma.lower();
        trace->mig_upper_final = mig_upper;
    }
    return rec;
}

inline RunRecord run_algorithm(const BanditEnv& env, int T, const AlgoConfig& cfg) {
    if (const auto* m = std::get_if<MvrConfig>(&cfg))
        return run_mvr(env, T, m->lambda2);
    if (const auto* p = std::get_if<PeConfig>(&cfg))
        return run_pe(env, T, *p);
    if (std::get_if<VaMvrConfig>(&cfg))
        return run_va_mvr(env, T);
    if (const auto* vp = std::get_if<VaPeConfig>(&cfg))
        return run_va_pe(env, T, *vp);
    return run_va_gp_ucb(env, T, std::get<VaGpUcbConfig>(cfg));
}

}  // namespace gpbandit
