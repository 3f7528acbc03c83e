#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "gpbandit/random.hpp"
#include "gpbandit/rkhs.hpp"

namespace gpbandit {

struct Noiseless {};
struct Stationary {
    double rho2 = 1.0;
};
// rho_t^2 = c * t^{-p}
struct PowerDecay {
    double c = 1.0;
    double p = 1.0;
};
struct Explicit {
    std::vector<double> rho2_seq;
};

using NoiseSchedule = std::variant<Noiseless, Stationary, PowerDecay, Explicit>;

inline void validate_schedule(const NoiseSchedule& s) {
    if (const auto* st = std::get_if<Stationary>(&s)) {
        if (!(st->rho2 >= 0.0))
            throw std::invalid_argument("Stationary rho2 must be >= 0");
    } else if (const auto* pd = std::get_if<PowerDecay>(&s)) {
        if (!(pd->c > 0.0) || !(pd->p >= 0.0))
            throw std::invalid_argument("PowerDecay needs c > 0 and p >= 0");
    } else if (const auto* ex = std::get_if<Explicit>(&s)) {
        for (double v : ex->rho2_seq)
            if (!(v >= 0.0))
                throw std::invalid_argument("Explicit schedule entries must be >= 0");
    }
}

// rho_t^2 for 1-based t
inline double noise_var_at(const NoiseSchedule& s, int t) {
    if (t < 1)
        throw std::invalid_argument("step index must be >= 1");
    if (std::holds_alternative<Noiseless>(s))
        return 0.0;
    if (const auto* st = std::get_if<Stationary>(&s))
        return st->rho2;
    if (const auto* pd = std::get_if<PowerDecay>(&s))
        return pd->c * std::pow(static_cast<double>(t), -pd->p);
    const auto& seq = std::get<Explicit>(s).rho2_seq;
    if (static_cast<std::size_t>(t) > seq.size())
        throw std::invalid_argument("Explicit noise schedule shorter than requested step");
    return seq[static_cast<std::size_t>(t) - 1];
}

// V_T = sum_{t<=T} rho_t^2
inline double cumulative_variance(const NoiseSchedule& s, int T) {
    if (T < 1)
        throw std::invalid_argument("cumulative_variance needs T >= 1");
    double v = 0.0;
    for (int t = 1; t <= T; ++t)
        v += noise_var_at(s, t);
    return v;
}

struct BanditEnv {
    std::vector<Point> domain;
    RkhsFunction f;
    NoiseSchedule schedule;
    std::uint64_t seed = 0;
    std::vector<double> fvals;  // f enumerated over the domain
    int xstar = 0;
    double fstar = 0.0;
};

inline BanditEnv make_env(std::vector<Point> domain, RkhsFunction f, NoiseSchedule schedule,
                          std::uint64_t seed) {
    if (domain.size() < 2)
        throw std::invalid_argument("environment domain needs at least 2 points");
    validate_schedule(schedule);
    BanditEnv env{std::move(domain), std::move(f), std::move(schedule), seed, {}, 0, 0.0};
    env.fvals.reserve(env.domain.size());
    for (const auto& x : env.domain)
        env.fvals.push_back(eval(env.f, x));
    for (std::size_t j = 1; j < env.fvals.size(); ++j)
        if (env.fvals[j] > env.fvals[static_cast<std::size_t>(env.xstar)])
            env.xstar = static_cast<int>(j);
    env.fstar = env.fvals[static_cast<std::size_t>(env.xstar)];
    return env;
}

// y_t = f(x) + eps_t. The noise draw is keyed by (seed, t) only, never by x,
// so replaying an environment at the same step indices yields identical
// realizations whatever the algorithm queried; selection rules that never
// read y therefore produce input sequences independent of the noise.
inline std::pair<double, double> observe(const BanditEnv& env, int t, int x_index) {
    if (x_index < 0 || static_cast<std::size_t>(x_index) >= env.domain.size())
        throw std::out_of_range("observe: point not in domain");
    const double rho2 = noise_var_at(env.schedule, t);
    double y = env.fvals[static_cast<std::size_t>(x_index)];
    if (rho2 > 0.0)
        y += std::sqrt(rho2) *
             standard_normal(env.seed, streams::noise, static_cast<std::uint64_t>(t));
    return {y, rho2};
}

struct StepRow {
    int t = 0;
    int x_index = 0;
    double y = 0.0;
    double rho2 = 0.0;
    double lambda2 = 0.0;    // noise variance the algorithm charged this step
    double sigma_max = 0.0;  // max posterior std over the live candidate set, post-update
    double inst_regret = 0.0;
    double cum_regret = 0.0;
};

struct RunRecord {
    std::vector<StepRow> steps;
    int recommendation = -1;
    double simple_regret = 0.0;
    bool duplicate_zero_noise = false;  // some point re-selected while charged lambda^2 = 0
};

// Rebuilds the regret bookkeeping for a chosen sequence. y and rho2 are
// replayed through observe (same seeded stream the algorithms see); lambda2
// and sigma_max are left at 0, they belong to the runner that did the
// selecting. Regret is computed on f, the noise never enters it.
inline RunRecord regret_accumulate(const BanditEnv& env, const std::vector<int>& chosen,
                                   int recommendation) {
    if (recommendation < 0 || static_cast<std::size_t>(recommendation) >= env.domain.size())
        throw std::out_of_range("recommendation not in domain");
    RunRecord rec;
    rec.steps.reserve(chosen.size());
    double cum = 0.0;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const int t = static_cast<int>(i) + 1;
        const int j = chosen[i];
        const auto [y, rho2] = observe(env, t, j);
        const double inst = env.fstar - env.fvals[static_cast<std::size_t>(j)];
        cum += inst;
        rec.steps.push_back({t, j, y, rho2, 0.0, 0.0, inst, cum});
    }
    rec.recommendation = recommendation;
    rec.simple_regret = env.fstar - env.fvals[static_cast<std::size_t>(recommendation)];
    return rec;
}

// Axis-aligned grid over [0,1]^d, one count per axis, last axis fastest.
// Materialized eagerly; refuses desk-scale blowups.
inline std::vector<Point> make_grid(const std::vector<int>& dims) {
    if (dims.empty())
        throw std::invalid_argument("make_grid needs at least one axis");
    long total = 1;
    for (int n : dims) {
        if (n < 1)
            throw std::invalid_argument("grid axis counts must be >= 1");
        total *= n;
        if (total > 10000)
            throw std::invalid_argument("grid exceeds the 10^4 point cap");
    }
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(total));
    const auto d = dims.size();
    std::vector<int> idx(d, 0);
    for (long count = 0; count < total; ++count) {
        Point p(d);
        for (std::size_t k = 0; k < d; ++k)
            p[k] = dims[k] == 1 ? 0.0 : static_cast<double>(idx[k]) / (dims[k] - 1);
        pts.push_back(std::move(p));
        for (std::size_t k = d; k-- > 0;) {
            if (++idx[k] < dims[k])
                break;
            idx[k] = 0;
        }
    }
    return pts;
}

}  // namespace gpbandit
