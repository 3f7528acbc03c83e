#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gpbandit/algorithms.hpp"
#include "gpbandit/envs.hpp"
#include "gpbandit/gp.hpp"
#include "gpbandit/infogain.hpp"
#include "gpbandit/kernels.hpp"
#include "gpbandit/rkhs.hpp"

namespace gpbandit {

// 17 significant digits round-trips every double exactly
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double median_of(std::vector<double> v) {
    if (v.empty())
        throw std::invalid_argument("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty())
        throw std::invalid_argument("mean of an empty set");
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Verification reports

struct VerificationInstance {
    std::string label;
    double lhs = 0.0;
    double rhs = 0.0;
    bool applicable = true;  // precondition met; inapplicable instances never fail
    bool pass = true;
};

inline bool operator==(const VerificationInstance& a, const VerificationInstance& b) {
    return a.label == b.label && a.lhs == b.lhs && a.rhs == b.rhs &&
           a.applicable == b.applicable && a.pass == b.pass;
}

struct VerificationReport {
    std::string check;
    nlohmann::json params;
    std::string bracket_side;  // which side of the greedy bracket the bound uses
    std::vector<VerificationInstance> instances;
    bool pass = true;
};

inline bool operator==(const VerificationReport& a, const VerificationReport& b) {
    return a.check == b.check && a.params == b.params && a.bracket_side == b.bracket_side &&
           a.instances == b.instances && a.pass == b.pass;
}

inline nlohmann::json report_to_json(const VerificationReport& r) {
    nlohmann::json insts = nlohmann::json::array();
    for (const auto& i : r.instances)
        insts.push_back({{"label", i.label},
                         {"lhs", i.lhs},
                         {"rhs", i.rhs},
                         {"applicable", i.applicable},
                         {"pass", i.pass}});
    return {{"check", r.check},
            {"params", r.params},
            {"bracket_side", r.bracket_side},
            {"instances", insts},
            {"pass", r.pass}};
}

inline VerificationReport report_from_json(const nlohmann::json& j) {
    VerificationReport r;
    r.check = j.at("check").get<std::string>();
    r.params = j.at("params");
    r.bracket_side = j.at("bracket_side").get<std::string>();
    for (const auto& i : j.at("instances"))
        r.instances.push_back({i.at("label").get<std::string>(), i.at("lhs").get<double>(),
                               i.at("rhs").get<double>(), i.at("applicable").get<bool>(),
                               i.at("pass").get<bool>()});
    r.pass = j.at("pass").get<bool>();
    return r;
}

// ---------------------------------------------------------------------------
// Config JSON

namespace detail {

[[noreturn]] inline void cfg_error(const std::string& field, const std::string& what) {
    throw std::invalid_argument("config error: field '" + field + "': " + what);
}

inline const nlohmann::json& need(const nlohmann::json& j, const char* key, const char* ctx) {
    if (!j.is_object() || !j.contains(key))
        cfg_error(std::string(ctx) + "." + key, "missing");
    return j.at(key);
}

inline double need_num(const nlohmann::json& j, const char* key, const char* ctx) {
    const auto& v = need(j, key, ctx);
    if (!v.is_number())
        cfg_error(std::string(ctx) + "." + key, "must be a number");
    return v.get<double>();
}

inline int need_int(const nlohmann::json& j, const char* key, const char* ctx) {
    const auto& v = need(j, key, ctx);
    if (!v.is_number_integer())
        cfg_error(std::string(ctx) + "." + key, "must be an integer");
    return v.get<int>();
}

inline std::string need_str(const nlohmann::json& j, const char* key, const char* ctx) {
    const auto& v = need(j, key, ctx);
    if (!v.is_string())
        cfg_error(std::string(ctx) + "." + key, "must be a string");
    return v.get<std::string>();
}

}  // namespace detail

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
    KernelSpec k;
    const std::string fam = detail::need_str(j, "family", "kernel");
    if (fam == "se") {
        k.family = KernelFamily::SE;
        k.smoothness = 0.0;
    } else if (fam == "matern") {
        k.family = KernelFamily::Matern;
        k.smoothness = detail::need_num(j, "smoothness", "kernel");
    } else {
        detail::cfg_error("kernel.family", "must be \"se\" or \"matern\"");
    }
    k.lengthscale = detail::need_num(j, "lengthscale", "kernel");
    k.validate();
    return k;
}

inline nlohmann::json kernel_to_json(const KernelSpec& k) {
    nlohmann::json j{{"family", k.family == KernelFamily::SE ? "se" : "matern"},
                     {"lengthscale", k.lengthscale}};
    if (k.family == KernelFamily::Matern)
        j["smoothness"] = k.smoothness;
    return j;
}

inline std::vector<Point> domain_from_json(const nlohmann::json& j) {
    if (j.contains("grid")) {
        const auto& dims = detail::need(j.at("grid"), "dims", "domain.grid");
        if (!dims.is_array() || dims.empty())
            detail::cfg_error("domain.grid.dims", "must be a non-empty array of integers");
        std::vector<int> d;
        for (const auto& v : dims) {
            if (!v.is_number_integer())
                detail::cfg_error("domain.grid.dims", "must be a non-empty array of integers");
            d.push_back(v.get<int>());
        }
        return make_grid(d);
    }
    if (j.contains("points")) {
        const auto& pts = j.at("points");
        if (!pts.is_array() || pts.empty())
            detail::cfg_error("domain.points", "must be a non-empty array of coordinate arrays");
        std::vector<Point> out;
        for (const auto& p : pts) {
            if (!p.is_array() || p.empty())
                detail::cfg_error("domain.points", "each point must be a non-empty array");
            Point x;
            for (const auto& c : p)
                x.push_back(c.get<double>());
            out.push_back(std::move(x));
        }
        return out;
    }
    detail::cfg_error("domain", "needs either \"grid\" or \"points\"");
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    const std::string kind = detail::need_str(j, "kind", "noise");
    NoiseSchedule s;
    if (kind == "noiseless") {
        s = Noiseless{};
    } else if (kind == "stationary") {
        s = Stationary{detail::need_num(j, "rho2", "noise")};
    } else if (kind == "power") {
        s = PowerDecay{detail::need_num(j, "c", "noise"), detail::need_num(j, "p", "noise")};
    } else if (kind == "explicit") {
        const auto& seq = detail::need(j, "rho2_seq", "noise");
        if (!seq.is_array() || seq.empty())
            detail::cfg_error("noise.rho2_seq", "must be a non-empty array");
        Explicit e;
        for (const auto& v : seq)
            e.rho2_seq.push_back(v.get<double>());
        s = std::move(e);
    } else {
        detail::cfg_error("noise.kind", "must be noiseless|stationary|power|explicit");
    }
    validate_schedule(s);
    return s;
}

inline nlohmann::json schedule_to_json(const NoiseSchedule& s) {
    if (std::holds_alternative<Noiseless>(s))
        return {{"kind", "noiseless"}};
    if (const auto* st = std::get_if<Stationary>(&s))
        return {{"kind", "stationary"}, {"rho2", st->rho2}};
    if (const auto* pd = std::get_if<PowerDecay>(&s))
        return {{"kind", "power"}, {"c", pd->c}, {"p", pd->p}};
    return {{"kind", "explicit"}, {"rho2_seq", std::get<Explicit>(s).rho2_seq}};
}

inline nlohmann::json function_to_json(const RkhsFunction& f) {
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : f.centers)
        centers.push_back(c);
    return {{"kernel", kernel_to_json(f.kernel)},
            {"centers", centers},
            {"coeffs", f.coeffs},
            {"norm", f.norm}};
}

// "sample" draws from the kernel's unit ball scaled to B using env_seed; the
// explicit form takes centers and coefficients verbatim
inline RkhsFunction function_from_json(const nlohmann::json& j, const KernelSpec& kernel,
                                       const std::vector<Point>& domain,
                                       std::uint64_t env_seed) {
    if (j.contains("sample")) {
        const auto& s = j.at("sample");
        const int m = detail::need_int(s, "m", "function.sample");
        const double B = detail::need_num(s, "B", "function.sample");
        return sample_function(env_seed, kernel, m, B, domain);
    }
    if (j.contains("centers")) {
        std::vector<Point> centers;
        for (const auto& c : j.at("centers")) {
            Point x;
            for (const auto& v : c)
                x.push_back(v.get<double>());
            centers.push_back(std::move(x));
        }
        const auto& co = detail::need(j, "coeffs", "function");
        std::vector<double> coeffs;
        for (const auto& v : co)
            coeffs.push_back(v.get<double>());
        return make_function(kernel, centers, coeffs);
    }
    detail::cfg_error("function", "needs either \"sample\" or \"centers\"+\"coeffs\"");
}

// declared norm bound for a function config: the sampler's B, or the norm of
// an explicit expansion
inline double declared_bound(const nlohmann::json& function_json, const RkhsFunction& f) {
    if (function_json.contains("sample"))
        return detail::need_num(function_json.at("sample"), "B", "function.sample");
    return f.norm;
}

// ---------------------------------------------------------------------------
// Posterior deviation bound suites

namespace detail {

// One incremental pass of the variance recursion: selections come from the
// charged posterior, the thresholded quantities from the floored one, and the
// greedy bracket tracks the floored noise multiset. Horizons are captured on
// the way through, so one pass serves the whole T list.
inline VerificationReport lemma1_core(const KernelSpec& kernel, const std::vector<Point>& domain,
                                      const std::function<double(int)>& lam2_at,
                                      double count_mult, std::vector<int> T_list,
                                      std::string check_name, nlohmann::json params) {
    std::sort(T_list.begin(), T_list.end());
    T_list.erase(std::unique(T_list.begin(), T_list.end()), T_list.end());
    if (T_list.empty() || T_list.front() < 1)
        throw std::invalid_argument("deviation-bound verification needs horizons >= 1");
    const int Tmax = T_list.back();

    DomainPosterior charged(kernel, domain, Tmax);
    DomainPosterior floored(kernel, domain, Tmax);
    GreedyMig greedy(kernel, domain, Tmax);

    VerificationReport rep{std::move(check_name), std::move(params), "upper", {}, true};
    double chain = 0.0;   // realized information gain of the floored recursion
    double sum_lt2 = 0.0; // running sum of the floored noise variances
    int tau = 0;          // steps whose pre-update deviation is below the noise scale
    auto next_T = T_list.begin();
    char label[64];

    for (int t = 1; t <= Tmax; ++t) {
        const double l2 = lam2_at(t);
        if (!(l2 >= 0.0))
            throw std::invalid_argument("noise schedule produced a negative variance");
        const double lt2 = std::max(l2, kJitter);
        const int j = charged.argmax_var();
        const double var_t = floored.var(j);
        if (var_t <= lt2)
            ++tau;
        chain += 0.5 * std::log1p(var_t / lt2);
        sum_lt2 += lt2;
        charged.add(j, 0.0, l2);
        floored.add(j, 0.0, lt2);
        greedy.extend(lt2);

        if (next_T != T_list.end() && t == *next_T) {
            const double lhs = charged.max_stddev();

            std::snprintf(label, sizeof label, "T=%d chain", t);
            const bool app_a = tau > 0;
            const double rhs_a = app_a ? (2.0 / tau) * std::sqrt(sum_lt2 * chain) : 0.0;
            rep.instances.push_back(
                {label, lhs, rhs_a, app_a, !app_a || lhs <= rhs_a + 1e-9});

            std::snprintf(label, sizeof label, "T=%d display", t);
            const double gu = greedy.bracket().upper;
            const bool app_b = 0.5 * t >= count_mult * gu;
            const double rhs_b = (4.0 / t) * std::sqrt(sum_lt2 * gu);
            rep.instances.push_back({label, lhs, rhs_b, app_b, !app_b || lhs <= rhs_b});
            ++next_T;
        }
    }
    for (const auto& i : rep.instances)
        rep.pass = rep.pass && i.pass;
    return rep;
}

}  // namespace detail

inline VerificationReport verify_lemma1(const KernelSpec& kernel,
                                        const std::vector<Point>& domain, double lambda2,
                                        const std::vector<int>& T_list) {
    if (!(lambda2 > 0.0))
        throw std::invalid_argument("verify_lemma1 needs lambda2 > 0");
    nlohmann::json params{{"kernel", kernel_to_json(kernel)},
                          {"domain_size", domain.size()},
                          {"lambda2", lambda2},
                          {"T_list", T_list}};
    return detail::lemma1_core(
        kernel, domain, [lambda2](int) { return lambda2; }, 3.0, T_list,
        "posterior-deviation-bound", std::move(params));
}

inline VerificationReport verify_lemma1_nonstationary(const KernelSpec& kernel,
                                                      const std::vector<Point>& domain,
                                                      const NoiseSchedule& schedule,
                                                      const std::vector<int>& T_list) {
    validate_schedule(schedule);
    nlohmann::json params{{"kernel", kernel_to_json(kernel)},
                          {"domain_size", domain.size()},
                          {"noise", schedule_to_json(schedule)},
                          {"T_list", T_list}};
    return detail::lemma1_core(
        kernel, domain, [&schedule](int t) { return noise_var_at(schedule, t); }, 4.0, T_list,
        "posterior-deviation-bound-nsv", std::move(params));
}

// ---------------------------------------------------------------------------
// Potential count suites

enum class SelectionRule { Mvr, Random };

namespace detail {

// y-free selection sequence: pure uncertainty sampling after a seeded random
// start, or fully random picks. The count bound holds for any sequence, so
// the random rule is a stress case rather than an algorithm.
inline std::vector<int> verification_sequence(const KernelSpec& kernel,
                                              const std::vector<Point>& domain,
                                              SelectionRule rule,
                                              const std::function<double(int)>& lam2_at, int T,
                                              std::uint64_t seed) {
    DomainPosterior post(kernel, domain, T);
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        int j;
        if (rule == SelectionRule::Random || t == 1)
            j = static_cast<int>(uniform_index(seed, streams::sequence,
                                               static_cast<std::uint64_t>(t - 1),
                                               domain.size()));
        else
            j = post.argmax_var();
        post.add(j, 0.0, lam2_at(t));
        idx.push_back(j);
    }
    return idx;
}

inline std::vector<Point> points_of(const std::vector<Point>& domain,
                                    const std::vector<int>& idx) {
    std::vector<Point> out;
    out.reserve(idx.size());
    for (int j : idx)
        out.push_back(domain[static_cast<std::size_t>(j)]);
    return out;
}

inline const char* rule_name(SelectionRule r) {
    return r == SelectionRule::Mvr ? "mvr" : "random";
}

}  // namespace detail

inline VerificationReport verify_epcl(const KernelSpec& kernel, const std::vector<Point>& domain,
                                      SelectionRule rule, double lambda2, int T,
                                      const std::vector<std::uint64_t>& seeds) {
    if (!(lambda2 > 0.0))
        throw std::invalid_argument("verify_epcl needs lambda2 > 0");
    if (T < 1 || seeds.empty())
        throw std::invalid_argument("verify_epcl needs T >= 1 and at least one seed");
    const double gu = greedy_mig_bracket(kernel, domain, T, lambda2).upper;
    const double rhs = 3.0 * gu;
    VerificationReport rep{"potential-count",
                           {{"kernel", kernel_to_json(kernel)},
                            {"domain_size", domain.size()},
                            {"rule", detail::rule_name(rule)},
                            {"lambda2", lambda2},
                            {"T", T},
                            {"mig_upper", gu}},
                           "upper",
                           {},
                           true};
    char label[48];
    for (std::uint64_t seed : seeds) {
        const auto idx = detail::verification_sequence(
            kernel, domain, rule, [lambda2](int) { return lambda2; }, T, seed);
        const int count = epcl_count(kernel, detail::points_of(domain, idx), lambda2);
        std::snprintf(label, sizeof label, "seed=%llu",
                      static_cast<unsigned long long>(seed));
        rep.instances.push_back({label, static_cast<double>(count), rhs, true, count <= rhs});
        rep.pass = rep.pass && rep.instances.back().pass;
    }
    return rep;
}

inline VerificationReport verify_epcl_nonstationary(const KernelSpec& kernel,
                                                    const std::vector<Point>& domain,
                                                    SelectionRule rule,
                                                    const NoiseSchedule& schedule, int T,
                                                    const std::vector<std::uint64_t>& seeds) {
    validate_schedule(schedule);
    if (T < 1 || seeds.empty())
        throw std::invalid_argument("verify_epcl needs T >= 1 and at least one seed");
    // floor the per-step variances so every threshold is positive; raising
    // noise entrywise can only lose information, so the minimum floored level
    // upper-bounds the heteroscedastic gain
    std::vector<double> lt2(static_cast<std::size_t>(T));
    double lmin2 = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= T; ++t) {
        lt2[static_cast<std::size_t>(t - 1)] = std::max(noise_var_at(schedule, t), kJitter);
        lmin2 = std::min(lmin2, lt2[static_cast<std::size_t>(t - 1)]);
    }
    const double gu = greedy_mig_bracket(kernel, domain, T, lmin2).upper;
    const double rhs = 4.0 * gu;
    VerificationReport rep{"potential-count-nsv",
                           {{"kernel", kernel_to_json(kernel)},
                            {"domain_size", domain.size()},
                            {"rule", detail::rule_name(rule)},
                            {"noise", schedule_to_json(schedule)},
                            {"T", T},
                            {"mig_upper", gu},
                            {"lambda2_min", lmin2}},
                           "upper",
                           {},
                           true};
    char label[48];
    for (std::uint64_t seed : seeds) {
        const auto idx = detail::verification_sequence(
            kernel, domain, rule,
            [&lt2](int t) { return lt2[static_cast<std::size_t>(t - 1)]; }, T, seed);
        const int count =
            epcl_count_nonstationary(kernel, detail::points_of(domain, idx), lt2);
        std::snprintf(label, sizeof label, "seed=%llu",
                      static_cast<unsigned long long>(seed));
        rep.instances.push_back({label, static_cast<double>(count), rhs, true, count <= rhs});
        rep.pass = rep.pass && rep.instances.back().pass;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Confidence coverage suite

// Repeats a fixed y-independent design over fresh noise draws and measures
// how often the width fails to cover f somewhere on the domain at horizon T.
// The pass threshold allows delta plus three binomial standard deviations.
inline VerificationReport verify_coverage(const KernelSpec& kernel,
                                          const std::vector<Point>& domain,
                                          const RkhsFunction& f, const NoiseSchedule& schedule,
                                          const ConfidenceSetting& conf, int T, int runs,
                                          std::uint64_t seed0 = 1) {
    if (T < 1 || runs < 1)
        throw std::invalid_argument("verify_coverage needs T >= 1 and runs >= 1");
    validate_schedule(schedule);

    double width = 0.0;
    double delta = 0.0;
    double sel_lambda2 = 0.0;
    bool variance_matched = false;
    const int n = static_cast<int>(domain.size());
    std::string setting;

    if (const auto* nd = std::get_if<NoiselessDeterministic>(&conf)) {
        if (!std::holds_alternative<Noiseless>(schedule))
            detail::cfg_error("confidence", "deterministic width requires a noiseless schedule");
        if (nd->B < f.norm - 1e-9)
            detail::cfg_error("confidence.B", "below the function norm");
        width = beta_noiseless(nd->B);
        delta = 0.0;
        sel_lambda2 = 0.0;
        setting = "noiseless";
    } else if (const auto* nf = std::get_if<NoisyFixed>(&conf)) {
        const auto* st = std::get_if<Stationary>(&schedule);
        if (st == nullptr)
            detail::cfg_error("confidence", "fixed noisy width requires a stationary schedule");
        if (std::abs(nf->rho * nf->rho - st->rho2) > 1e-9 * std::max(1.0, st->rho2))
            detail::cfg_error("confidence.rho", "does not match the schedule's noise scale");
        if (nf->B < f.norm - 1e-9)
            detail::cfg_error("confidence.B", "below the function norm");
        width = fixed_noisy_width(nf->B, nf->rho, nf->lambda2, n, nf->delta);
        delta = nf->delta;
        sel_lambda2 = nf->lambda2;
        setting = "noisy-fixed";
    } else if (const auto* ns = std::get_if<NsvFixed>(&conf)) {
        if (ns->B < f.norm - 1e-9)
            detail::cfg_error("confidence.B", "below the function norm");
        width = fixed_nsv_width(ns->B, n, ns->delta);
        delta = ns->delta;
        variance_matched = true;
        setting = "nsv-fixed";
    } else {
        detail::cfg_error("confidence", "adaptive widths have no fixed-design coverage check");
    }

    // the selection never looks at y, so the design is shared by every run
    std::vector<int> seq;
    std::vector<double> lam2s;
    {
        DomainPosterior sel(kernel, domain, T);
        for (int t = 1; t <= T; ++t) {
            const int j = sel.argmax_var();
            const double l2 = variance_matched ? noise_var_at(schedule, t) : sel_lambda2;
            sel.add(j, 0.0, l2);
            seq.push_back(j);
            lam2s.push_back(l2);
        }
    }

    std::vector<double> fvals;
    fvals.reserve(domain.size());
    for (const auto& x : domain)
        fvals.push_back(eval(f, x));

    int violations = 0;
    for (int r = 0; r < runs; ++r) {
        BanditEnv env = make_env(domain, f, schedule, seed0 + static_cast<std::uint64_t>(r));
        DomainPosterior post(kernel, domain, T);
        for (int t = 1; t <= T; ++t) {
            const auto [y, rho2] = observe(env, t, seq[static_cast<std::size_t>(t - 1)]);
            (void)rho2;
            post.add(seq[static_cast<std::size_t>(t - 1)], y,
                     lam2s[static_cast<std::size_t>(t - 1)]);
        }
        for (int j = 0; j < n; ++j) {
            if (std::abs(fvals[static_cast<std::size_t>(j)] - post.mean(j)) >
                width * post.stddev(j)) {
                ++violations;
                break;
            }
        }
    }

    const double rate = static_cast<double>(violations) / runs;
    const double threshold = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / runs);
    VerificationReport rep{"confidence-coverage",
                           {{"kernel", kernel_to_json(kernel)},
                            {"domain_size", n},
                            {"noise", schedule_to_json(schedule)},
                            {"setting", setting},
                            {"width", width},
                            {"delta", delta},
                            {"T", T},
                            {"runs", runs},
                            {"violations", violations}},
                           "n/a",
                           {{"violation_rate", rate, threshold, true, rate <= threshold}},
                           rate <= threshold};
    return rep;
}

// ---------------------------------------------------------------------------
// Variance-aware pairing

struct VaComparison {
    int T = 0;
    double V_T = 0.0;
    double lambda2_matched = 0.0;  // V_T / T, charged by the stationary arms
    double beta_pe = 0.0;
    double beta_va_pe = 0.0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> r_mvr, r_va_mvr;
    std::vector<double> R_pe, R_va_pe;
    double median_r_mvr = 0.0, median_r_va_mvr = 0.0;
    double median_R_pe = 0.0, median_R_va_pe = 0.0;
};

// Paired seeds: each seed feeds the identical noise stream to the stationary
// arm (charging V_T/T with its matched-width interval) and the variance-aware
// arm. On a flat schedule the uncertainty-sampling pair coincides exactly.
inline VaComparison compare_variance_aware(const std::vector<Point>& domain,
                                           const RkhsFunction& f,
                                           const NoiseSchedule& schedule, int T,
                                           const std::vector<std::uint64_t>& seeds, double B,
                                           double delta, int N1) {
    if (T < 1 || seeds.empty())
        throw std::invalid_argument("compare_variance_aware needs T >= 1 and seeds");
    if (B < f.norm - 1e-9)
        detail::cfg_error("B", "below the function norm");
    VaComparison out;
    out.T = T;
    out.V_T = cumulative_variance(schedule, T);
    out.lambda2_matched = out.V_T / T;
    out.seeds = seeds;

    const int n = static_cast<int>(domain.size());
    ConfidenceSetting pe_conf, va_conf;
    if (out.V_T > 0.0) {
        pe_conf = NoisyFixed{B,       std::sqrt(out.lambda2_matched), out.lambda2_matched,
                             n,       delta,                          T};
        va_conf = NsvFixed{B, n, delta, T};
    } else {
        pe_conf = NoiselessDeterministic{B};
        va_conf = NoiselessDeterministic{B};
    }
    out.beta_pe = beta_half_for(pe_conf);
    out.beta_va_pe = beta_half_for(va_conf);

    for (std::uint64_t seed : seeds) {
        BanditEnv env = make_env(domain, f, schedule, seed);
        out.r_mvr.push_back(run_mvr(env, T, out.lambda2_matched).simple_regret);
        out.r_va_mvr.push_back(run_va_mvr(env, T).simple_regret);
        out.R_pe.push_back(
            run_pe(env, T, PeConfig{pe_conf, out.lambda2_matched, N1}).steps.back().cum_regret);
        out.R_va_pe.push_back(
            run_va_pe(env, T, VaPeConfig{va_conf, N1}).steps.back().cum_regret);
    }
    out.median_r_mvr = median_of(out.r_mvr);
    out.median_r_va_mvr = median_of(out.r_va_mvr);
    out.median_R_pe = median_of(out.R_pe);
    out.median_R_va_pe = median_of(out.R_va_pe);
    return out;
}

inline nlohmann::json comparison_to_json(const VaComparison& c) {
    return {{"T", c.T},
            {"V_T", c.V_T},
            {"lambda2_matched", c.lambda2_matched},
            {"beta_pe", c.beta_pe},
            {"beta_va_pe", c.beta_va_pe},
            {"seeds", c.seeds},
            {"r_mvr", c.r_mvr},
            {"r_va_mvr", c.r_va_mvr},
            {"R_pe", c.R_pe},
            {"R_va_pe", c.R_va_pe},
            {"medians",
             {{"r_mvr", c.median_r_mvr},
              {"r_va_mvr", c.median_r_va_mvr},
              {"R_pe", c.median_R_pe},
              {"R_va_pe", c.median_R_va_pe}}}};
}

// ---------------------------------------------------------------------------
// Experiment runner

struct ExperimentConfig {
    KernelSpec kernel;
    std::vector<Point> domain;
    RkhsFunction f;
    NoiseSchedule schedule;
    std::uint64_t env_seed = 0;
    int T = 1;
    std::vector<std::uint64_t> seeds;
    std::vector<std::pair<std::string, AlgoConfig>> algorithms;
    std::string out_dir = "results";
    bool verify_rerun = false;         // run every task twice and compare bytes
    nlohmann::json env_resolved;       // env config with the function made explicit
};

inline nlohmann::json confidence_to_json(const ConfidenceSetting& c) {
    if (const auto* nd = std::get_if<NoiselessDeterministic>(&c))
        return {{"kind", "noiseless"}, {"B", nd->B}};
    if (const auto* nf = std::get_if<NoisyFixed>(&c))
        return {{"kind", "noisy-fixed"}, {"B", nf->B},         {"rho", nf->rho},
                {"lambda2", nf->lambda2}, {"domain_size", nf->domain_size},
                {"delta", nf->delta},     {"horizon", nf->horizon}};
    if (const auto* ns = std::get_if<NsvFixed>(&c))
        return {{"kind", "nsv-fixed"},
                {"B", ns->B},
                {"domain_size", ns->domain_size},
                {"delta", ns->delta},
                {"horizon", ns->horizon}};
    const auto& ah = std::get<AdaptiveHetero>(c);
    return {{"kind", "adaptive"}, {"B", ah.B}, {"delta", ah.delta}};
}

namespace detail {

inline ConfidenceSetting confidence_from_json(const nlohmann::json& j, int domain_size,
                                              int horizon, const NoiseSchedule& schedule,
                                              std::optional<double> algo_lambda2) {
    const std::string kind = need_str(j, "kind", "confidence");
    if (kind == "noiseless")
        return NoiselessDeterministic{need_num(j, "B", "confidence")};
    if (kind == "noisy-fixed") {
        NoisyFixed nf;
        nf.B = need_num(j, "B", "confidence");
        nf.delta = need_num(j, "delta", "confidence");
        if (j.contains("rho")) {
            nf.rho = j.at("rho").get<double>();
        } else if (const auto* st = std::get_if<Stationary>(&schedule)) {
            nf.rho = std::sqrt(st->rho2);
        } else {
            cfg_error("confidence.rho", "required unless the schedule is stationary");
        }
        if (j.contains("lambda2"))
            nf.lambda2 = j.at("lambda2").get<double>();
        else if (algo_lambda2)
            nf.lambda2 = *algo_lambda2;
        else
            cfg_error("confidence.lambda2", "required");
        nf.domain_size = domain_size;
        nf.horizon = horizon;
        return nf;
    }
    if (kind == "nsv-fixed")
        return NsvFixed{need_num(j, "B", "confidence"), domain_size,
                        need_num(j, "delta", "confidence"), horizon};
    if (kind == "adaptive")
        return AdaptiveHetero{need_num(j, "B", "confidence"),
                              need_num(j, "delta", "confidence")};
    cfg_error("confidence.kind", "must be noiseless|noisy-fixed|nsv-fixed|adaptive");
}

inline std::pair<std::string, AlgoConfig> algo_from_json(const nlohmann::json& j,
                                                         int domain_size, int horizon,
                                                         const NoiseSchedule& schedule,
                                                         double declared_B) {
    const std::string name = need_str(j, "name", "algorithm");
    if (name.empty())
        cfg_error("algorithm.name", "must be non-empty");
    for (char ch : name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_'))
            cfg_error("algorithm.name", "may only contain letters, digits, '-' and '_'");
    const std::string kind = need_str(j, "kind", "algorithm");

    auto default_lambda2 = [&]() -> double {
        if (j.contains("lambda2"))
            return j.at("lambda2").get<double>();
        if (!(declared_B > 0.0))
            cfg_error("algorithm.lambda2", "required when the function bound is not positive");
        return mvr_default_lambda2(declared_B);
    };

    if (kind == "mvr")
        return {name, MvrConfig{default_lambda2()}};
    if (kind == "va-mvr")
        return {name, VaMvrConfig{}};
    auto reject_adaptive = [](const ConfidenceSetting& c) {
        if (std::holds_alternative<AdaptiveHetero>(c))
            cfg_error("algorithm.confidence.kind",
                      "elimination needs a fixed width, not \"adaptive\"");
    };
    if (kind == "pe") {
        PeConfig cfg;
        cfg.lambda2 = j.contains("lambda2") ? j.at("lambda2").get<double>() : 0.0;
        cfg.N1 = j.contains("N1") ? need_int(j, "N1", "algorithm") : 8;
        cfg.confidence = confidence_from_json(need(j, "confidence", "algorithm"), domain_size,
                                              horizon, schedule, cfg.lambda2);
        reject_adaptive(cfg.confidence);
        return {name, cfg};
    }
    if (kind == "va-pe") {
        VaPeConfig cfg;
        cfg.N1 = j.contains("N1") ? need_int(j, "N1", "algorithm") : 8;
        cfg.confidence = confidence_from_json(need(j, "confidence", "algorithm"), domain_size,
                                              horizon, schedule, std::nullopt);
        reject_adaptive(cfg.confidence);
        return {name, cfg};
    }
    if (kind == "va-gp-ucb") {
        VaGpUcbConfig cfg;
        cfg.zeta2 = j.contains("zeta2") ? j.at("zeta2").get<double>() : 1e-3;
        const auto conf = confidence_from_json(need(j, "confidence", "algorithm"), domain_size,
                                               horizon, schedule, std::nullopt);
        const auto* ah = std::get_if<AdaptiveHetero>(&conf);
        if (ah == nullptr)
            cfg_error("algorithm.confidence.kind", "must be \"adaptive\" for va-gp-ucb");
        cfg.confidence = *ah;
        return {name, cfg};
    }
    cfg_error("algorithm.kind", "must be mvr|pe|va-mvr|va-pe|va-gp-ucb");
}

}  // namespace detail

inline nlohmann::json algo_to_json(const AlgoConfig& cfg) {
    if (const auto* m = std::get_if<MvrConfig>(&cfg))
        return {{"kind", "mvr"}, {"lambda2", m->lambda2}};
    if (const auto* p = std::get_if<PeConfig>(&cfg))
        return {{"kind", "pe"},
                {"lambda2", p->lambda2},
                {"N1", p->N1},
                {"confidence", confidence_to_json(p->confidence)},
                {"beta_half", beta_half_for(p->confidence)}};
    if (std::get_if<VaMvrConfig>(&cfg))
        return {{"kind", "va-mvr"}};
    if (const auto* vp = std::get_if<VaPeConfig>(&cfg))
        return {{"kind", "va-pe"},
                {"N1", vp->N1},
                {"confidence", confidence_to_json(vp->confidence)},
                {"beta_half", beta_half_for(vp->confidence)}};
    const auto& u = std::get<VaGpUcbConfig>(cfg);
    return {{"kind", "va-gp-ucb"},
            {"zeta2", u.zeta2},
            {"confidence", confidence_to_json(ConfidenceSetting{u.confidence})}};
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    const auto& env = detail::need(j, "env", "root");
    cfg.kernel = kernel_from_json(detail::need(env, "kernel", "env"));
    cfg.domain = domain_from_json(detail::need(env, "domain", "env"));
    cfg.schedule = schedule_from_json(detail::need(env, "noise", "env"));
    cfg.env_seed = static_cast<std::uint64_t>(detail::need_int(env, "seed", "env"));
    const auto& fj = detail::need(env, "function", "env");
    cfg.f = function_from_json(fj, cfg.kernel, cfg.domain, cfg.env_seed);

    cfg.T = detail::need_int(j, "T", "root");
    if (cfg.T < 1)
        detail::cfg_error("T", "must be >= 1");

    const auto& seeds = detail::need(j, "seeds", "root");
    if (!seeds.is_array() || seeds.empty())
        detail::cfg_error("seeds", "must be a non-empty array of integers");
    for (const auto& s : seeds) {
        if (!s.is_number_integer())
            detail::cfg_error("seeds", "must be a non-empty array of integers");
        cfg.seeds.push_back(s.get<std::uint64_t>());
    }

    const double B = declared_bound(fj, cfg.f);
    const auto& algos = detail::need(j, "algorithms", "root");
    if (!algos.is_array() || algos.empty())
        detail::cfg_error("algorithms", "must be a non-empty array");
    for (const auto& a : algos) {
        auto parsed = detail::algo_from_json(a, static_cast<int>(cfg.domain.size()), cfg.T,
                                             cfg.schedule, B);
        for (const auto& existing : cfg.algorithms)
            if (existing.first == parsed.first)
                detail::cfg_error("algorithm.name", "duplicate name '" + parsed.first + "'");
        cfg.algorithms.push_back(std::move(parsed));
    }

    if (j.contains("out"))
        cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("verify_rerun"))
        cfg.verify_rerun = j.at("verify_rerun").get<bool>();

    cfg.env_resolved = {{"kernel", kernel_to_json(cfg.kernel)},
                        {"domain", env.at("domain")},
                        {"function", function_to_json(cfg.f)},
                        {"noise", schedule_to_json(cfg.schedule)},
                        {"seed", cfg.env_seed}};
    return cfg;
}

namespace detail {

inline std::string run_to_csv(const RunRecord& rec) {
    std::string out = "t,x_index,y,rho2,lambda2,sigma_max,instant_regret,cumulative_regret\n";
    for (const auto& s : rec.steps) {
        out += std::to_string(s.t);
        out += ',';
        out += std::to_string(s.x_index);
        out += ',';
        out += fmt17(s.y);
        out += ',';
        out += fmt17(s.rho2);
        out += ',';
        out += fmt17(s.lambda2);
        out += ',';
        out += fmt17(s.sigma_max);
        out += ',';
        out += fmt17(s.inst_regret);
        out += ',';
        out += fmt17(s.cum_regret);
        out += '\n';
    }
    return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + p.string());
    out << content;
    out.close();
    if (!out)
        throw std::runtime_error("write failed: " + p.string());
}

struct TaskOutcome {
    double R_T = 0.0;
    double r_T = 0.0;
};

}  // namespace detail

// Writes one CSV and one JSON sidecar per (seed, algorithm) plus an aggregate
// summary. Tasks are independent, so jobs > 1 fans them over a small worker
// pool; outputs do not depend on the worker count.
inline void run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
    if (cfg.seeds.empty() || cfg.algorithms.empty())
        throw std::invalid_argument("experiment needs seeds and algorithms");
    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);

    struct Task {
        std::size_t seed_i;
        std::size_t algo_i;
    };
    std::vector<Task> tasks;
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
            tasks.push_back({s, a});
    std::vector<detail::TaskOutcome> outcomes(tasks.size());
    const double V_T = cumulative_variance(cfg.schedule, cfg.T);

    auto run_task = [&](std::size_t ti) {
        const auto& [name, acfg] = cfg.algorithms[tasks[ti].algo_i];
        const std::uint64_t seed = cfg.seeds[tasks[ti].seed_i];
        BanditEnv env = make_env(cfg.domain, cfg.f, cfg.schedule, seed);

        RunRecord rec;
        nlohmann::json algo_json = algo_to_json(acfg);
        if (const auto* u = std::get_if<VaGpUcbConfig>(&acfg)) {
            UcbTrace trace;
            rec = run_va_gp_ucb(env, cfg.T, *u, &trace);
            algo_json["beta_half_final"] = trace.beta_half.back();
            algo_json["mig_bracket"] = {{"lower", trace.mig_lower_final},
                                        {"upper", trace.mig_upper_final}};
        } else {
            rec = run_algorithm(env, cfg.T, acfg);
        }

        const std::string csv = detail::run_to_csv(rec);
        if (cfg.verify_rerun) {
            RunRecord again = run_algorithm(env, cfg.T, acfg);
            if (detail::run_to_csv(again) != csv)
                throw std::runtime_error("determinism check failed for " + name);
        }
        const std::string stem = name + "_seed" + std::to_string(seed);
        detail::write_file(out_dir / (stem + ".csv"), csv);

        const double R_T = rec.steps.back().cum_regret;
        nlohmann::json sidecar{
            {"config",
             {{"T", cfg.T}, {"seed", seed}, {"env", cfg.env_resolved}, {"algorithm", algo_json}}},
            {"summary",
             {{"R_T", R_T},
              {"r_T", rec.simple_regret},
              {"V_T", V_T},
              {"recommendation", rec.recommendation},
              {"duplicate_zero_noise", rec.duplicate_zero_noise}}}};
        detail::write_file(out_dir / (stem + ".json"), sidecar.dump(2) + "\n");
        outcomes[ti] = {R_T, rec.simple_regret};
    };

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i)
            run_task(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex err_mutex;
        std::exception_ptr first_error;
        auto worker = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= tasks.size())
                    return;
                {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (first_error)
                        return;
                }
                try {
                    run_task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error)
                        first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
        if (first_error)
            std::rethrow_exception(first_error);
    }

    nlohmann::json per_algo = nlohmann::json::object();
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
        std::vector<double> R, r;
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
            if (tasks[ti].algo_i != a)
                continue;
            R.push_back(outcomes[ti].R_T);
            r.push_back(outcomes[ti].r_T);
        }
        per_algo[cfg.algorithms[a].first] = {{"R_T", R},
                                             {"r_T", r},
                                             {"median_R_T", median_of(R)},
                                             {"median_r_T", median_of(r)},
                                             {"mean_R_T", mean_of(R)},
                                             {"mean_r_T", mean_of(r)}};
    }
    nlohmann::json summary{{"T", cfg.T},
                           {"V_T", V_T},
                           {"seeds", cfg.seeds},
                           {"algorithms", per_algo}};
    detail::write_file(out_dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace gpbandit
