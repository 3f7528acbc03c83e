#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpbandit/harness.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    json j;
    in >> j;
    return j;
}

// "a..b" inclusive
std::vector<std::uint64_t> parse_seed_range(const std::string& s) {
    const auto pos = s.find("..");
    if (pos == std::string::npos)
        throw std::runtime_error("--seeds wants a range like 1..20, got '" + s + "'");
    const std::uint64_t a = std::stoull(s.substr(0, pos));
    const std::uint64_t b = std::stoull(s.substr(pos + 2));
    if (b < a)
        throw std::runtime_error("--seeds range is empty: '" + s + "'");
    std::vector<std::uint64_t> out;
    for (std::uint64_t v = a; v <= b; ++v)
        out.push_back(v);
    return out;
}

// configs may give an explicit "seeds" list or a count "runs" meaning 1..N
std::vector<std::uint64_t> seeds_from(const json& j, const std::string& override_range) {
    if (!override_range.empty())
        return parse_seed_range(override_range);
    if (j.contains("seeds")) {
        std::vector<std::uint64_t> out;
        for (const auto& v : j.at("seeds"))
            out.push_back(v.get<std::uint64_t>());
        if (out.empty())
            throw std::runtime_error("config error: field 'seeds': must be non-empty");
        return out;
    }
    if (j.contains("runs")) {
        const int n = j.at("runs").get<int>();
        if (n < 1)
            throw std::runtime_error("config error: field 'runs': must be >= 1");
        std::vector<std::uint64_t> out;
        for (int i = 1; i <= n; ++i)
            out.push_back(static_cast<std::uint64_t>(i));
        return out;
    }
    throw std::runtime_error("config error: needs either 'seeds' or 'runs'");
}

std::vector<int> t_list_from(const json& j) {
    std::vector<int> out;
    for (const auto& v : gpbandit::detail::need(j, "T_list", "root"))
        out.push_back(v.get<int>());
    return out;
}

gpbandit::SelectionRule rule_from(const json& j) {
    const std::string r = gpbandit::detail::need_str(j, "rule", "root");
    if (r == "mvr")
        return gpbandit::SelectionRule::Mvr;
    if (r == "random")
        return gpbandit::SelectionRule::Random;
    throw std::runtime_error("config error: field 'rule': must be \"mvr\" or \"random\"");
}

struct EnvParts {
    gpbandit::KernelSpec kernel;
    std::vector<gpbandit::Point> domain;
    gpbandit::RkhsFunction f;
    gpbandit::NoiseSchedule schedule;
    json function_json;
};

EnvParts env_from(const json& j) {
    const auto& env = gpbandit::detail::need(j, "env", "root");
    EnvParts p;
    p.kernel = gpbandit::kernel_from_json(gpbandit::detail::need(env, "kernel", "env"));
    p.domain = gpbandit::domain_from_json(gpbandit::detail::need(env, "domain", "env"));
    p.schedule = gpbandit::schedule_from_json(gpbandit::detail::need(env, "noise", "env"));
    const auto seed =
        static_cast<std::uint64_t>(gpbandit::detail::need_int(env, "seed", "env"));
    p.function_json = gpbandit::detail::need(env, "function", "env");
    p.f = gpbandit::function_from_json(p.function_json, p.kernel, p.domain, seed);
    return p;
}

void write_out(const std::string& out_dir, const std::string& name, const json& j) {
    if (out_dir.empty())
        return;
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write into --out directory: " + out_dir);
    out << j.dump(2) << '\n';
}

int emit_report(const gpbandit::VerificationReport& rep, const std::string& out_dir) {
    const json j = gpbandit::report_to_json(rep);
    std::cout << j.dump(2) << '\n';
    write_out(out_dir, rep.check + ".json", j);
    return rep.pass ? 0 : 1;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::string& seed_range, int jobs) {
    auto cfg = gpbandit::parse_experiment_config(load_json(config_path));
    if (!out_dir.empty())
        cfg.out_dir = out_dir;
    if (!seed_range.empty())
        cfg.seeds = parse_seed_range(seed_range);
    gpbandit::run_experiment(cfg, jobs);
    std::cout << "wrote " << cfg.seeds.size() * cfg.algorithms.size()
              << " runs to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_verify_lemma1(const json& j, const std::string& out_dir) {
    const auto kernel = gpbandit::kernel_from_json(gpbandit::detail::need(j, "kernel", "root"));
    const auto domain = gpbandit::domain_from_json(gpbandit::detail::need(j, "domain", "root"));
    const double lambda2 = gpbandit::detail::need_num(j, "lambda2", "root");
    return emit_report(gpbandit::verify_lemma1(kernel, domain, lambda2, t_list_from(j)),
                       out_dir);
}

int cmd_verify_lemma1_nsv(const json& j, const std::string& out_dir) {
    const auto kernel = gpbandit::kernel_from_json(gpbandit::detail::need(j, "kernel", "root"));
    const auto domain = gpbandit::domain_from_json(gpbandit::detail::need(j, "domain", "root"));
    const auto schedule =
        gpbandit::schedule_from_json(gpbandit::detail::need(j, "noise", "root"));
    return emit_report(
        gpbandit::verify_lemma1_nonstationary(kernel, domain, schedule, t_list_from(j)),
        out_dir);
}

int cmd_verify_epcl(const json& j, const std::string& out_dir,
                    const std::string& seed_range) {
    const auto kernel = gpbandit::kernel_from_json(gpbandit::detail::need(j, "kernel", "root"));
    const auto domain = gpbandit::domain_from_json(gpbandit::detail::need(j, "domain", "root"));
    const auto rule = rule_from(j);
    const int T = gpbandit::detail::need_int(j, "T", "root");
    const auto seeds = seeds_from(j, seed_range);
    if (j.contains("lambda2") && j.contains("noise"))
        throw std::runtime_error("config error: give either 'lambda2' or 'noise', not both");
    if (j.contains("lambda2"))
        return emit_report(gpbandit::verify_epcl(kernel, domain, rule,
                                                 j.at("lambda2").get<double>(), T, seeds),
                           out_dir);
    if (j.contains("noise")) {
        const auto schedule = gpbandit::schedule_from_json(j.at("noise"));
        return emit_report(
            gpbandit::verify_epcl_nonstationary(kernel, domain, rule, schedule, T, seeds),
            out_dir);
    }
    throw std::runtime_error("config error: needs either 'lambda2' or 'noise'");
}

int cmd_verify_coverage(const json& j, const std::string& out_dir) {
    const auto env = env_from(j);
    const auto conf = gpbandit::detail::confidence_from_json(
        gpbandit::detail::need(j, "confidence", "root"),
        static_cast<int>(env.domain.size()), gpbandit::detail::need_int(j, "T", "root"),
        env.schedule, std::nullopt);
    const int T = gpbandit::detail::need_int(j, "T", "root");
    const int runs = gpbandit::detail::need_int(j, "runs", "root");
    const auto seed0 = j.contains("seed0")
                           ? static_cast<std::uint64_t>(j.at("seed0").get<std::int64_t>())
                           : std::uint64_t{1};
    return emit_report(
        gpbandit::verify_coverage(env.kernel, env.domain, env.f, env.schedule, conf, T, runs,
                                  seed0),
        out_dir);
}

int cmd_compare_va(const json& j, const std::string& out_dir,
                   const std::string& seed_range) {
    const auto env = env_from(j);
    const int T = gpbandit::detail::need_int(j, "T", "root");
    const auto seeds = seeds_from(j, seed_range);
    const double B = j.contains("B") ? j.at("B").get<double>()
                                     : gpbandit::declared_bound(env.function_json, env.f);
    const double delta = j.contains("delta") ? j.at("delta").get<double>() : 0.1;
    const int N1 = j.contains("N1") ? j.at("N1").get<int>() : 8;
    const auto cmp =
        gpbandit::compare_variance_aware(env.domain, env.f, env.schedule, T, seeds, B, delta,
                                         N1);
    json out = gpbandit::comparison_to_json(cmp);
    out["va_mvr_no_worse"] = cmp.median_r_va_mvr <= cmp.median_r_mvr;
    out["va_pe_no_worse"] = cmp.median_R_va_pe <= cmp.median_R_pe;
    std::cout << out.dump(2) << '\n';
    write_out(out_dir, "compare-va.json", out);
    return 0;
}

int cmd_mig_bracket(const json& j, const std::string& out_dir) {
    const auto kernel = gpbandit::kernel_from_json(gpbandit::detail::need(j, "kernel", "root"));
    const auto domain = gpbandit::domain_from_json(gpbandit::detail::need(j, "domain", "root"));
    const int T = gpbandit::detail::need_int(j, "T", "root");
    gpbandit::MigBracket b;
    json params;
    if (j.contains("lambda2") && j.contains("noise"))
        throw std::runtime_error("config error: give either 'lambda2' or 'noise', not both");
    if (j.contains("lambda2")) {
        const double lambda2 = j.at("lambda2").get<double>();
        b = gpbandit::greedy_mig_bracket(kernel, domain, T, lambda2);
        params = {{"lambda2", lambda2}};
    } else if (j.contains("noise")) {
        const auto schedule = gpbandit::schedule_from_json(j.at("noise"));
        std::vector<double> lt2;
        for (int t = 1; t <= T; ++t)
            lt2.push_back(std::max(gpbandit::noise_var_at(schedule, t), gpbandit::kJitter));
        b = gpbandit::greedy_mig_bracket(kernel, domain, lt2);
        params = {{"noise", gpbandit::schedule_to_json(schedule)}};
    } else {
        throw std::runtime_error("config error: needs either 'lambda2' or 'noise'");
    }
    json out{{"kernel", gpbandit::kernel_to_json(kernel)},
             {"domain_size", domain.size()},
             {"T", T},
             {"params", params},
             {"lower", b.lower},
             {"upper", b.upper}};
    std::cout << out.dump(2) << '\n';
    write_out(out_dir, "mig-bracket.json", out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernelized bandit experiment runner and verification suites"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seed_range;
    int jobs = 1;
    app.add_option("--out", out_dir, "directory for result or report files");
    app.add_option("--seeds", seed_range, "override seeds with an inclusive range a..b");
    app.add_option("--jobs", jobs, "worker threads for seed level parallelism")
        ->check(CLI::PositiveNumber);

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config_path, "experiment config json")->required();

    auto* verify = app.add_subcommand("verify", "run a verification suite");
    verify->require_subcommand(1);
    std::string verify_config;
    for (const char* name : {"lemma1", "lemma1-nsv", "epcl", "coverage"})
        verify->add_subcommand(name)
            ->fallthrough()
            ->add_option("config", verify_config, "suite config json")
            ->required();

    auto* compare = app.add_subcommand("compare-va", "paired variance-aware comparison");
    std::string compare_config;
    compare->add_option("config", compare_config, "comparison config json")->required();

    auto* mig = app.add_subcommand("mig-bracket", "greedy information gain bracket");
    std::string mig_config;
    mig->add_option("config", mig_config, "bracket config json")->required();

    // --out and friends may come after the subcommand
    for (CLI::App* sub : {run, verify, compare, mig})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed())
            return cmd_run(config_path, out_dir, seed_range, jobs);
        if (verify->parsed()) {
            const json j = load_json(verify_config);
            if (verify->get_subcommand("lemma1")->parsed())
                return cmd_verify_lemma1(j, out_dir);
            if (verify->get_subcommand("lemma1-nsv")->parsed())
                return cmd_verify_lemma1_nsv(j, out_dir);
            if (verify->get_subcommand("epcl")->parsed())
                return cmd_verify_epcl(j, out_dir, seed_range);
            return cmd_verify_coverage(j, out_dir);
        }
        if (compare->parsed())
            return cmd_compare_va(load_json(compare_config), out_dir, seed_range);
        return cmd_mig_bracket(load_json(mig_config), out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
