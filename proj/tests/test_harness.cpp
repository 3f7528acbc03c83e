#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gpbandit/harness.hpp"
#include "test_helpers.hpp"

using namespace gpbandit;
namespace fs = std::filesystem;

namespace {

KernelSpec se(double ls) {
    KernelSpec k;
    k.family = KernelFamily::SE;
    k.lengthscale = ls;
    return k;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::vector<std::string> cells;
        std::istringstream cs(line);
        std::string cell;
        while (std::getline(cs, cell, ','))
            cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gpbandit_harness_" + name);
    fs::remove_all(p);
    return p;
}

RkhsFunction small_function(const KernelSpec& k) {
    return make_function(k, {{0.1}, {0.55}, {0.9}}, {0.8, -0.5, 0.6});
}

}  // namespace

TEST_CASE("seventeen digit formatting round trips", "[harness]") {
    std::vector<double> vals{0.0,    -0.0,   1.0,        1.0 / 3.0, 2.0 / 7.0, 1e-17,
                             -1e300, 0.1,    1e17 + 1.0, -123.456,  kJitter};
    for (int i = 0; i < 200; ++i)
        vals.push_back(std::ldexp(standard_normal(99, 7, static_cast<std::uint64_t>(i)),
                                  (i % 41) - 20));
    for (double v : vals) {
        const double back = std::strtod(fmt17(v).c_str(), nullptr);
        CAPTURE(v);
        REQUIRE(back == v);
    }

    REQUIRE(median_of({3.0, 1.0, 2.0}) == 2.0);
    REQUIRE(median_of({4.0, 1.0, 2.0, 3.0}) == 2.5);
    REQUIRE(median_of({5.0}) == 5.0);
    REQUIRE(mean_of({1.0, 2.0, 6.0}) == 3.0);
    REQUIRE_THROWS_AS(median_of({}), std::invalid_argument);
    REQUIRE_THROWS_AS(mean_of({}), std::invalid_argument);
}

TEST_CASE("verification reports survive a json round trip", "[harness]") {
    VerificationReport rep;
    rep.check = "potential-count";
    rep.params = {{"lambda2", 1.0 / 3.0}, {"T", 64}};
    rep.bracket_side = "upper";
    rep.instances.push_back({"seed=1", 2.0 / 7.0, 1e-17, true, true});
    rep.instances.push_back({"seed=2", 17.0, 12.0, false, true});
    rep.instances.push_back({"seed=3", 5.0, 4.0, true, false});
    rep.pass = false;

    const nlohmann::json j = report_to_json(rep);
    const auto back = report_from_json(nlohmann::json::parse(j.dump()));
    REQUIRE(back == rep);

    // doubles must survive the serialize/parse trip bit for bit
    REQUIRE(back.instances[0].lhs == 2.0 / 7.0);
    REQUIRE(back.instances[0].rhs == 1e-17);
}

TEST_CASE("config parsing names the offending field", "[harness]") {
    SECTION("kernel") {
        const auto k = kernel_from_json({{"family", "se"}, {"lengthscale", 0.2}});
        REQUIRE(k.family == KernelFamily::SE);
        REQUIRE(k.lengthscale == 0.2);
        const auto m = kernel_from_json(
            {{"family", "matern"}, {"lengthscale", 0.3}, {"smoothness", 1.5}});
        REQUIRE(m.family == KernelFamily::Matern);
        REQUIRE(m.smoothness == 1.5);
        REQUIRE(nlohmann::json::parse(kernel_to_json(m).dump()) == kernel_to_json(m));
        REQUIRE_THROWS_WITH(kernel_from_json({{"family", "se"}}),
                            Catch::Matchers::ContainsSubstring("kernel.lengthscale"));
        REQUIRE_THROWS_WITH(kernel_from_json({{"family", "rbf"}, {"lengthscale", 0.2}}),
                            Catch::Matchers::ContainsSubstring("kernel.family"));
        REQUIRE_THROWS(kernel_from_json(
            {{"family", "matern"}, {"lengthscale", 0.3}, {"smoothness", 2.0}}));
    }
    SECTION("domain") {
        const auto g = domain_from_json({{"grid", {{"dims", {3, 2}}}}});
        REQUIRE(g.size() == 6);
        REQUIRE(g == make_grid({3, 2}));
        const auto p = domain_from_json({{"points", {{0.0, 1.0}, {0.5, 0.5}}}});
        REQUIRE(p.size() == 2);
        REQUIRE(p[1] == Point{0.5, 0.5});
        REQUIRE_THROWS_WITH(domain_from_json(nlohmann::json::object()),
                            Catch::Matchers::ContainsSubstring("domain"));
        REQUIRE_THROWS_WITH(domain_from_json({{"grid", nlohmann::json::object()}}),
                            Catch::Matchers::ContainsSubstring("domain.grid.dims"));
    }
    SECTION("noise") {
        REQUIRE(std::holds_alternative<Noiseless>(schedule_from_json({{"kind", "noiseless"}})));
        const auto st = schedule_from_json({{"kind", "stationary"}, {"rho2", 0.25}});
        REQUIRE(std::get<Stationary>(st).rho2 == 0.25);
        const auto pw = schedule_from_json({{"kind", "power"}, {"c", 2.0}, {"p", 0.5}});
        REQUIRE(std::get<PowerDecay>(pw).c == 2.0);
        const auto ex =
            schedule_from_json({{"kind", "explicit"}, {"rho2_seq", {0.1, 0.0, 0.3}}});
        REQUIRE(std::get<Explicit>(ex).rho2_seq == std::vector<double>{0.1, 0.0, 0.3});
        for (const auto& s : {st, pw, ex})
            REQUIRE(schedule_from_json(schedule_to_json(s)).index() == s.index());
        REQUIRE_THROWS_WITH(schedule_from_json({{"kind", "gaussian"}}),
                            Catch::Matchers::ContainsSubstring("noise.kind"));
        REQUIRE_THROWS_WITH(schedule_from_json({{"kind", "power"}, {"c", 1.0}}),
                            Catch::Matchers::ContainsSubstring("noise.p"));
    }
    SECTION("function") {
        const auto k = se(0.3);
        const auto dom = test_helpers::grid1d(12);
        const nlohmann::json explicit_f{{"centers", {{0.2}, {0.8}}}, {"coeffs", {1.0, -0.5}}};
        const auto f = function_from_json(explicit_f, k, dom, 7);
        REQUIRE(f.centers.size() == 2);
        REQUIRE(declared_bound(explicit_f, f) == f.norm);
        const auto round = function_from_json(function_to_json(f), k, dom, 7);
        REQUIRE(round.coeffs == f.coeffs);
        REQUIRE(round.norm == f.norm);

        const nlohmann::json sampled{{"sample", {{"m", 4}, {"B", 1.5}}}};
        const auto fs1 = function_from_json(sampled, k, dom, 11);
        const auto fs2 = function_from_json(sampled, k, dom, 11);
        const auto fs3 = function_from_json(sampled, k, dom, 12);
        REQUIRE(declared_bound(sampled, fs1) == 1.5);
        REQUIRE(fs1.coeffs == fs2.coeffs);
        REQUIRE(fs1.coeffs != fs3.coeffs);
        REQUIRE_THROWS_WITH(function_from_json(nlohmann::json::object(), k, dom, 7),
                            Catch::Matchers::ContainsSubstring("function"));
    }
}

TEST_CASE("deviation bound verification passes and collapses", "[harness]") {
    const auto k = se(0.2);
    const auto dom = test_helpers::grid1d(24);
    const std::vector<int> Ts{8, 16, 32, 64};

    const auto rep = verify_lemma1(k, dom, 0.5, Ts);
    REQUIRE(rep.check == "posterior-deviation-bound");
    REQUIRE(rep.pass);
    REQUIRE(rep.instances.size() == 2 * Ts.size());
    for (const auto& inst : rep.instances) {
        REQUIRE(inst.lhs > 0.0);
        REQUIRE(inst.rhs > 0.0);
        if (inst.applicable)
            REQUIRE(inst.lhs <= inst.rhs + 1e-9);
    }
    // chain instances must be applicable here: with lambda^2 = 0.5 the very
    // first step has variance 1 > lambda^2, but later steps fall below it
    REQUIRE(rep.instances[0].label == "T=8 chain");
    REQUIRE(rep.instances[1].label == "T=8 display");

    // the flat schedule run through the nonstationary path is the same
    // computation, so values must agree exactly
    const auto nsv = verify_lemma1_nonstationary(k, dom, Stationary{0.5}, Ts);
    REQUIRE(nsv.check == "posterior-deviation-bound-nsv");
    REQUIRE(nsv.instances.size() == rep.instances.size());
    for (std::size_t i = 0; i < rep.instances.size(); ++i) {
        REQUIRE(nsv.instances[i].lhs == rep.instances[i].lhs);
        REQUIRE(nsv.instances[i].rhs == rep.instances[i].rhs);
    }
    REQUIRE(nsv.pass);

    // unsorted duplicated horizon lists are cleaned up, same result
    const auto scrambled = verify_lemma1(k, dom, 0.5, {64, 8, 16, 8, 32});
    REQUIRE(scrambled.instances.size() == rep.instances.size());
    for (std::size_t i = 0; i < rep.instances.size(); ++i)
        REQUIRE(scrambled.instances[i].lhs == rep.instances[i].lhs);

    REQUIRE_THROWS_AS(verify_lemma1(k, dom, 0.0, Ts), std::invalid_argument);
    REQUIRE_THROWS_AS(verify_lemma1(k, dom, 0.5, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(verify_lemma1(k, dom, 0.5, {0, 8}), std::invalid_argument);
}

TEST_CASE("deviation bound verification handles decaying and zero noise", "[harness]") {
    const auto k = se(0.25);
    const auto dom = test_helpers::grid1d(20);

    const auto rep = verify_lemma1_nonstationary(k, dom, PowerDecay{1.0, 1.0}, {16, 64});
    REQUIRE(rep.pass);
    for (const auto& inst : rep.instances) {
        REQUIRE(std::isfinite(inst.lhs));
        REQUIRE(std::isfinite(inst.rhs));
    }

    // an explicit schedule with zeros exercises the jitter floor on the
    // thresholded recursion; the bound is still finite and holds
    std::vector<double> seq(32, 0.0);
    for (std::size_t i = 0; i < seq.size(); i += 3)
        seq[i] = 0.2;
    const auto zrep = verify_lemma1_nonstationary(k, dom, Explicit{seq}, {32});
    REQUIRE(zrep.pass);
    for (const auto& inst : zrep.instances)
        REQUIRE(std::isfinite(inst.rhs));
}

TEST_CASE("potential count verification stays within the gain budget", "[harness]") {
    const auto k = se(0.2);
    const auto dom = test_helpers::grid1d(24);
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    for (auto rule : {SelectionRule::Mvr, SelectionRule::Random}) {
        const auto rep = verify_epcl(k, dom, rule, 0.25, 64, seeds);
        REQUIRE(rep.check == "potential-count");
        REQUIRE(rep.pass);
        REQUIRE(rep.instances.size() == seeds.size());
        for (const auto& inst : rep.instances) {
            REQUIRE(inst.lhs >= 0.0);
            REQUIRE(inst.lhs <= inst.rhs);
        }
        // mvr sequences ignore the seed after the first step, random ones do not
        const auto again = verify_epcl(k, dom, rule, 0.25, 64, {6});
        REQUIRE(again.instances.size() == 1);
    }

    const auto nsv = verify_epcl_nonstationary(k, dom, SelectionRule::Mvr,
                                               PowerDecay{1.0, 1.0}, 64, seeds);
    REQUIRE(nsv.check == "potential-count-nsv");
    REQUIRE(nsv.pass);
    REQUIRE(nsv.params.at("lambda2_min").get<double>() ==
            std::max(noise_var_at(PowerDecay{1.0, 1.0}, 64), kJitter));

    const auto zrep = verify_epcl_nonstationary(k, dom, SelectionRule::Random,
                                                Explicit{std::vector<double>(16, 0.0)}, 16,
                                                {9, 10});
    REQUIRE(zrep.pass);

    REQUIRE_THROWS_AS(verify_epcl(k, dom, SelectionRule::Mvr, 0.0, 16, seeds),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(verify_epcl(k, dom, SelectionRule::Mvr, 0.25, 16, {}),
                      std::invalid_argument);
}

TEST_CASE("coverage verification observes the failure budget", "[harness]") {
    const auto k = se(0.3);
    const auto dom = test_helpers::grid1d(15);
    const auto f = small_function(k);

    SECTION("noiseless width never misses") {
        const auto rep = verify_coverage(k, dom, f, Noiseless{},
                                         NoiselessDeterministic{f.norm + 0.1}, 12, 40);
        REQUIRE(rep.pass);
        REQUIRE(rep.params.at("violations").get<int>() == 0);
        REQUIRE(rep.instances.size() == 1);
        REQUIRE(rep.instances[0].lhs == 0.0);
    }
    SECTION("fixed noisy width on a stationary schedule") {
        NoisyFixed conf;
        conf.B = f.norm + 0.1;
        conf.rho = 0.3;
        conf.lambda2 = 0.09;
        conf.domain_size = static_cast<int>(dom.size());
        conf.delta = 0.2;
        const auto rep =
            verify_coverage(k, dom, f, Stationary{0.09}, ConfidenceSetting{conf}, 25, 60, 3);
        REQUIRE(rep.pass);
        const double rate = rep.instances[0].lhs;
        REQUIRE(rate <= 0.2 + 3.0 * std::sqrt(0.2 * 0.8 / 60.0));
    }
    SECTION("variance matched width on a decaying schedule") {
        NsvFixed conf{f.norm + 0.1, static_cast<int>(dom.size()), 0.2, 25};
        const auto rep = verify_coverage(k, dom, f, PowerDecay{0.5, 1.0},
                                         ConfidenceSetting{conf}, 25, 60, 3);
        REQUIRE(rep.pass);
    }
    SECTION("mismatches are rejected") {
        REQUIRE_THROWS_WITH(
            verify_coverage(k, dom, f, Stationary{0.09}, NoiselessDeterministic{2.0}, 10, 5),
            Catch::Matchers::ContainsSubstring("noiseless"));
        NoisyFixed wrong_rho{2.0, 0.5, 0.09, static_cast<int>(dom.size()), 0.2, 10};
        REQUIRE_THROWS_WITH(
            verify_coverage(k, dom, f, Stationary{0.09}, ConfidenceSetting{wrong_rho}, 10, 5),
            Catch::Matchers::ContainsSubstring("rho"));
        REQUIRE_THROWS_WITH(
            verify_coverage(k, dom, f, Noiseless{}, NoiselessDeterministic{f.norm * 0.5}, 10, 5),
            Catch::Matchers::ContainsSubstring("norm"));
        REQUIRE_THROWS_WITH(verify_coverage(k, dom, f, Stationary{0.09},
                                            AdaptiveHetero{2.0, 0.1}, 10, 5),
                            Catch::Matchers::ContainsSubstring("adaptive"));
    }
}

TEST_CASE("variance aware comparison collapses on flat schedules", "[harness]") {
    const auto k = se(0.3);
    const auto dom = test_helpers::grid1d(12);
    const auto f = small_function(k);
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    SECTION("stationary") {
        const auto c = compare_variance_aware(dom, f, Stationary{0.2}, 40, seeds,
                                              f.norm + 0.1, 0.1, 4);
        REQUIRE(c.lambda2_matched == Catch::Approx(0.2).margin(1e-15));
        REQUIRE(c.r_mvr == c.r_va_mvr);
        REQUIRE(c.median_r_mvr == c.median_r_va_mvr);
        REQUIRE(c.beta_pe > c.beta_va_pe);
        REQUIRE(c.seeds == seeds);
        REQUIRE(c.R_pe.size() == seeds.size());
    }
    SECTION("noiseless degenerates to a single arm pair") {
        const auto c = compare_variance_aware(dom, f, Noiseless{}, 20, seeds, f.norm + 0.1,
                                              0.1, 4);
        REQUIRE(c.V_T == 0.0);
        REQUIRE(c.lambda2_matched == 0.0);
        REQUIRE(c.r_mvr == c.r_va_mvr);
        REQUIRE(c.R_pe == c.R_va_pe);
        REQUIRE(c.beta_pe == c.beta_va_pe);
    }
    SECTION("json export carries all the series") {
        const auto c = compare_variance_aware(dom, f, Stationary{0.2}, 20, seeds,
                                              f.norm + 0.1, 0.1, 4);
        const auto j = comparison_to_json(c);
        REQUIRE(j.at("r_mvr").size() == seeds.size());
        REQUIRE(j.at("medians").at("R_va_pe").get<double>() == c.median_R_va_pe);
    }
    REQUIRE_THROWS_AS(
        compare_variance_aware(dom, f, Stationary{0.2}, 20, {}, f.norm + 0.1, 0.1, 4),
        std::invalid_argument);
    REQUIRE_THROWS_WITH(
        compare_variance_aware(dom, f, Stationary{0.2}, 20, seeds, 0.01, 0.1, 4),
        Catch::Matchers::ContainsSubstring("norm"));
}

namespace {

nlohmann::json experiment_config_json(const std::string& out_dir) {
    return {{"env",
             {{"kernel", {{"family", "se"}, {"lengthscale", 0.3}}},
              {"domain", {{"grid", {{"dims", {14}}}}}},
              {"function", {{"centers", {{0.1}, {0.55}, {0.9}}}, {"coeffs", {0.8, -0.5, 0.6}}}},
              {"noise", {{"kind", "stationary"}, {"rho2", 0.04}}},
              {"seed", 5}}},
            {"T", 20},
            {"seeds", {1, 2, 3}},
            {"algorithms",
             {{{"name", "mvr"}, {"kind", "mvr"}, {"lambda2", 0.04}},
              {{"name", "va-pe"},
               {"kind", "va-pe"},
               {"N1", 4},
               {"confidence", {{"kind", "nsv-fixed"}, {"B", 1.2}, {"delta", 0.1}}}}}},
            {"out", out_dir}};
}

}  // namespace

TEST_CASE("experiment runner writes a complete deterministic result set", "[harness]") {
    const fs::path dir1 = fresh_dir("run1");
    const fs::path dir2 = fresh_dir("run2");
    const fs::path dir3 = fresh_dir("run3");

    auto cfg = parse_experiment_config(experiment_config_json(dir1.string()));
    REQUIRE(cfg.T == 20);
    REQUIRE(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
    REQUIRE(cfg.algorithms.size() == 2);
    REQUIRE(cfg.algorithms[0].first == "mvr");
    run_experiment(cfg);

    for (const char* stem : {"mvr_seed1", "mvr_seed2", "mvr_seed3", "va-pe_seed1",
                             "va-pe_seed2", "va-pe_seed3"}) {
        REQUIRE(fs::exists(dir1 / (std::string(stem) + ".csv")));
        REQUIRE(fs::exists(dir1 / (std::string(stem) + ".json")));
    }
    REQUIRE(fs::exists(dir1 / "summary.json"));

    const std::string csv = slurp(dir1 / "mvr_seed2.csv");
    const auto rows = parse_csv(csv);
    REQUIRE(rows.size() == 21);
    REQUIRE(rows[0] == std::vector<std::string>{"t", "x_index", "y", "rho2", "lambda2",
                                                "sigma_max", "instant_regret",
                                                "cumulative_regret"});
    double sum_inst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 8);
        REQUIRE(rows[i][0] == std::to_string(i));
        sum_inst += std::strtod(rows[i][6].c_str(), nullptr);
    }
    const double last_cum = std::strtod(rows.back()[7].c_str(), nullptr);
    REQUIRE(sum_inst == Catch::Approx(last_cum).margin(1e-9));

    const auto sidecar = nlohmann::json::parse(slurp(dir1 / "mvr_seed2.json"));
    REQUIRE(sidecar.at("summary").at("R_T").get<double>() == last_cum);
    REQUIRE(sidecar.at("config").at("seed").get<std::uint64_t>() == 2);
    REQUIRE(sidecar.at("config").at("algorithm").at("kind") == "mvr");
    REQUIRE(sidecar.at("config").at("env").at("function").contains("coeffs"));

    const auto pe_sidecar = nlohmann::json::parse(slurp(dir1 / "va-pe_seed1.json"));
    const auto& pe_algo = pe_sidecar.at("config").at("algorithm");
    REQUIRE(pe_algo.at("beta_half").get<double>() ==
            beta_half_for(NsvFixed{1.2, 14, 0.1, 20}));

    // medians in the aggregate must be recomputable from the per seed files
    const auto summary = nlohmann::json::parse(slurp(dir1 / "summary.json"));
    std::vector<double> R;
    for (int s : {1, 2, 3})
        R.push_back(nlohmann::json::parse(
                        slurp(dir1 / ("mvr_seed" + std::to_string(s) + ".json")))
                        .at("summary")
                        .at("R_T")
                        .get<double>());
    REQUIRE(summary.at("algorithms").at("mvr").at("median_R_T").get<double>() ==
            median_of(R));
    REQUIRE(summary.at("algorithms").at("mvr").at("R_T").get<std::vector<double>>() == R);

    // a second run and a parallel run must both be byte identical
    auto cfg2 = parse_experiment_config(experiment_config_json(dir2.string()));
    cfg2.verify_rerun = true;
    run_experiment(cfg2);
    auto cfg3 = parse_experiment_config(experiment_config_json(dir3.string()));
    run_experiment(cfg3, 4);
    for (const char* name : {"mvr_seed1.csv", "va-pe_seed3.csv", "summary.json"}) {
        REQUIRE(slurp(dir1 / name) == slurp(dir2 / name));
        REQUIRE(slurp(dir1 / name) == slurp(dir3 / name));
    }

    fs::remove_all(dir1);
    fs::remove_all(dir2);
    fs::remove_all(dir3);
}

TEST_CASE("experiment configs inject context and reject nonsense", "[harness]") {
    auto base = experiment_config_json("unused");

    SECTION("confidence context injection") {
        // noisy-fixed interval: rho comes from the stationary schedule, the
        // regularizer from the algorithm, sizes from env and horizon
        base["algorithms"] = {{{"name", "pe"},
                               {"kind", "pe"},
                               {"lambda2", 0.04},
                               {"N1", 4},
                               {"confidence",
                                {{"kind", "noisy-fixed"}, {"B", 1.2}, {"delta", 0.1}}}}};
        const auto cfg = parse_experiment_config(base);
        const auto* pe = std::get_if<PeConfig>(&cfg.algorithms[0].second);
        REQUIRE(pe != nullptr);
        const auto* nf = std::get_if<NoisyFixed>(&pe->confidence);
        REQUIRE(nf != nullptr);
        REQUIRE(nf->rho == Catch::Approx(0.2).margin(1e-15));
        REQUIRE(nf->lambda2 == 0.04);
        REQUIRE(nf->domain_size == 14);
        REQUIRE(nf->horizon == 20);
        const auto j = algo_to_json(cfg.algorithms[0].second);
        REQUIRE(j.at("beta_half").get<double>() == beta_half_for(pe->confidence));
    }
    SECTION("mvr default regularizer comes from the declared bound") {
        base["env"]["function"] = {{"sample", {{"m", 4}, {"B", 2.0}}}};
        base["algorithms"] = {{{"name", "m"}, {"kind", "mvr"}}};
        const auto cfg = parse_experiment_config(base);
        const auto* m = std::get_if<MvrConfig>(&cfg.algorithms[0].second);
        REQUIRE(m != nullptr);
        REQUIRE(m->lambda2 == mvr_default_lambda2(2.0));
    }
    SECTION("ucb wants the adaptive interval") {
        base["algorithms"] = {{{"name", "u"},
                               {"kind", "va-gp-ucb"},
                               {"zeta2", 0.01},
                               {"confidence",
                                {{"kind", "adaptive"}, {"B", 1.2}, {"delta", 0.1}}}}};
        const auto cfg = parse_experiment_config(base);
        const auto* u = std::get_if<VaGpUcbConfig>(&cfg.algorithms[0].second);
        REQUIRE(u != nullptr);
        REQUIRE(u->zeta2 == 0.01);
        REQUIRE(u->confidence.B == 1.2);

        base["algorithms"][0]["confidence"]["kind"] = "nsv-fixed";
        REQUIRE_THROWS_WITH(parse_experiment_config(base),
                            Catch::Matchers::ContainsSubstring("adaptive"));
    }
    SECTION("rejections") {
        auto missing_T = base;
        missing_T.erase("T");
        REQUIRE_THROWS_WITH(parse_experiment_config(missing_T),
                            Catch::Matchers::ContainsSubstring("T"));
        auto dup = base;
        dup["algorithms"][1]["name"] = "mvr";
        REQUIRE_THROWS_WITH(parse_experiment_config(dup),
                            Catch::Matchers::ContainsSubstring("duplicate"));
        auto bad_kind = base;
        bad_kind["algorithms"][0]["kind"] = "thompson";
        REQUIRE_THROWS_WITH(parse_experiment_config(bad_kind),
                            Catch::Matchers::ContainsSubstring("algorithm.kind"));
        auto bad_name = base;
        bad_name["algorithms"][0]["name"] = "a/b";
        REQUIRE_THROWS_WITH(parse_experiment_config(bad_name),
                            Catch::Matchers::ContainsSubstring("algorithm.name"));
        auto no_seeds = base;
        no_seeds["seeds"] = nlohmann::json::array();
        REQUIRE_THROWS_WITH(parse_experiment_config(no_seeds),
                            Catch::Matchers::ContainsSubstring("seeds"));
    }
}

TEST_CASE("ucb sidecars expose the running gain bracket", "[harness]") {
    const fs::path dir = fresh_dir("ucb");
    nlohmann::json j = experiment_config_json(dir.string());
    j["algorithms"] = {{{"name", "ucb"},
                        {"kind", "va-gp-ucb"},
                        {"zeta2", 0.02},
                        {"confidence", {{"kind", "adaptive"}, {"B", 1.2}, {"delta", 0.1}}}}};
    j["seeds"] = {1};
    auto cfg = parse_experiment_config(j);
    run_experiment(cfg);
    const auto sidecar = nlohmann::json::parse(slurp(dir / "ucb_seed1.json"));
    const auto& algo = sidecar.at("config").at("algorithm");
    REQUIRE(algo.at("kind") == "va-gp-ucb");
    REQUIRE(algo.contains("beta_half_final"));
    const double lo = algo.at("mig_bracket").at("lower").get<double>();
    const double hi = algo.at("mig_bracket").at("upper").get<double>();
    REQUIRE(lo >= 0.0);
    REQUIRE(hi >= lo);
    fs::remove_all(dir);
}
