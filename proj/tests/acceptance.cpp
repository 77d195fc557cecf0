// Acceptance checks. Prints one PASS/FAIL line per criterion; pass
// criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "capi/config.hpp"
#include "capi/engine.hpp"
#include "capi/environments.hpp"
#include "capi/experiment.hpp"
#include "capi/mdp.hpp"
#include "capi/policy_eval.hpp"
#include "capi/policy_improve.hpp"
#include "capi/theory.hpp"
#include "test_util.hpp"

using namespace capi;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

CapiConfig chain_capi(const std::string& id, std::size_t K) {
    CapiConfig cfg;
    cfg.env = {id};
    cfg.space.kind = PolicySpaceKind::threshold;
    cfg.evaluator.kind = EvaluatorKind::exact_one_step;
    cfg.nu = NuScheme::all_states;
    cfg.K = K;
    cfg.threads = worker_count();
    return cfg;
}

std::vector<ActionTable> action_tables(const RunResult& run, std::size_t n_states) {
    std::vector<ActionTable> out;
    for (const auto& p : run.policies) out.push_back(tabulate(p, n_states));
    return out;
}

Outcome criterion1() {
    auto start = Clock::now();
    auto cfg = chain_capi("chain_b", 10);
    auto capi_run = run_capi(cfg);
    auto pi_run = run_baseline(BaselineKind::pi, cfg);
    double worst = 0.0;
    for (std::size_t k = 4; k <= cfg.K; ++k) {
        worst = std::max(worst, std::abs(*capi_run.records[k - 1].performance_loss));
        worst = std::max(worst, std::abs(*pi_run.records[k - 1].performance_loss));
    }
    double secs = seconds_since(start);
    Outcome out;
    out.pass = worst <= 1e-9 && secs < 10.0;
    out.detail = "chain B, max |loss| of CAPI and PI over k=4..10 is " + fmt(worst) + ", " + fmt(secs, 3) + " s";
    return out;
}

Outcome criterion2() {
    auto start = Clock::now();
    auto cfg = chain_capi("chain_a", 15);
    auto mdp = make_tabular_mdp(cfg.env);
    auto rho = uniform_distribution(200);
    auto capi_run = run_capi(cfg);
    auto vi_run = run_baseline(BaselineKind::vi, cfg);
    auto zero_one = run_baseline(BaselineKind::zero_one_star, cfg);
    double capi_final = *capi_run.records.back().performance_loss;

    LossOracle oracle(mdp, rho);
    auto space = threshold_space(200);
    double floor = std::numeric_limits<double>::infinity();
    for (const auto& pi : space) floor = std::min(floor, oracle.loss(pi));
    std::vector<ActionTable> with_star = space;
    with_star.push_back(tabulate(solve_optimal(mdp).policy, 200));
    auto gpe = greedy_policy_error(mdp, with_star, rho, kDefaultSolveTol, worker_count());
    double star_projection = gpe.inf_loss.back();

    bool a = std::abs(capi_final - floor) <= 1e-9;
    double zero_one_final = *zero_one.records.back().performance_loss;
    bool b = zero_one_final > capi_final;
    bool c = true;
    for (std::size_t k = 3; k <= cfg.K; ++k)
        c = c && *capi_run.records[k - 1].performance_loss <= *vi_run.records[k - 1].performance_loss;
    double secs = seconds_since(start);

    Outcome out;
    out.pass = a && b && c && secs < 30.0;
    out.detail = std::string("chain A: (a) ") + (a ? "ok" : "no") + " CAPI final " + fmt(capi_final) +
                 " vs floor " + fmt(floor) + " (d = " + fmt(gpe.d) + ", Q* projection loss " +
                 fmt(star_projection) + "); (b) " + (b ? "ok" : "no") + " 0/1 loss " + fmt(zero_one_final) +
                 " vs CAPI " + fmt(capi_final) + "; (c) " + (c ? "ok" : "no") + " CAPI <= VI for k >= 3; " +
                 fmt(secs, 3) + " s";
    return out;
}

Outcome criterion3() {
    auto start = Clock::now();
    auto mdp = make_tabular_mdp({"chain_a"});
    Rng rng(303);
    std::size_t mismatches = 0;
    std::vector<State> states;
    for (std::size_t x = 0; x < 200; ++x) states.push_back(tabular_state(x));
    for (int trial = 0; trial < 100; ++trial) {
        auto q = capi::testing::random_q(200, 2, mdp.q_max(), rng);
        auto samples = build_weighted_dataset(q, states);
        auto best = improve_threshold(samples, 200);
        double found = empirical_weighted_loss(PolicyRepr(best), samples);

        double exhaustive = std::numeric_limits<double>::infinity();
        for (std::size_t p = 1; p <= 200; ++p) {
            for (int low = 0; low < 2; ++low) {
                double total = 0.0;
                for (std::size_t x = 0; x < 200; ++x) {
                    std::size_t a = x < p ? low : 1 - low;
                    double top = std::max(q(x, 0), q(x, 1));
                    total += top - q(x, a);
                }
                exhaustive = std::min(exhaustive, total);
            }
        }
        if (found != exhaustive) ++mismatches;
    }
    double secs = seconds_since(start);
    Outcome out;
    out.pass = mismatches == 0 && secs < 5.0;
    out.detail = "100 random tables, " + std::to_string(mismatches) + " mismatches, " + fmt(secs, 3) + " s";
    return out;
}

Outcome criterion4() {
    auto mdp = make_tabular_mdp({"chain_a"});
    Rng rng(404);
    auto space = threshold_space(200);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        PolicyRepr pi(TabularPolicy(space[uniform_index(rng, space.size())], 2));
        auto qhat = eval_exact(mdp, pi);
        auto q_pi = solve_q_policy(mdp, tabulate(pi, 200));
        auto states = sample_nu(mdp, NuScheme::uniform_states, 500, rng);
        auto samples = build_weighted_dataset(qhat, states);
        auto table = threshold_losses(samples, 200);
        for (std::size_t j = 0; j < space.size(); ++j) {
            double l_hat = table[j] / states.size();
            double l = 0.0;
            for (const auto& s : states) {
                std::size_t x = state_index(s, 200);
                l += std::max(q_pi(x, 0), q_pi(x, 1)) - q_pi(x, space[j][x]);
            }
            l /= states.size();
            worst = std::max(worst, std::abs(l_hat - l));
        }
    }
    Outcome out;
    out.pass = worst <= 1e-12;
    out.detail = "max |L_hat - L| over 400 thresholds and 10 datasets is " + fmt(worst);
    return out;
}

Outcome criterion5() {
    auto start = Clock::now();
    std::size_t checks = 0;
    std::size_t violations = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    auto check = [&](const PropagationReport& rep) {
        ++checks;
        if (!rep.holds) ++violations;
        min_slack = std::min(min_slack, rep.slack);
    };
    for (auto [id, K] : {std::pair<const char*, std::size_t>{"chain_b", 10}, {"chain_a", 15}}) {
        auto cfg = chain_capi(id, K);
        auto run = run_capi(cfg);
        auto mdp = make_tabular_mdp(cfg.env);
        auto u = uniform_distribution(200);
        check(propagation_bound_check(mdp, action_tables(run, 200), u, u, threshold_space(200), default_s_grid(), 0,
                                      kDefaultSolveTol, worker_count()));
    }
    Rng rng(505);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + uniform_index(rng, 7);
        auto mdp = capi::testing::random_mdp(n, 2, uniform(rng, 0.5, 0.95), rng, 1 + uniform_index(rng, 3));
        std::vector<double> nu(n);
        double total = 0.0;
        for (auto& v : nu) total += v = uniform01(rng) + 0.05;
        for (auto& v : nu) v /= total;
        auto rho = uniform_distribution(n);
        std::size_t K = 1 + uniform_index(rng, 8);
        std::vector<ActionTable> seq;
        for (std::size_t k = 0; k <= K; ++k) seq.push_back(capi::testing::random_actions(n, 2, rng));
        check(propagation_bound_check(mdp, seq, rho, nu, all_tabular_policies(n, 2), default_s_grid(), 0,
                                      kDefaultSolveTol, worker_count()));
    }
    double secs = seconds_since(start);
    Outcome out;
    out.pass = violations == 0 && secs < 60.0;
    out.detail = std::to_string(checks) + " checks, " + std::to_string(violations) + " violations, min slack " +
                 fmt(min_slack) + ", " + fmt(secs, 3) + " s";
    return out;
}

Outcome criterion6() {
    Rng rng(606);
    std::vector<double> gaps(100000);
    for (auto& g : gaps) g = uniform01(rng);
    auto fit = estimate_gap_exponent(gaps, default_eps_grid(1.0));
    std::vector<double> zeros(1000, 0.0);
    bool degenerate_ok = false;
    try {
        auto z = estimate_gap_exponent(zeros, default_eps_grid(1.0));
        degenerate_ok = z.degenerate() && z.zeta_hat == 0.0;
    } catch (...) {
        degenerate_ok = false;
    }
    Outcome out;
    out.pass = fit.zeta_hat >= 0.85 && fit.zeta_hat <= 1.15 && degenerate_ok;
    out.detail = "zeta_hat " + fmt(fit.zeta_hat) + ", all-zero input " + (degenerate_ok ? "handled" : "failed");
    return out;
}

Outcome criterion7() {
    auto start = Clock::now();
    auto mdp = make_tabular_mdp({"chain_a"});
    TabularEnv env(mdp);
    Rng rng(707);
    auto space = threshold_space(200);
    std::size_t failures = 0;
    double worst_ratio = 0.0;
    for (std::size_t horizon : {10u, 50u}) {
        for (int q = 0; q < 20; ++q) {
            PolicyRepr pi(TabularPolicy(space[uniform_index(rng, space.size())], 2));
            std::size_t x = uniform_index(rng, 200);
            std::size_t a = uniform_index(rng, 2);
            EvaluatorConfig cfg;
            cfg.kind = EvaluatorKind::rollout;
            cfg.rollout = {horizon, 2000};
            cfg.threads = worker_count();
            auto est = eval_rollout(env, pi, {{tabular_state(x), a}}, cfg, rng)->estimate(tabular_state(x), a);
            double exact = solve_q_policy(mdp, pi)(x, a);
            double allowed = std::pow(mdp.gamma(), double(horizon)) * mdp.r_max() / (1 - mdp.gamma()) +
                             3 * est.std_error;
            double err = std::abs(est.mean - exact);
            if (err > allowed) ++failures;
            worst_ratio = std::max(worst_ratio, err / allowed);
        }
    }
    double secs = seconds_since(start);
    Outcome out;
    out.pass = failures == 0 && secs < 60.0;
    out.detail = "40 queries, " + std::to_string(failures) + " outside tolerance, worst error/tolerance " +
                 fmt(worst_ratio, 3) + ", " + fmt(secs, 3) + " s";
    return out;
}

McResult evaluate_final(const CapiConfig& cfg, const RunResult& run, std::size_t episodes, std::size_t cap) {
    auto env = make_env(cfg.env);
    Rng rng(derive_seed(cfg.seed, 0xACCE97));
    return mc_return(*env, *run.final_policy, episodes, cap, env->gamma(), rng, worker_count());
}

CapiConfig mountain_car_knn(std::size_t n, std::uint64_t seed) {
    CapiConfig cfg;
    cfg.env = {"mountain_car"};
    cfg.space.kind = PolicySpaceKind::knn;
    cfg.space.knn_kappa = 75;
    cfg.evaluator.kind = EvaluatorKind::fqe_kernel;
    cfg.evaluator.kernel.bandwidth = 1e-2;
    cfg.evaluator.kernel.ridge_scale = 0.01;
    cfg.nu = NuScheme::uniform_box;
    cfg.collect = CollectScheme::iid_uniform;
    cfg.K = 5;
    cfg.n = n;
    cfg.seed = seed;
    cfg.threads = worker_count();
    return cfg;
}

Outcome criterion8() {
    auto start = Clock::now();
    std::vector<double> big, small_capi, small_fqi;
    for (std::uint64_t run = 0; run < 10; ++run) {
        auto cfg = mountain_car_knn(6000, 1 + run);
        big.push_back(evaluate_final(cfg, run_capi(cfg), 100, 200).mean_steps);
        auto small = mountain_car_knn(2000, 1 + run);
        small_capi.push_back(evaluate_final(small, run_capi(small), 100, 200).mean_steps);
        auto fqi = small;
        fqi.K = 100;
        small_fqi.push_back(evaluate_final(fqi, run_baseline(BaselineKind::fqi, fqi), 100, 200).mean_steps);
    }
    double m_big = median(big);
    double m_capi = median(small_capi);
    double m_fqi = median(small_fqi);
    double secs = seconds_since(start);
    Outcome out;
    out.pass = m_big < 150.0 && m_capi < m_fqi && secs < 900.0;
    out.detail = "median steps KNN-CAPI n=6000 " + fmt(m_big, 4) + "; n=2000 KNN-CAPI " + fmt(m_capi, 4) +
                 " vs kernel FQI " + fmt(m_fqi, 4) + "; " + fmt(secs, 4) + " s";
    return out;
}

Outcome criterion9() {
    auto start = Clock::now();
    auto spec_text = reproduce_config("fig-pole");
    std::istringstream in(spec_text);
    auto spec = parse_config(in);
    const AlgorithmSpec* tree_capi = nullptr;
    const AlgorithmSpec* tree_dpi = nullptr;
    for (const auto& a : spec.algorithms) {
        if (a.label == "tree_capi") tree_capi = &a;
        if (a.label == "tree_dpi") tree_dpi = &a;
    }
    if (!tree_capi || !tree_dpi) return {false, "fig-pole config lacks tree_capi or tree_dpi"};
    std::size_t capi_capped = 0, dpi_capped = 0, total = 0;
    for (std::uint64_t run = 0; run < 10; ++run) {
        auto capi_cfg = tree_capi->config;
        capi_cfg.space.trees.min_split = 20;
        capi_cfg.space.trees.n_trees = 30;
        capi_cfg.seed = 1 + run;
        capi_cfg.eval_episodes = 0;
        capi_cfg.threads = worker_count();
        auto dpi_cfg = tree_dpi->config;
        dpi_cfg.space.trees.min_split = 20;
        dpi_cfg.seed = 1 + run;
        dpi_cfg.eval_episodes = 0;
        dpi_cfg.threads = worker_count();
        auto capi_mc = evaluate_final(capi_cfg, run_capi(capi_cfg), 100, 1000);
        auto dpi_mc = evaluate_final(dpi_cfg, run_baseline(BaselineKind::dpi, dpi_cfg), 100, 1000);
        capi_capped += static_cast<std::size_t>(std::lround(capi_mc.cap_rate * 100));
        dpi_capped += static_cast<std::size_t>(std::lround(dpi_mc.cap_rate * 100));
        total += 100;
    }
    double capi_rate = double(capi_capped) / total;
    double dpi_rate = double(dpi_capped) / total;
    double secs = seconds_since(start);
    Outcome out;
    out.pass = capi_rate >= 0.9 && dpi_rate < capi_rate && secs < 1800.0;
    out.detail = "cap rate over " + std::to_string(total) + " episodes: Tree-CAPI " + fmt(capi_rate, 3) +
                 ", Tree-DPI " + fmt(dpi_rate, 3) + "; " + fmt(secs, 4) + " s";
    return out;
}

Outcome criterion10() {
    auto base = fs::temp_directory_path() / "capi_acceptance_c10";
    fs::remove_all(base);
    std::vector<std::string> contents;
    for (const char* name : {"first", "second"}) {
        std::istringstream in(reproduce_config("fig-chain-a"));
        RunOptions opts;
        opts.output_dir = (base / name).string();
        opts.write_run_dirs = false;
        auto out = run_experiment(parse_config(in), opts);
        std::ifstream f(out.records_path, std::ios::binary);
        std::ostringstream text;
        text << f.rdbuf();
        contents.push_back(text.str());
    }
    fs::remove_all(base);
    Outcome out;
    out.pass = !contents[0].empty() && contents[0] == contents[1];
    out.detail = "fig-chain-a records, " + std::to_string(contents[0].size()) + " bytes, " +
                 (out.pass ? "identical" : "different");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9, criterion10};
    std::vector<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        int c = std::atoi(argv[i]);
        if (c < 1 || c > static_cast<int>(criteria.size())) {
            std::cerr << "unknown criterion '" << argv[i] << "'\n";
            return 2;
        }
        selected.push_back(static_cast<std::size_t>(c));
    }
    if (selected.empty())
        for (std::size_t c = 1; c <= criteria.size(); ++c) selected.push_back(c);

    int failed = 0;
    for (auto c : selected) {
        Outcome o;
        try {
            o = criteria[c - 1]();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << ": " << o.detail << std::endl;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
