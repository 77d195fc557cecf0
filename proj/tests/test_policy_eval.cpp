#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "capi/environments.hpp"
#include "capi/extra_trees.hpp"
#include "capi/kernel_regression.hpp"
#include "capi/policy_eval.hpp"
#include "test_util.hpp"

using namespace capi;

namespace {

TabularMdp small_chain(double gamma, double success = 0.9, std::size_t n = 50) {
    return build_chain_walk({n, ChainVariant::B, gamma, success});
}

double variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / (v.size() - 1);
}

/// Values of the uniformly random stochastic policy.
std::vector<double> random_policy_values(const TabularMdp& mdp) {
    std::size_t n = mdp.n_states();
    std::vector<double> reward(n, 0.0);
    std::vector<double> transition(n * n, 0.0);
    double share = 1.0 / mdp.n_actions();
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            reward[x] += share * mdp.reward(x, a);
            for (std::size_t y = 0; y < n; ++y) transition[x * n + y] += share * mdp.prob(x, a, y);
        }
    TabularMdp avg(n, 1, mdp.gamma(), reward, transition, mdp.r_max());
    auto q = solve_q_policy(avg, std::vector<std::size_t>(n, 0));
    std::vector<double> v(n);
    for (std::size_t x = 0; x < n; ++x) v[x] = q(x, 0);
    return v;
}

}  // namespace

TEST_CASE("one-step evaluation delegates to the bellman backup") {
    auto mdp = small_chain(0.99, 0.9, 200);
    Rng rng(1);
    auto q = capi::testing::random_q(200, 2, 50.0, rng);
    TabularPolicy pi(capi::testing::random_actions(200, 2, rng), 2);
    auto a = eval_one_step(mdp, PolicyRepr(pi), q);
    auto b = bellman_backup(mdp, q, pi.actions());
    CHECK(a.values() == b.values());
    TabularQ zero(200, 2, mdp.q_max());
    auto first = eval_one_step(mdp, PolicyRepr(pi), zero);
    for (std::size_t x = 0; x < 200; ++x)
        for (std::size_t act = 0; act < 2; ++act) CHECK(first(x, act) == mdp.reward(x, act));
}

TEST_CASE("one-step evaluation fixes Q^pi and contracts toward it") {
    auto mdp = small_chain(0.99, 0.9, 200);
    Rng rng(2);
    PolicyRepr pi(TabularPolicy(capi::testing::random_actions(200, 2, rng), 2));
    auto q_pi = eval_exact(mdp, pi);
    CHECK(sup_distance(eval_one_step(mdp, pi, q_pi), q_pi) <= 1e-9);
    auto q = capi::testing::random_q(200, 2, 50.0, rng);
    CHECK(sup_distance(eval_one_step(mdp, pi, q), q_pi) <= 0.99 * sup_distance(q, q_pi) + 1e-9);
}

TEST_CASE("rollout on a deterministic chain equals the truncated return") {
    auto mdp = small_chain(0.9, 1.0, 30);
    TabularEnv env(mdp);
    PolicyRepr left = constant_tabular_policy(30, 2, 0);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::rollout;
    cfg.rollout = {20, 1};
    Rng rng(3);
    auto q = eval_rollout(env, left, all_action_queries({tabular_state(20)}, 2), cfg, rng);
    double expected = 0.0;
    double discount = 1.0;
    std::size_t x = 20;
    for (std::size_t t = 0; t < 20; ++t) {
        std::size_t a = t == 0 ? 1 : 0;
        expected += discount * mdp.reward(x, a);
        x = a == 1 ? std::min<std::size_t>(x + 1, 29) : (x == 0 ? 0 : x - 1);
        discount *= 0.9;
    }
    CHECK(q->value(tabular_state(20), 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(q->estimate(tabular_state(20), 1).samples == 1);
    CHECK_THROWS_AS(q->value(tabular_state(5), 0), ContractViolation);
}

TEST_CASE("rollout estimates sit within the truncation bias of Q^pi") {
    auto mdp = small_chain(0.9, 0.9, 30);
    TabularEnv env(mdp);
    Rng rng(4);
    PolicyRepr pi(TabularPolicy(capi::testing::random_actions(30, 2, rng), 2));
    auto exact = eval_exact(mdp, pi);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::rollout;
    for (std::size_t horizon : {5u, 40u}) {
        cfg.rollout = {horizon, 2000};
        std::vector<State> states{tabular_state(3), tabular_state(11), tabular_state(25)};
        auto q = eval_rollout(env, pi, all_action_queries(states, 2), cfg, rng);
        double bias = std::pow(0.9, double(horizon)) * mdp.r_max() / (1 - 0.9);
        for (const auto& s : states)
            for (std::size_t a = 0; a < 2; ++a) {
                auto e = q->estimate(s, a);
                CHECK(std::abs(e.mean - exact(state_index(s, 30), a)) <= bias + 3 * e.std_error + 1e-12);
            }
    }
}

TEST_CASE("rollout variance shrinks as one over the trajectory count") {
    auto mdp = small_chain(0.9, 0.7, 30);
    TabularEnv env(mdp);
    PolicyRepr pi = constant_tabular_policy(30, 2, 0);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::rollout;
    auto spread = [&](std::size_t m) {
        std::vector<double> values;
        Rng rng(5 + m);
        cfg.rollout = {30, m};
        for (int r = 0; r < 400; ++r) {
            auto q = eval_rollout(env, pi, {{tabular_state(14), 1}}, cfg, rng);
            values.push_back(q->value(tabular_state(14), 1));
        }
        return variance(values);
    };
    double ratio = spread(1) / spread(100);
    CHECK(ratio > 100.0 / 3);
    CHECK(ratio < 300.0);
}

TEST_CASE("extra-trees fit a step function away from the step") {
    Rng rng(6);
    RegressionData data;
    data.dim = 1;
    for (int i = 0; i < 1000; ++i) {
        double x = uniform01(rng);
        data.add(std::vector<double>{x}, x < 0.5 ? 0.0 : 1.0);
    }
    TreeConfig cfg;
    cfg.min_split = 5;
    auto forest = fit_tree_regressor(data, cfg, rng);
    double err = 0.0;
    int count = 0;
    for (double x = 0.1; x <= 0.9; x += 0.001) {
        if (std::abs(x - 0.5) < 0.02) continue;
        err += std::abs(forest.predict(std::vector<double>{x}) - (x < 0.5 ? 0.0 : 1.0));
        ++count;
    }
    CHECK(err / count < 0.05);
}

TEST_CASE("extra-trees reproduce constant targets and single leaves") {
    Rng rng(7);
    RegressionData data;
    data.dim = 2;
    double sum = 0.0;
    for (int i = 0; i < 200; ++i) {
        double y = uniform01(rng);
        sum += y;
        data.add(std::vector<double>{uniform01(rng), uniform01(rng)}, y);
    }
    TreeConfig big;
    big.min_split = 201;
    auto leafy = fit_tree_regressor(data, big, rng);
    CHECK(leafy.predict(std::vector<double>{0.3, 0.7}) == doctest::Approx(sum / 200).epsilon(1e-12));
    for (const auto& t : leafy.trees()) CHECK(t.nodes().size() == 1);

    RegressionData flat = data;
    std::fill(flat.targets.begin(), flat.targets.end(), 2.5);
    auto constant = fit_tree_regressor(flat, TreeConfig{}, rng);
    for (int i = 0; i < 20; ++i)
        CHECK(constant.predict(std::vector<double>{uniform(rng, -1, 2), uniform(rng, -1, 2)}) ==
              doctest::Approx(2.5));
    auto forest = fit_tree_regressor(data, TreeConfig{}, rng);
    for (const auto& t : forest.trees())
        for (const auto& node : t.nodes()) CHECK(node.count >= 1);
    RegressionData empty;
    empty.dim = 1;
    CHECK_THROWS_AS(fit_tree_regressor(empty, TreeConfig{}, rng), ContractViolation);
}

TEST_CASE("extra-trees do not depend on the thread count") {
    RegressionData data;
    data.dim = 2;
    Rng gen(8);
    for (int i = 0; i < 500; ++i) {
        double a = uniform01(gen);
        double b = uniform01(gen);
        data.add(std::vector<double>{a, b}, std::sin(6 * a) + b);
    }
    TreeConfig one;
    TreeConfig four;
    four.threads = 4;
    Rng r1(9);
    Rng r2(9);
    auto f1 = fit_tree_regressor(data, one, r1);
    auto f2 = fit_tree_regressor(data, four, r2);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x{uniform01(gen), uniform01(gen)};
        CHECK(f1.predict(x) == f2.predict(x));
    }
}

TEST_CASE("kernel ridge on one point shrinks the target by 1 + lambda") {
    Rng rng(10);
    KernelConfig cfg;
    KernelRidge ridge({0.3, 0.4}, 2, cfg, rng);
    CHECK(ridge.lambda() == doctest::Approx(0.01));
    auto f = ridge.fit(std::vector<double>{2.0});
    CHECK(f.predict(std::vector<double>{0.3, 0.4}) == doctest::Approx(2.0 / 1.01).epsilon(1e-10));
}

TEST_CASE("kernel ridge predictions vanish under heavy regularization") {
    Rng rng(11);
    std::vector<double> inputs;
    std::vector<double> targets;
    for (int i = 0; i < 100; ++i) {
        inputs.push_back(uniform01(rng));
        targets.push_back(uniform(rng, 1.0, 2.0));
    }
    KernelConfig cfg;
    cfg.ridge_scale = 1e12;
    KernelRidge ridge(inputs, 1, cfg, rng);
    auto f = ridge.fit(targets);
    for (int i = 0; i < 20; ++i) CHECK(std::abs(f.predict(std::vector<double>{uniform01(rng)})) < 1e-6);
}

TEST_CASE("kernel predictions are continuous") {
    Rng rng(12);
    std::vector<double> inputs;
    std::vector<double> targets;
    for (int i = 0; i < 300; ++i) {
        double a = uniform01(rng);
        double b = uniform01(rng);
        inputs.insert(inputs.end(), {a, b});
        targets.push_back(std::cos(4 * a) * b);
    }
    KernelRidge ridge(inputs, 2, KernelConfig{}, rng);
    auto f = ridge.fit(targets);
    for (int i = 0; i < 10; ++i) {
        std::vector<double> x{uniform01(rng), uniform01(rng)};
        double far = std::abs(f.predict(x) - f.predict(std::vector<double>{x[0] + 1e-3, x[1]}));
        double near = std::abs(f.predict(x) - f.predict(std::vector<double>{x[0] + 1e-6, x[1]}));
        CHECK(near <= far / 100 + 1e-9);
    }
    CHECK(ridge.centers().size() <= 2 * 800);
}

TEST_CASE("kernel dictionary respects its cap") {
    Rng rng(13);
    std::vector<double> inputs(2000);
    for (auto& v : inputs) v = uniform01(rng);
    KernelConfig cfg;
    cfg.dictionary_cap = 100;
    KernelRidge ridge(inputs, 1, cfg, rng);
    CHECK(ridge.centers().size() == 100);
    CHECK(ridge.lambda() == doctest::Approx(0.01 / 2000));
}

TEST_CASE("tree fitted Q evaluation approaches the tabular Q^pi") {
    auto mdp = small_chain(0.9, 0.9, 50);
    TabularEnv env(mdp);
    Rng rng(14);
    PolicyRepr pi(ThresholdPolicy(20, Orientation::low_is_a0));
    auto data = collect_transitions(env, 20000, CollectScheme::iid_uniform, rng);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::fqe_trees;
    cfg.trees.min_split = 5;
    auto q = eval_fqe_trees(env, pi, data, cfg, rng);
    auto exact = eval_exact(mdp, pi);
    double worst = 0.0;
    for (std::size_t x = 0; x < 50; ++x)
        for (std::size_t a = 0; a < 2; ++a)
            worst = std::max(worst, std::abs(q->value(tabular_state(x), a) - exact(x, a)));
    CHECK(worst < 0.1 * mdp.q_max());
}

TEST_CASE("fitted Q evaluation with one iteration regresses rewards") {
    auto mdp = small_chain(0.9, 0.9, 30);
    TabularEnv env(mdp);
    Rng rng(15);
    auto data = collect_transitions(env, 3000, CollectScheme::iid_uniform, rng);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::fqe_trees;
    cfg.fqe_iterations = 1;
    cfg.trees.min_split = 2;
    auto q = eval_fqe_trees(env, constant_tabular_policy(30, 2, 0), data, cfg, rng);
    for (std::size_t x = 0; x < 30; ++x)
        for (std::size_t a = 0; a < 2; ++a) CHECK(q->value(tabular_state(x), a) == doctest::Approx(mdp.reward(x, a)));
    CHECK_THROWS_AS(eval_fqe_trees(env, constant_tabular_policy(30, 2, 0), {}, cfg, rng), ContractViolation);
}

TEST_CASE("kernel fitted Q evaluation is deterministic and bounded") {
    MountainCar mc;
    Rng gen(16);
    auto data = collect_transitions(mc, 1000, CollectScheme::iid_uniform, gen);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::fqe_kernel;
    cfg.fqe_iterations = 20;
    PolicyRepr pi = PolicyRepr(KnnPolicy({State{0.0, 0.0}}, {0.0, 0.0, 1.0}, 3, 1));
    Rng r1(17);
    Rng r2(17);
    auto q1 = eval_fqe_kernel(mc, pi, data, cfg, r1);
    auto q2 = eval_fqe_kernel(mc, pi, data, cfg, r2);
    for (int i = 0; i < 50; ++i) {
        auto x = sample_nu(mc, NuScheme::uniform_box, 1, gen)[0];
        for (std::size_t a = 0; a < 3; ++a) {
            CHECK(q1->value(x, a) == q2->value(x, a));
            CHECK(std::abs(q1->value(x, a)) <= mc.q_max());
        }
    }
}

TEST_CASE("fitted Q iteration on the chain beats the random policy") {
    auto mdp = build_chain_walk({200, ChainVariant::B, 0.99, 0.9});
    TabularEnv env(mdp);
    Rng rng(18);
    auto data = collect_transitions(env, 10000, CollectScheme::iid_uniform, rng);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::fqe_trees;
    auto q = run_fqi_optimal(env, data, cfg, rng, 100);
    GreedyPolicy greedy(q);
    LossOracle oracle(mdp, uniform_distribution(200));
    auto v_rand = random_policy_values(mdp);
    double random_loss = 0.0;
    for (std::size_t x = 0; x < 200; ++x) random_loss += (oracle.v_star()[x] - v_rand[x]) / 200;
    CHECK(oracle.loss(tabulate(greedy, 200)) < 0.2 * random_loss);
    for (std::size_t x = 0; x < 200; ++x)
        for (std::size_t a = 0; a < 2; ++a) CHECK(std::abs(q->value(tabular_state(x), a)) <= mdp.q_max());
}

TEST_CASE("fitted Q iteration reports every iterate") {
    MountainCar mc;
    Rng rng(19);
    auto data = collect_transitions(mc, 500, CollectScheme::iid_uniform, rng);
    EvaluatorConfig cfg;
    cfg.kind = EvaluatorKind::fqe_trees;
    std::vector<std::size_t> seen;
    run_fqi_optimal(mc, data, cfg, rng, 4, [&](std::size_t j, const ActionValueFn&) { seen.push_back(j); });
    CHECK(seen == std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("default fitted Q iteration count covers the effective horizon") {
    CHECK(default_fqe_iterations(0.01, 0.9, 1.0) == 66);
    CHECK(default_fqe_iterations(0.01, 0.99, 1.0) == 100);
    CHECK(default_fqe_iterations(10.0, 0.5, 1.0) == 1);
    EvaluatorConfig bad;
    bad.rollout.horizon = 0;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
}
