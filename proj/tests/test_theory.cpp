#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "capi/environments.hpp"
#include "capi/theory.hpp"
#include "test_util.hpp"

using namespace capi;
using capi::testing::random_actions;
using capi::testing::random_mdp;

namespace {

TabularMdp uniform_kernel_mdp(std::size_t n, double gamma, Rng& rng) {
    std::vector<double> reward(n * 2);
    for (auto& r : reward) r = uniform(rng, -1, 1);
    std::vector<double> transition(n * 2 * n, 1.0 / n);
    return TabularMdp(n, 2, gamma, reward, transition, 1.0);
}

std::vector<double> random_distribution(std::size_t n, Rng& rng) {
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) total += v = uniform01(rng) + 0.05;
    for (auto& v : p) v /= total;
    return p;
}

/// rho P_a^{m1} P_b^{m2} by explicit vector-matrix products.
std::vector<double> push(const TabularMdp& mdp, std::vector<double> d, const ActionTable& a, std::size_t m1,
                         const ActionTable& b, std::size_t m2) {
    const std::size_t n = mdp.n_states();
    auto step = [&](const ActionTable& pi) {
        std::vector<double> out(n, 0.0);
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y = 0; y < n; ++y) out[y] += d[x] * mdp.prob(x, pi[x], y);
        d = out;
    };
    for (std::size_t i = 0; i < m1; ++i) step(a);
    for (std::size_t i = 0; i < m2; ++i) step(b);
    return d;
}

}  // namespace

TEST_CASE("gap exponent of uniform gaps is one") {
    Rng rng(1);
    std::vector<double> gaps(100000);
    for (auto& g : gaps) g = uniform01(rng);
    auto fit = estimate_gap_exponent(gaps, default_eps_grid(1.0));
    CHECK(fit.status == GapFitStatus::fitted);
    CHECK(fit.zeta_hat >= 0.85);
    CHECK(fit.zeta_hat <= 1.15);
    CHECK(fit.cg_hat == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("gap exponent of squared uniform gaps is one half") {
    Rng rng(2);
    std::vector<double> gaps(100000);
    for (auto& g : gaps) {
        double u = uniform01(rng);
        g = u * u;
    }
    auto fit = estimate_gap_exponent(gaps, default_eps_grid(1.0));
    CHECK(fit.zeta_hat == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("degenerate gap inputs are reported without failing") {
    std::vector<double> zeros(1000, 0.0);
    auto fit = estimate_gap_exponent(zeros, default_eps_grid(1.0));
    CHECK(fit.status == GapFitStatus::all_zero);
    CHECK(fit.degenerate());
    CHECK(fit.zeta_hat == 0.0);
    CHECK(fit.cg_hat == 1.0);
    std::vector<double> big(10, 50.0);
    auto none = estimate_gap_exponent(big, default_eps_grid(1.0));
    CHECK(none.status == GapFitStatus::no_mass_on_grid);
    auto grid = default_eps_grid(2.0, 5);
    REQUIRE(grid.size() == 5);
    CHECK(grid.front() == doctest::Approx(2e-4));
    CHECK(grid.back() == doctest::Approx(2.0));
}

TEST_CASE("expected greedy loss weights regrets by nu") {
    TabularQ q(2, 2, 10.0, {1.0, 3.0, 5.0, 4.0});
    std::vector<double> nu{0.25, 0.75};
    CHECK(expected_greedy_loss(q, ActionTable{0, 1}, nu) == doctest::Approx(0.25 * 2 + 0.75 * 1));
    CHECK(expected_greedy_loss(q, ActionTable{1, 0}, nu) == 0.0);
}

TEST_CASE("a space holding every greedy policy has zero greedy error") {
    Rng rng(3);
    auto mdp = random_mdp(5, 2, 0.9, rng);
    auto space = all_tabular_policies(5, 2);
    CHECK(space.size() == 32);
    auto res = greedy_policy_error(mdp, space, uniform_distribution(5));
    CHECK(res.d <= 1e-12);
    CHECK_THROWS_AS(all_tabular_policies(30, 2, 1000), ContractViolation);
}

TEST_CASE("threshold space on chain A has positive greedy error") {
    auto mdp = build_chain_walk({200, ChainVariant::A, 0.99, 0.9});
    auto space = threshold_space(200);
    REQUIRE(space.size() == 400);
    CHECK(space[0][0] == 0);
    CHECK(space[0][1] == 1);
    CHECK(space[1][0] == 1);
    CHECK(space[1][1] == 0);
    CHECK(space[398] == ActionTable(200, 0));
    CHECK(space[399] == ActionTable(200, 1));
    auto res = greedy_policy_error(mdp, space, uniform_distribution(200), kDefaultSolveTol, 2);
    CHECK(res.d > 0.0);
    CHECK(res.inf_loss[res.worst] == res.d);
    auto q = solve_q_policy(mdp, space[res.worst]);
    CHECK(expected_greedy_loss(q, space[res.best_response], uniform_distribution(200)) ==
          doctest::Approx(res.d).epsilon(1e-12));
}

TEST_CASE("concentrability of identical start and sampling laws is one") {
    Rng rng(4);
    auto mdp = random_mdp(6, 2, 0.9, rng);
    auto nu = random_distribution(6, rng);
    auto pi = random_actions(6, 2, rng);
    CHECK(concentrability(mdp, nu, nu, pi, pi, 0, 0) == doctest::Approx(1.0));
    auto rho = random_distribution(6, rng);
    double expected = 0.0;
    for (std::size_t x = 0; x < 6; ++x) expected = std::max(expected, rho[x] / nu[x]);
    CHECK(concentrability(mdp, rho, nu, pi, pi, 0, 0) == doctest::Approx(expected));
}

TEST_CASE("concentrability matches explicit matrix products") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto mdp = random_mdp(5, 2, 0.9, rng, 2);
        auto rho = random_distribution(5, rng);
        auto nu = random_distribution(5, rng);
        auto a = random_actions(5, 2, rng);
        auto b = random_actions(5, 2, rng);
        std::size_t m1 = uniform_index(rng, 4);
        std::size_t m2 = uniform_index(rng, 4);
        auto d = push(mdp, rho, a, m1, b, m2);
        double expected = 0.0;
        for (std::size_t x = 0; x < 5; ++x) expected = std::max(expected, d[x] / nu[x]);
        CHECK(concentrability(mdp, rho, nu, a, b, m1, m2) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("concentrability is infinite when mass reaches an unsampled state") {
    auto mdp = build_chain_walk({5, ChainVariant::B, 0.9, 1.0});
    std::vector<double> rho{1, 0, 0, 0, 0};
    std::vector<double> nu{0.5, 0.5, 0, 0, 0};
    ActionTable right(5, 1);
    CHECK(concentrability(mdp, rho, nu, right, right, 0, 1) == doctest::Approx(2.0));
    CHECK(concentrability(mdp, rho, nu, right, right, 1, 1) == kInfinite);
}

TEST_CASE("concentrability series has a closed form when every coefficient is one") {
    Rng rng(6);
    const double gamma = 0.8;
    auto mdp = uniform_kernel_mdp(4, gamma, rng);
    auto u = uniform_distribution(4);
    auto space = all_tabular_policies(4, 2);
    auto table = concentrability_series(mdp, u, u, space, 5, default_s_grid(), 30);
    CHECK(table.c_max == doctest::Approx(1.0));
    for (std::size_t K = 1; K <= 5; ++K)
        for (std::size_t j = 0; j < table.s_grid.size(); ++j) {
            double s = table.s_grid[j];
            double outer = 0.0;
            for (std::size_t k = 0; k < K; ++k) outer += std::pow(gamma, (1 - s) * k);
            double expected = 0.5 * (1 - std::pow(gamma, 31)) * outer;
            CHECK(table.value(K, j) == doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("concentrability series grows with K and with s") {
    Rng rng(7);
    auto mdp = random_mdp(5, 2, 0.9, rng, 2);
    auto u = uniform_distribution(5);
    auto space = all_tabular_policies(5, 2);
    auto table = concentrability_series(mdp, u, u, space, 6, default_s_grid());
    for (std::size_t K = 2; K <= 6; ++K)
        for (std::size_t j = 0; j < table.s_grid.size(); ++j) CHECK(table.value(K, j) >= table.value(K - 1, j));
    for (std::size_t j = 1; j < table.s_grid.size(); ++j) CHECK(table.value(6, j) >= table.value(6, j - 1));
}

TEST_CASE("doubling the truncation moves the series by at most the tail bound") {
    Rng rng(8);
    auto mdp = random_mdp(4, 2, 0.9, rng, 2);
    auto u = uniform_distribution(4);
    auto space = all_tabular_policies(4, 2);
    auto short_table = concentrability_series(mdp, u, u, space, 3, default_s_grid(), 40);
    auto long_table = concentrability_series(mdp, u, u, space, 3, default_s_grid(), 80);
    for (std::size_t j = 0; j < short_table.s_grid.size(); ++j) {
        double diff = long_table.value(3, j) - short_table.value(3, j);
        CHECK(diff >= -1e-12);
        CHECK(diff <= short_table.tail_bound[2][j] + 1e-12);
    }
    CHECK(default_m_cap(0.99) == 1375);
}

TEST_CASE("error propagation bound holds on fuzzed policy sequences") {
    Rng rng(9);
    for (int trial = 0; trial < 15; ++trial) {
        std::size_t n = 2 + uniform_index(rng, 5);
        auto mdp = random_mdp(n, 2, uniform(rng, 0.5, 0.95), rng, 2);
        auto nu = random_distribution(n, rng);
        auto rho = random_distribution(n, rng);
        std::size_t K = 1 + uniform_index(rng, 5);
        std::vector<ActionTable> seq;
        for (std::size_t k = 0; k <= K; ++k) seq.push_back(random_actions(n, 2, rng));
        auto rep = propagation_bound_check(mdp, seq, rho, nu, all_tabular_policies(n, 2), default_s_grid());
        CHECK(rep.holds);
        CHECK(rep.K == K);
        CHECK(rep.step_loss.size() == K);
        CHECK(rep.slack >= -1e-9);
    }
}

TEST_CASE("bound check reports the exact final loss") {
    auto mdp = build_chain_walk({20, ChainVariant::B, 0.9, 0.9});
    auto u = uniform_distribution(20);
    auto opt = solve_optimal(mdp);
    std::vector<ActionTable> seq{ActionTable(20, 0), tabulate(opt.policy, 20)};
    auto rep = propagation_bound_check(mdp, seq, u, u, threshold_space(20), default_s_grid());
    LossOracle oracle(mdp, u);
    CHECK(rep.loss == doctest::Approx(oracle.loss(seq.back())).epsilon(1e-12));
    CHECK(rep.holds);
}
