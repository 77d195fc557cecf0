#include "capi/theory.hpp"

#include <algorithm>
#include <cmath>

#include "capi/parallel.hpp"

namespace capi {

std::vector<double> default_eps_grid(double q_max, std::size_t points) {
    require(q_max > 0.0, "q_max must be positive");
    require(points >= 2, "need at least two grid points");
    std::vector<double> grid(points);
    const double lo = std::log(1e-4 * q_max), hi = std::log(q_max);
    for (std::size_t i = 0; i < points; ++i)
        grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    return grid;
}

GapFitResult estimate_gap_exponent(std::span<const double> gaps, std::vector<double> eps_grid) {
    require(!gaps.empty(), "no gaps to fit");
    require(!eps_grid.empty(), "empty eps grid");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        require(eps_grid[i] > 0.0, "eps grid must be positive");
        require(i == 0 || eps_grid[i] > eps_grid[i - 1], "eps grid must be increasing");
    }
    std::vector<double> positive;
    for (double g : gaps) {
        require(g >= 0.0, "gaps must be non-negative");
        if (g > 0.0) positive.push_back(g);
    }
    std::sort(positive.begin(), positive.end());

    GapFitResult out;
    out.eps_grid = std::move(eps_grid);
    out.empirical_probs.resize(out.eps_grid.size());
    const double n = static_cast<double>(gaps.size());
    for (std::size_t i = 0; i < out.eps_grid.size(); ++i) {
        auto count = std::upper_bound(positive.begin(), positive.end(), out.eps_grid[i]) - positive.begin();
        out.empirical_probs[i] = static_cast<double>(count) / n;
    }
    if (positive.empty()) {
        out.status = GapFitStatus::all_zero;
        return out;
    }
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < out.eps_grid.size(); ++i) {
        if (out.empirical_probs[i] > 0.0) {
            lx.push_back(std::log(out.eps_grid[i]));
            ly.push_back(std::log(out.empirical_probs[i]));
        }
    }
    out.points_used = lx.size();
    if (lx.size() < 2) {
        out.status = GapFitStatus::no_mass_on_grid;
        return out;
    }
    const double m = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    out.zeta_hat = sxy / sxx;
    const double intercept = my - out.zeta_hat * mx;
    out.cg_hat = std::exp(intercept);
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        double r = ly[i] - (intercept + out.zeta_hat * lx[i]);
        rss += r * r;
    }
    out.fit_residual = std::sqrt(rss / m);
    return out;
}

std::vector<ActionTable> threshold_space(std::size_t n_states) {
    require(n_states >= 1, "need at least one state");
    std::vector<ActionTable> out;
    out.reserve(2 * n_states);
    for (std::size_t p = 1; p <= n_states; ++p) {
        for (std::size_t low = 0; low < 2; ++low) {
            ActionTable t(n_states);
            for (std::size_t x = 0; x < n_states; ++x) t[x] = x < p ? low : 1 - low;
            out.push_back(std::move(t));
        }
    }
    return out;
}

std::vector<ActionTable> all_tabular_policies(std::size_t n_states, std::size_t n_actions, std::size_t limit) {
    require(n_states >= 1 && n_actions >= 1, "empty policy space");
    double count = std::pow(static_cast<double>(n_actions), static_cast<double>(n_states));
    require(count <= static_cast<double>(limit), "policy space too large to enumerate");
    std::vector<ActionTable> out;
    out.reserve(static_cast<std::size_t>(count));
    ActionTable t(n_states, 0);
    for (;;) {
        out.push_back(t);
        std::size_t x = 0;
        while (x < n_states && ++t[x] == n_actions) t[x++] = 0;
        if (x == n_states) break;
    }
    return out;
}

double expected_greedy_loss(const TabularQ& q_prime, std::span<const std::size_t> pi, std::span<const double> nu) {
    require(pi.size() == q_prime.n_states() && nu.size() == q_prime.n_states(), "dimension mismatch");
    double total = 0.0;
    for (std::size_t x = 0; x < pi.size(); ++x) {
        if (nu[x] == 0.0) continue;
        total += nu[x] * action_gap(q_prime.row(x), pi[x]);
    }
    return total;
}

GreedyPolicyErrorResult greedy_policy_error(const TabularMdp& mdp, const std::vector<ActionTable>& space,
                                            std::span<const double> nu, double tol, std::size_t threads) {
    require(!space.empty(), "empty policy space");
    validate_distribution(nu, mdp.n_states());
    GreedyPolicyErrorResult out;
    out.inf_loss.assign(space.size(), 0.0);
    out.argmin.assign(space.size(), 0);
    parallel_for(space.size(), threads, [&](std::size_t j) {
        TabularQ q = solve_q_policy(mdp, space[j], tol);
        double best = 0.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < space.size(); ++i) {
            double l = expected_greedy_loss(q, space[i], nu);
            if (i == 0 || l < best) {
                best = l;
                arg = i;
            }
        }
        out.inf_loss[j] = best;
        out.argmin[j] = arg;
    });
    for (std::size_t j = 0; j < space.size(); ++j) {
        if (j == 0 || out.inf_loss[j] > out.d) {
            out.d = out.inf_loss[j];
            out.worst = j;
        }
    }
    out.best_response = out.argmin[out.worst];
    return out;
}

namespace {

// d P^pi.
void propagate(const TabularMdp& mdp, std::span<const std::size_t> pi, const std::vector<double>& d,
               std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t x = 0; x < d.size(); ++x) {
        if (d[x] == 0.0) continue;
        for (const auto& s : mdp.successors(x, pi[x])) out[s.next] += d[x] * s.prob;
    }
}

double density_ratio(const std::vector<double>& d, std::span<const double> nu) {
    double worst = 0.0;
    for (std::size_t x = 0; x < d.size(); ++x) {
        if (d[x] <= 0.0) continue;
        if (nu[x] == 0.0) return kInfinite;
        worst = std::max(worst, d[x] / nu[x]);
    }
    return worst;
}

void check_table(const TabularMdp& mdp, std::span<const std::size_t> pi) {
    require(pi.size() == mdp.n_states(), "policy has wrong number of states");
    for (auto a : pi) require(a < mdp.n_actions(), "policy action out of range");
}

ActionTable optimal_actions(const TabularMdp& mdp, double tol) {
    auto opt = solve_optimal(mdp, tol);
    return tabulate(opt.policy, mdp.n_states());
}

}  // namespace

double concentrability(const TabularMdp& mdp, std::span<const double> rho, std::span<const double> nu,
                       std::span<const std::size_t> pi_star, std::span<const std::size_t> pi, std::size_t m1,
                       std::size_t m2) {
    validate_distribution(rho, mdp.n_states());
    validate_distribution(nu, mdp.n_states());
    check_table(mdp, pi_star);
    check_table(mdp, pi);
    std::vector<double> d(rho.begin(), rho.end()), next(d.size());
    for (std::size_t i = 0; i < m1; ++i) {
        propagate(mdp, pi_star, d, next);
        d.swap(next);
    }
    for (std::size_t i = 0; i < m2; ++i) {
        propagate(mdp, pi, d, next);
        d.swap(next);
    }
    return density_ratio(d, nu);
}

std::size_t default_m_cap(double gamma) {
    require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    return static_cast<std::size_t>(std::ceil(std::log(1e-6) / std::log(gamma)));
}

std::vector<double> default_s_grid() {
    std::vector<double> s(11);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i) / 10.0;
    return s;
}

ConcentrabilityTable concentrability_series(const TabularMdp& mdp, std::span<const double> rho,
                                            std::span<const double> nu, const std::vector<ActionTable>& space,
                                            std::size_t K, std::vector<double> s_grid, std::size_t m_cap,
                                            double tol, std::size_t threads) {
    require(K >= 1, "K must be at least 1");
    require(!space.empty(), "empty policy space");
    require(!s_grid.empty(), "empty s grid");
    for (double s : s_grid) require(s >= 0.0 && s <= 1.0, "s must lie in [0, 1]");
    validate_distribution(rho, mdp.n_states());
    validate_distribution(nu, mdp.n_states());
    for (const auto& pi : space) check_table(mdp, pi);
    const double gamma = mdp.gamma();
    if (m_cap == 0) m_cap = gamma > 0.0 ? default_m_cap(gamma) : 1;
    const std::size_t S = mdp.n_states();

    ActionTable pi_star = optimal_actions(mdp, tol);
    std::vector<std::vector<double>> start(K);
    start[0].assign(rho.begin(), rho.end());
    for (std::size_t k = 1; k < K; ++k) {
        start[k].resize(S);
        propagate(mdp, pi_star, start[k - 1], start[k]);
    }

    // Per-chunk running sup, merged afterwards.
    const std::size_t chunks = std::max<std::size_t>(1, std::min(threads, space.size()));
    std::vector<std::vector<std::vector<double>>> partial(
        chunks, std::vector<std::vector<double>>(K, std::vector<double>(m_cap + 1, 0.0)));
    parallel_for(chunks, chunks, [&](std::size_t c) {
        std::vector<double> d(S), next(S);
        for (std::size_t j = c; j < space.size(); j += chunks) {
            for (std::size_t k = 0; k < K; ++k) {
                d = start[k];
                for (std::size_t m = 0; m <= m_cap; ++m) {
                    auto& slot = partial[c][k][m];
                    slot = std::max(slot, density_ratio(d, nu));
                    if (m < m_cap) {
                        propagate(mdp, space[j], d, next);
                        d.swap(next);
                    }
                }
            }
        }
    });

    ConcentrabilityTable table;
    table.K = K;
    table.m_cap = m_cap;
    table.s_grid = std::move(s_grid);
    table.sup_c = partial[0];
    for (std::size_t c = 1; c < chunks; ++c)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t m = 0; m <= m_cap; ++m)
                table.sup_c[k][m] = std::max(table.sup_c[k][m], partial[c][k][m]);
    for (const auto& row : table.sup_c)
        for (double v : row) table.c_max = std::max(table.c_max, v);

    double inv_nu_max = 0.0;
    for (double v : nu) inv_nu_max = v > 0.0 ? std::max(inv_nu_max, 1.0 / v) : kInfinite;
    const double tail_per_k = std::pow(gamma, static_cast<double>(m_cap + 1)) / (1.0 - gamma) * inv_nu_max;

    std::vector<double> inner(K, 0.0);  // sum_m gamma^m sup c(k, m)
    for (std::size_t k = 0; k < K; ++k) {
        double g = 1.0;
        for (std::size_t m = 0; m <= m_cap; ++m) {
            inner[k] += g * table.sup_c[k][m];
            g *= gamma;
        }
    }
    const std::size_t ns = table.s_grid.size();
    table.series.assign(K, std::vector<double>(ns, 0.0));
    table.tail_bound.assign(K, std::vector<double>(ns, 0.0));
    for (std::size_t j = 0; j < ns; ++j) {
        const double s = table.s_grid[j];
        double sum = 0.0, tail = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double w = std::pow(gamma, (1.0 - s) * static_cast<double>(k));
            sum += w * inner[k];
            tail += w * tail_per_k;
            table.series[k][j] = 0.5 * (1.0 - gamma) * sum;
            table.tail_bound[k][j] = 0.5 * (1.0 - gamma) * tail;
        }
    }
    return table;
}

PropagationReport propagation_bound_check(const TabularMdp& mdp, const std::vector<ActionTable>& policies,
                                          std::span<const double> rho, std::span<const double> nu,
                                          const std::vector<ActionTable>& space, std::vector<double> s_grid,
                                          std::size_t m_cap, double tol, std::size_t threads, double tolerance) {
    require(policies.size() >= 2, "need pi_0 and at least one further policy");
    for (const auto& pi : policies) check_table(mdp, pi);
    validate_distribution(rho, mdp.n_states());
    validate_distribution(nu, mdp.n_states());
    const std::size_t K = policies.size() - 1;
    const double gamma = mdp.gamma();

    PropagationReport rep;
    rep.K = K;
    rep.step_loss.resize(K);
    parallel_for(K, threads, [&](std::size_t k) {
        TabularQ q = solve_q_policy(mdp, policies[k], tol);
        rep.step_loss[k] = expected_greedy_loss(q, policies[k + 1], nu);
    });
    LossOracle oracle(mdp, std::vector<double>(rho.begin(), rho.end()), tol);
    rep.loss = oracle.loss(policies[K]);

    std::vector<ActionTable> sup_space = space;
    sup_space.insert(sup_space.end(), policies.begin() + 1, policies.end());
    auto table = concentrability_series(mdp, rho, nu, sup_space, K, std::move(s_grid), m_cap, tol, threads);
    rep.s_grid = table.s_grid;
    const std::size_t ns = rep.s_grid.size();
    rep.concentrability.resize(ns);
    rep.weighted_error.resize(ns);
    rep.rhs.resize(ns);
    rep.truncation_tail.resize(ns);
    for (std::size_t j = 0; j < ns; ++j) {
        const double s = rep.s_grid[j];
        double e = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            e = std::max(e, std::pow(gamma, s * static_cast<double>(K - k - 1)) * rep.step_loss[k]);
        rep.concentrability[j] = table.value(K, j);
        rep.weighted_error[j] = e;
        rep.truncation_tail[j] = table.tail_bound[K - 1][j];
        const double product = e == 0.0 ? 0.0 : rep.concentrability[j] * e;
        rep.rhs[j] = 2.0 / (1.0 - gamma) * (product + std::pow(gamma, static_cast<double>(K)) * mdp.r_max());
        if (rep.rhs[j] < rep.rhs[rep.best_s]) rep.best_s = j;
    }
    rep.slack = rep.rhs[rep.best_s] - rep.loss;
    rep.holds = rep.loss <= rep.rhs[rep.best_s] + tolerance;
    return rep;
}

}  // namespace capi
