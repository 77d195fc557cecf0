#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "capi/mdp.hpp"

namespace capi {

enum class GapFitStatus {
    fitted,
    /// every gap is zero, so P[0 < g <= eps] is identically 0
    all_zero,
    /// fewer than two grid points carry mass
    no_mass_on_grid,
};

/// Fit of P[0 < g <= eps] ~ c_g eps^zeta.
struct GapFitResult {
    double zeta_hat = 0.0;
    double cg_hat = 1.0;
    std::vector<double> eps_grid;
    std::vector<double> empirical_probs;
    double fit_residual = 0.0;
    GapFitStatus status = GapFitStatus::fitted;
    std::size_t points_used = 0;

    bool degenerate() const { return status != GapFitStatus::fitted; }
};

/// `points` log-spaced values in [1e-4 q_max, q_max].
std::vector<double> default_eps_grid(double q_max, std::size_t points = 40);

/// Least squares of log P-hat on log eps over grid points with P-hat > 0.
/// Degenerate inputs return zeta = 0, c_g = 1.
GapFitResult estimate_gap_exponent(std::span<const double> gaps, std::vector<double> eps_grid);

/// A tabular policy as one action per state.
using ActionTable = std::vector<std::size_t>;

/// The 2 * n_states threshold policies, ordered by threshold then
/// low_is_a0 before low_is_a1.
std::vector<ActionTable> threshold_space(std::size_t n_states);

/// Every deterministic tabular policy; refuses more than `limit` members.
std::vector<ActionTable> all_tabular_policies(std::size_t n_states, std::size_t n_actions,
                                              std::size_t limit = 1u << 20);

/// L^{pi'}(pi) = sum_x nu(x) (max_a Q^{pi'}(x,a) - Q^{pi'}(x, pi(x))).
double expected_greedy_loss(const TabularQ& q_prime, std::span<const std::size_t> pi, std::span<const double> nu);

struct GreedyPolicyErrorResult {
    double d = 0.0;
    /// index of the pi' attaining the sup
    std::size_t worst = 0;
    /// index of the pi attaining the inf for that pi'
    std::size_t best_response = 0;
    /// inf_pi L^{pi'}(pi) and its argmin, per pi'
    std::vector<double> inf_loss;
    std::vector<std::size_t> argmin;
};

/// d(Pi) = sup_{pi'} inf_{pi} L^{pi'}(pi) over an enumerated space.
GreedyPolicyErrorResult greedy_policy_error(const TabularMdp& mdp, const std::vector<ActionTable>& space,
                                            std::span<const double> nu, double tol = kDefaultSolveTol,
                                            std::size_t threads = 1);

inline constexpr double kInfinite = std::numeric_limits<double>::infinity();

/// max_x [rho (P^{pi*})^{m1} (P^{pi})^{m2}](x) / nu(x); infinite when mass
/// reaches a state with nu(x) = 0.
double concentrability(const TabularMdp& mdp, std::span<const double> rho, std::span<const double> nu,
                       std::span<const std::size_t> pi_star, std::span<const std::size_t> pi, std::size_t m1,
                       std::size_t m2);

/// ceil(log(1e-6) / log(gamma)).
std::size_t default_m_cap(double gamma);

/// {0, 0.1, ..., 1}.
std::vector<double> default_s_grid();

struct ConcentrabilityTable {
    std::size_t K = 0;
    std::size_t m_cap = 0;
    std::vector<double> s_grid;
    /// sup_pi c(k, m; pi) for k < K, m <= m_cap.
    std::vector<std::vector<double>> sup_c;
    /// series[K' - 1][j] = C(K', s_grid[j]) for K' = 1..K, truncated at m_cap.
    std::vector<std::vector<double>> series;
    /// Upper bound on what the truncation dropped from series[K' - 1][j].
    std::vector<std::vector<double>> tail_bound;
    double c_max = 0.0;

    double value(std::size_t K_prime, std::size_t s_index) const { return series[K_prime - 1][s_index]; }
};

/// m_cap = 0 selects default_m_cap(gamma).
ConcentrabilityTable concentrability_series(const TabularMdp& mdp, std::span<const double> rho,
                                            std::span<const double> nu, const std::vector<ActionTable>& space,
                                            std::size_t K, std::vector<double> s_grid, std::size_t m_cap = 0,
                                            double tol = kDefaultSolveTol, std::size_t threads = 1);

struct PropagationReport {
    std::size_t K = 0;
    double loss = 0.0;                  // Loss(pi_K; rho)
    std::vector<double> step_loss;      // L^{pi_k}(pi_{k+1}), k = 0..K-1
    std::vector<double> s_grid;
    std::vector<double> concentrability;  // C(K, s)
    std::vector<double> weighted_error;   // max_k gamma^{s(K-k-1)} L^{pi_k}(pi_{k+1})
    std::vector<double> rhs;              // bound per s
    std::size_t best_s = 0;
    double slack = 0.0;                   // min rhs - loss
    bool holds = false;
    std::vector<double> truncation_tail;  // per s, dropped part of C(K, s)
};

/// Checks Loss(pi_K; rho) <= 2/(1-gamma) [min_s C(K,s) max_k gamma^{s(K-k-1)}
/// L^{pi_k}(pi_{k+1}) + gamma^K R_max] with every quantity computed exactly.
/// The sup inside C runs over `space` together with pi_1..pi_K.
PropagationReport propagation_bound_check(const TabularMdp& mdp, const std::vector<ActionTable>& policies,
                                          std::span<const double> rho, std::span<const double> nu,
                                          const std::vector<ActionTable>& space, std::vector<double> s_grid,
                                          std::size_t m_cap = 0, double tol = kDefaultSolveTol,
                                          std::size_t threads = 1, double tolerance = 1e-9);

}  // namespace capi
