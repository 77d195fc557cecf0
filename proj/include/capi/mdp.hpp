#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "capi/common.hpp"
#include "capi/policy.hpp"

namespace capi {

inline constexpr double kDefaultSolveTol = 1e-10;

/// Finite-state, finite-action discounted MDP.
///
/// Rewards are state-action based. The dense kernel is kept for exact
/// queries, a compressed successor list drives the Bellman sweeps.
class TabularMdp {
public:
    struct Successor {
        std::size_t next;
        double prob;
    };

    /// `reward` is indexed [x * n_actions + a], `transition` is indexed
    /// [(x * n_actions + a) * n_states + y]. When `r_max` is absent the
    /// largest |reward| is used.
    TabularMdp(std::size_t n_states, std::size_t n_actions, double gamma,
               std::vector<double> reward, std::vector<double> transition,
               std::optional<double> r_max = std::nullopt);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }
    double r_max() const { return r_max_; }
    /// R_max / (1 - gamma).
    double q_max() const { return r_max_ / (1.0 - gamma_); }

    double reward(std::size_t x, std::size_t a) const { return reward_[x * n_actions_ + a]; }
    double prob(std::size_t x, std::size_t a, std::size_t y) const {
        return transition_[(x * n_actions_ + a) * n_states_ + y];
    }
    std::span<const double> transition_row(std::size_t x, std::size_t a) const;
    std::span<const Successor> successors(std::size_t x, std::size_t a) const;

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    double gamma_;
    double r_max_;
    std::vector<double> reward_;
    std::vector<double> transition_;
    std::vector<Successor> successors_;
    std::vector<std::size_t> offsets_;
};

/// Dense Q table over a TabularMdp's state-action space.
class TabularQ final : public ActionValueFn {
public:
    TabularQ(std::size_t n_states, std::size_t n_actions, double q_max);
    TabularQ(std::size_t n_states, std::size_t n_actions, double q_max, std::vector<double> values);

    std::size_t n_actions() const override { return n_actions_; }
    double value(StateView x, std::size_t a) const override;
    double q_max() const override { return q_max_; }

    std::size_t n_states() const { return n_states_; }
    double operator()(std::size_t x, std::size_t a) const { return values_[x * n_actions_ + a]; }
    double& at(std::size_t x, std::size_t a) { return values_[x * n_actions_ + a]; }
    std::span<const double> row(std::size_t x) const {
        return {values_.data() + x * n_actions_, n_actions_};
    }
    const std::vector<double>& values() const { return values_; }

    /// max |a - b| over all entries.
    friend double sup_distance(const TabularQ& a, const TabularQ& b);

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    double q_max_;
    std::vector<double> values_;
};

/// Checks a dense distribution: non-negative, sums to 1 within 1e-12.
void validate_distribution(std::span<const double> p, std::size_t n);

std::vector<double> uniform_distribution(std::size_t n);

/// Two-action gap |Q(x,0) - Q(x,1)| when `a` is absent, otherwise the
/// regret max_b Q(x,b) - Q(x,a).
double action_gap(std::span<const double> q_row, std::optional<std::size_t> a = std::nullopt);
double action_gap(const ActionValueFn& q, StateView x, std::optional<std::size_t> a = std::nullopt);

/// argmax over actions, lowest index on ties.
std::size_t greedy_action(std::span<const double> q_row);
std::size_t greedy_action(const ActionValueFn& q, StateView x);

/// Action chosen by `policy` at each tabular state.
std::vector<std::size_t> tabulate(const Policy& policy, std::size_t n_states);

/// (T^pi q)(x,a) when `policy` is given, (T* q)(x,a) otherwise.
TabularQ bellman_backup(const TabularMdp& mdp, const TabularQ& q, const Policy* policy);
TabularQ bellman_backup(const TabularMdp& mdp, const TabularQ& q, std::span<const std::size_t> actions);

/// Fixed point of T^pi with ||T^pi Q - Q||_inf <= tol.
TabularQ solve_q_policy(const TabularMdp& mdp, const Policy& policy, double tol = kDefaultSolveTol);
TabularQ solve_q_policy(const TabularMdp& mdp, std::span<const std::size_t> actions,
                        double tol = kDefaultSolveTol);

/// V(x) = Q(x, pi(x)).
std::vector<double> policy_values(const TabularQ& q, std::span<const std::size_t> actions);

struct OptimalSolution {
    TabularQ q;
    PolicyRepr policy;  // greedy tabular policy w.r.t. q
};

OptimalSolution solve_optimal(const TabularMdp& mdp, double tol = kDefaultSolveTol);

/// Classic policy iteration. Element k of the result is pi_{k+1}; stops
/// after the first iteration whose policy is unchanged.
std::vector<PolicyRepr> exact_policy_iteration(const TabularMdp& mdp, const PolicyRepr& init,
                                               std::size_t max_iters, double tol = kDefaultSolveTol);

/// sum_x rho(x) (V*(x) - V^pi(x)).
double performance_loss(const TabularMdp& mdp, const Policy& policy, std::span<const double> rho,
                        double tol = kDefaultSolveTol);

/// Performance loss with V* computed once.
class LossOracle {
public:
    LossOracle(const TabularMdp& mdp, std::vector<double> rho, double tol = kDefaultSolveTol);

    double loss(const Policy& policy) const;
    double loss(std::span<const std::size_t> actions) const;
    const std::vector<double>& v_star() const { return v_star_; }
    const TabularQ& q_star() const { return q_star_; }
    const TabularMdp& mdp() const { return *mdp_; }
    double tol() const { return tol_; }

private:
    const TabularMdp* mdp_;
    std::vector<double> rho_;
    double tol_;
    TabularQ q_star_;
    std::vector<double> v_star_;
};

/// Text format: `mdp <n_states> <n_actions> <gamma>`, then `r x a value`
/// and `p x a y prob` lines. Omitted entries are zero.
void write_mdp(std::ostream& out, const TabularMdp& mdp);
TabularMdp read_mdp(std::istream& in);

}  // namespace capi
