#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "capi/common.hpp"
#include "capi/environments.hpp"
#include "capi/extra_trees.hpp"
#include "capi/kernel_regression.hpp"
#include "capi/mdp.hpp"
#include "capi/random.hpp"

namespace capi {

enum class EvaluatorKind { exact_one_step, exact_solve, rollout, fqe_trees, fqe_kernel };

std::string to_string(EvaluatorKind kind);
EvaluatorKind parse_evaluator_kind(const std::string& text);

struct RolloutConfig {
    std::size_t horizon = 50;
    std::size_t trajectories = 1;
};

struct EvaluatorConfig {
    EvaluatorKind kind = EvaluatorKind::exact_one_step;
    RolloutConfig rollout;
    TreeConfig trees;
    KernelConfig kernel;
    /// 0 selects default_fqe_iterations(fqe_tol, gamma, R_max).
    std::size_t fqe_iterations = 0;
    double fqe_tol = 0.01;
    double solve_tol = kDefaultSolveTol;
    std::size_t threads = 1;

    void validate() const;
    std::size_t iterations_for(double gamma, double r_max) const;
};

/// ceil(log(tol (1 - gamma) / R_max) / log gamma), clamped to [1, 100].
std::size_t default_fqe_iterations(double tol, double gamma, double r_max);

/// One application of T^pi to the previous estimate.
TabularQ eval_one_step(const TabularMdp& mdp, const Policy& policy, const TabularQ& prev_q);

TabularQ eval_exact(const TabularMdp& mdp, const Policy& policy, double tol = kDefaultSolveTol);

/// Truncated discounted return of one trajectory that starts with action
/// `a` in `x` and follows `policy` afterwards.
double rollout_return(const GenerativeEnv& env, const Policy& policy, StateView x, std::size_t a,
                      std::size_t horizon, Rng& rng);

using RolloutQuery = std::pair<State, std::size_t>;

/// Every (state, action) pair for the given states.
std::vector<RolloutQuery> all_action_queries(const std::vector<State>& states, std::size_t n_actions);

/// Rollout estimates stored per query; other inputs are rejected.
class RolloutQ final : public ActionValueFn {
public:
    struct Estimate {
        double mean = 0.0;
        double std_error = 0.0;
        std::size_t samples = 0;
    };

    RolloutQ(std::size_t n_actions, double q_max) : n_actions_(n_actions), q_max_(q_max) {}

    std::size_t n_actions() const override { return n_actions_; }
    double value(StateView x, std::size_t a) const override;
    double q_max() const override { return q_max_; }
    const Estimate& estimate(StateView x, std::size_t a) const;
    std::size_t size() const { return table_.size(); }

    void insert(const State& x, std::size_t a, Estimate e);

private:
    std::size_t n_actions_;
    double q_max_;
    std::map<std::pair<State, std::size_t>, Estimate> table_;
};

/// Averages cfg.rollout.trajectories truncated returns per query. Query i
/// uses the stream derived from (seed drawn from rng, i).
std::shared_ptr<const RolloutQ> eval_rollout(const GenerativeEnv& env, const Policy& policy,
                                             const std::vector<RolloutQuery>& queries,
                                             const EvaluatorConfig& cfg, Rng& rng);

/// One tree ensemble per action; outputs clipped to [-q_max, q_max].
class EnsembleQ final : public ActionValueFn {
public:
    EnsembleQ(std::vector<RegressionTreeEnsemble> per_action, double q_max);

    std::size_t n_actions() const override { return per_action_.size(); }
    double value(StateView x, std::size_t a) const override;
    double q_max() const override { return q_max_; }
    const RegressionTreeEnsemble& ensemble(std::size_t a) const { return per_action_[a]; }

private:
    std::vector<RegressionTreeEnsemble> per_action_;
    double q_max_;
};

/// One kernel dictionary per action over scaled inputs; clipped output.
class KernelQ final : public ActionValueFn {
public:
    KernelQ(std::vector<KernelDictionary> per_action, std::vector<double> input_scale, double q_max);

    std::size_t n_actions() const override { return per_action_.size(); }
    double value(StateView x, std::size_t a) const override;
    double q_max() const override { return q_max_; }
    const KernelDictionary& dictionary(std::size_t a) const { return per_action_[a]; }

private:
    std::vector<KernelDictionary> per_action_;
    std::vector<double> input_scale_;
    double q_max_;
};

/// Per-dimension scale mapping the state box onto the unit cube.
std::vector<double> unit_box_scale(const Box& box);

/// Policy-evaluation Fitted Q-Iteration with tree ensembles:
/// Q_{j+1} = fit(r + gamma Q_j(x', pi(x'))), Q_0 = 0, one ensemble per action.
std::shared_ptr<const EnsembleQ> eval_fqe_trees(const GenerativeEnv& env, const Policy& policy,
                                                const std::vector<Transition>& dataset,
                                                const EvaluatorConfig& cfg, Rng& rng);

/// Same iteration with kernel ridge regression on scaled states.
/// `input_scale` empty means unit_box_scale(env.state_box()).
std::shared_ptr<const KernelQ> eval_fqe_kernel(const GenerativeEnv& env, const Policy& policy,
                                               const std::vector<Transition>& dataset,
                                               const EvaluatorConfig& cfg, Rng& rng,
                                               std::vector<double> input_scale = {});

/// Called with (iteration index starting at 1, current estimate).
using FqiObserver = std::function<void(std::size_t, const ActionValueFn&)>;

/// Fitted Q-Iteration for the optimal value: targets r + gamma max_b Q_j(x', b).
/// cfg.kind selects the regressor (fqe_trees or fqe_kernel).
std::shared_ptr<const ActionValueFn> run_fqi_optimal(const GenerativeEnv& env,
                                                     const std::vector<Transition>& dataset,
                                                     const EvaluatorConfig& cfg, Rng& rng,
                                                     std::size_t iterations, const FqiObserver& observer = {});

/// Greedy policy of an action-value function.
class GreedyPolicy final : public Policy {
public:
    explicit GreedyPolicy(std::shared_ptr<const ActionValueFn> q) : q_(std::move(q)) {}
    std::size_t act(StateView x) const override { return greedy_action(*q_, x); }
    std::size_t n_actions() const override { return q_->n_actions(); }

private:
    std::shared_ptr<const ActionValueFn> q_;
};

}  // namespace capi
