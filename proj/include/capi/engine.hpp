#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capi/environments.hpp"
#include "capi/policy.hpp"
#include "capi/policy_eval.hpp"
#include "capi/policy_improve.hpp"

namespace capi {

struct CapiConfig {
    EnvSpec env;
    PolicySpaceConfig space;
    EvaluatorConfig evaluator;
    std::size_t K = 15;
    /// Classification states per iteration.
    std::size_t n = 200;
    /// Transitions per iteration for the batch evaluators; 0 means n.
    std::size_t n_eval = 0;
    NuScheme nu = NuScheme::all_states;
    CollectScheme collect = CollectScheme::iid_uniform;
    std::uint64_t seed = 1;
    bool resample_each_iter = true;
    /// Optional per-iteration override of n (entry k-1 for iteration k).
    std::vector<std::size_t> n_schedule;
    /// Monte-Carlo evaluation of each iterate; 0 disables it.
    std::size_t eval_episodes = 0;
    std::size_t eval_max_steps = 200;
    std::size_t threads = 1;

    void validate() const;
    std::size_t n_at(std::size_t k) const;
};

/// Diagnostics of iteration k, which turns pi_{k-1} into pi_k.
struct IterationRecord {
    std::size_t k = 0;
    /// Weighted empirical loss of pi_k against Qhat^{pi_{k-1}}.
    std::optional<double> empirical_loss;
    /// max over D_n and actions of |Qhat^{pi_{k-1}} - Q^{pi_{k-1}}|.
    std::optional<double> sup_eval_error;
    std::optional<double> performance_loss;
    std::optional<double> mc_steps;
    std::optional<double> mc_return;
    /// Fraction of evaluation episodes that ran to the step cap.
    std::optional<double> mc_cap_rate;
    double wall_ms = 0.0;
    std::uint64_t seed_used = 0;
};

struct RunResult {
    std::shared_ptr<const Policy> final_policy;
    std::vector<IterationRecord> records;
    /// pi_0 .. pi_K when every iterate has a PolicyRepr form (all but
    /// fqi on continuous environments).
    std::vector<PolicyRepr> policies;
};

RunResult run_capi(const CapiConfig& cfg);

enum class BaselineKind { vi, pi, fqi, dpi, zero_one_star };

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline(const std::string& text);

/// vi and pi report K iterates of the exact algorithms on tabular
/// environments (pi repeats its last policy after convergence). fqi runs
/// Fitted Q-Iteration with cfg.evaluator's regressor for K iterations on
/// one batch of n_eval transitions. dpi is run_capi with the rollout
/// evaluator. zero_one_star repeats, for K iterations, the minimizer of
/// the 0/1 loss against the exact Q* over cfg.space.
RunResult run_baseline(BaselineKind kind, const CapiConfig& cfg);

struct McResult {
    double mean_steps = 0.0;
    double mean_return = 0.0;
    double se_steps = 0.0;
    double se_return = 0.0;
    double cap_rate = 0.0;
    std::vector<EpisodeResult> episodes;
};

/// Episode i runs on the stream derived from (seed drawn from rng, i).
McResult mc_return(const GenerativeEnv& env, const Policy& policy, std::size_t n_episodes, std::size_t max_steps,
                   double gamma, Rng& rng, std::size_t threads = 1);

}  // namespace capi
