#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capi/common.hpp"
#include "capi/policy.hpp"
#include "capi/random.hpp"

namespace capi {

/// One classification example.
///
/// `gaps[a]` is the regret max_b Q(x,b) - Q(x,a) of playing a, so the
/// loss of a policy at this sample is gaps[pi(x)]. With two actions,
/// `weight` equals the action gap and gaps[label] = 0.
struct WeightedSample {
    State state;
    std::size_t label = 0;
    double weight = 0.0;
    std::vector<double> gaps;
};

std::vector<WeightedSample> build_weighted_dataset(const ActionValueFn& qhat, const std::vector<State>& states);

/// sum_i gaps_i[pi(x_i)] in sample order; divided by the sample count
/// when `normalize` is set.
double empirical_weighted_loss(const Policy& policy, const std::vector<WeightedSample>& samples,
                               bool normalize = false);

/// Every weight set to 1: unit loss for each non-greedy action.
std::vector<WeightedSample> zero_one_samples(const std::vector<WeightedSample>& samples);

/// Exhaustive minimization over the 2 * n_states threshold policies.
/// Ties go to the smaller threshold, then to low_is_a0.
ThresholdPolicy improve_threshold(const std::vector<WeightedSample>& samples, std::size_t n_states);

/// Loss of every threshold candidate, indexed [2 * (p - 1) + orientation].
std::vector<double> threshold_losses(const std::vector<WeightedSample>& samples, std::size_t n_states);

/// Minimizer over all tabular policies: per state, the action with the
/// least summed regret. Unsampled states play action 0.
TabularPolicy improve_tabular(const std::vector<WeightedSample>& samples, std::size_t n_states,
                              std::size_t n_actions);

KnnPolicy improve_knn(const ActionValueFn& qhat, const std::vector<State>& states, std::size_t kappa,
                      std::vector<double> scale = {});

struct PolicyTreeConfig {
    std::size_t n_trees = 30;
    /// eta_pi: nodes with fewer samples become leaves.
    std::size_t min_split = 20;
    /// 0 means max(1, sqrt(dim)).
    std::size_t k_random_cuts = 0;
    std::size_t threads = 1;
};

/// Extra-trees whose leaves play the least-regret action of their
/// samples and whose splits minimize the children's summed loss.
TreeEnsemblePolicy improve_tree_ensemble(const std::vector<WeightedSample>& samples,
                                         const PolicyTreeConfig& cfg, Rng& rng);

enum class PolicySpaceKind { threshold, tabular, knn, tree_ensemble };

std::string to_string(PolicySpaceKind kind);
PolicySpaceKind parse_policy_space(const std::string& text);

struct PolicySpaceConfig {
    PolicySpaceKind kind = PolicySpaceKind::threshold;
    std::size_t knn_kappa = 75;
    PolicyTreeConfig trees;
    /// Replace every weight by 1 (threshold and tree spaces only).
    bool zero_one = false;
};

/// Classification step over the configured space. `n_states` is used by
/// the tabular spaces, `scale` by the KNN space.
PolicyRepr improve_policy(const PolicySpaceConfig& space, const ActionValueFn& qhat,
                          const std::vector<State>& states, std::size_t n_states, const std::vector<double>& scale,
                          Rng& rng, double* empirical_loss = nullptr);

/// zero_one flag forced on.
PolicyRepr improve_zero_one(const std::vector<WeightedSample>& samples, const PolicySpaceConfig& space,
                            std::size_t n_states, Rng& rng);

/// The all-action-0 member of the space, used as pi_0.
PolicyRepr initial_policy(const PolicySpaceConfig& space, std::size_t n_states, std::size_t n_actions,
                          std::size_t dim);

}  // namespace capi
