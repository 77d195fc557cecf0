#include "capi/policy_improve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capi/extra_trees.hpp"
#include "capi/mdp.hpp"
#include "capi/parallel.hpp"

namespace capi {

std::vector<WeightedSample> build_weighted_dataset(const ActionValueFn& qhat, const std::vector<State>& states) {
    require(!states.empty(), "no states to label");
    const std::size_t n_actions = qhat.n_actions();
    std::vector<WeightedSample> out;
    out.reserve(states.size());
    for (const auto& x : states) {
        auto row = qhat.row(x);
        WeightedSample s;
        s.state = x;
        s.label = greedy_action(row);
        s.gaps.resize(n_actions);
        for (std::size_t a = 0; a < n_actions; ++a) s.gaps[a] = action_gap(row, a);
        s.weight = n_actions == 2 ? action_gap(row) : 0.0;
        out.push_back(std::move(s));
    }
    return out;
}

double empirical_weighted_loss(const Policy& policy, const std::vector<WeightedSample>& samples, bool normalize) {
    double total = 0.0;
    for (const auto& s : samples) total += s.gaps[policy.act(s.state)];
    if (normalize && !samples.empty()) total /= static_cast<double>(samples.size());
    return total;
}

std::vector<WeightedSample> zero_one_samples(const std::vector<WeightedSample>& samples) {
    auto out = samples;
    for (auto& s : out) {
        for (std::size_t a = 0; a < s.gaps.size(); ++a) s.gaps[a] = a == s.label ? 0.0 : 1.0;
        s.weight = 1.0;
    }
    return out;
}

std::vector<double> threshold_losses(const std::vector<WeightedSample>& samples, std::size_t n_states) {
    require(n_states >= 1, "need at least one state");
    std::vector<std::size_t> index(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        require(samples[i].gaps.size() == 2, "threshold policies need two actions");
        index[i] = state_index(samples[i].state, n_states);
    }
    std::vector<double> losses(2 * n_states);
    for (std::size_t p = 1; p <= n_states; ++p) {
        for (std::size_t o = 0; o < 2; ++o) {
            const std::size_t low = o;  // low_is_a0 plays 0 below p
            double total = 0.0;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                std::size_t a = index[i] < p ? low : 1 - low;
                total += samples[i].gaps[a];
            }
            losses[2 * (p - 1) + o] = total;
        }
    }
    return losses;
}

ThresholdPolicy improve_threshold(const std::vector<WeightedSample>& samples, std::size_t n_states) {
    auto losses = threshold_losses(samples, n_states);
    std::size_t best = 0;
    for (std::size_t c = 1; c < losses.size(); ++c)
        if (losses[c] < losses[best]) best = c;
    return ThresholdPolicy(best / 2 + 1, best % 2 == 0 ? Orientation::low_is_a0 : Orientation::low_is_a1);
}

TabularPolicy improve_tabular(const std::vector<WeightedSample>& samples, std::size_t n_states,
                              std::size_t n_actions) {
    std::vector<double> regret(n_states * n_actions, 0.0);
    std::vector<bool> seen(n_states, false);
    for (const auto& s : samples) {
        require(s.gaps.size() == n_actions, "sample has wrong action count");
        std::size_t x = state_index(s.state, n_states);
        seen[x] = true;
        for (std::size_t a = 0; a < n_actions; ++a) regret[x * n_actions + a] += s.gaps[a];
    }
    std::vector<std::size_t> actions(n_states, 0);
    for (std::size_t x = 0; x < n_states; ++x) {
        if (!seen[x]) continue;
        auto first = regret.begin() + static_cast<std::ptrdiff_t>(x * n_actions);
        actions[x] = static_cast<std::size_t>(std::min_element(first, first + static_cast<std::ptrdiff_t>(n_actions)) - first);
    }
    return TabularPolicy(std::move(actions), n_actions);
}

KnnPolicy improve_knn(const ActionValueFn& qhat, const std::vector<State>& states, std::size_t kappa,
                      std::vector<double> scale) {
    require(kappa >= 1, "kappa must be at least 1");
    require(kappa <= states.size(), "kappa exceeds the number of support states");
    std::vector<double> rows;
    rows.reserve(states.size() * qhat.n_actions());
    for (const auto& x : states) {
        auto r = qhat.row(x);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    return KnnPolicy(states, std::move(rows), qhat.n_actions(), kappa, std::move(scale));
}

namespace {

// Summed regret per action over a set of rows.
std::vector<double> regret_totals(const std::vector<WeightedSample>& samples, std::span<const std::uint32_t> rows,
                                  std::size_t n_actions) {
    std::vector<double> totals(n_actions, 0.0);
    for (auto r : rows)
        for (std::size_t a = 0; a < n_actions; ++a) totals[a] += samples[r].gaps[a];
    return totals;
}

std::size_t argmin_index(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

PartitionTree fit_policy_tree(const std::vector<WeightedSample>& samples, const std::vector<double>& inputs,
                              std::size_t dim, std::size_t n_actions, const PolicyTreeConfig& cfg, Rng& rng) {
    RandomCutSampler sampler(inputs.data(), dim);
    const std::size_t k = cfg.k_random_cuts > 0
                              ? cfg.k_random_cuts
                              : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(dim))));
    std::vector<std::uint32_t> rows(samples.size());
    std::iota(rows.begin(), rows.end(), 0u);

    struct Pending {
        std::uint32_t node;
        std::size_t begin;
        std::size_t end;
    };
    PartitionTree tree;
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, rows.size()}};
    while (!stack.empty()) {
        auto [id, begin, end] = stack.back();
        stack.pop_back();
        std::span<std::uint32_t> cell(rows.data() + begin, end - begin);
        auto totals = regret_totals(samples, cell, n_actions);
        std::size_t action = argmin_index(totals);
        tree.nodes[id].action = action;
        if (cell.size() < cfg.min_split || totals[action] == 0.0) continue;

        auto cuts = sampler.draw(cell, k, rng);
        if (cuts.empty()) continue;
        double best_score = 0.0;
        std::size_t best = cuts.size();
        for (std::size_t c = 0; c < cuts.size(); ++c) {
            std::vector<double> left(n_actions, 0.0), right(n_actions, 0.0);
            for (auto r : cell) {
                auto& side = sampler.goes_left(r, cuts[c]) ? left : right;
                for (std::size_t a = 0; a < n_actions; ++a) side[a] += samples[r].gaps[a];
            }
            double score = *std::min_element(left.begin(), left.end()) + *std::min_element(right.begin(), right.end());
            if (best == cuts.size() || score < best_score) {
                best_score = score;
                best = c;
            }
        }
        const auto cut = cuts[best];
        auto mid = std::stable_partition(cell.begin(), cell.end(),
                                         [&](std::uint32_t r) { return sampler.goes_left(r, cut); });
        std::size_t split = begin + static_cast<std::size_t>(mid - cell.begin());
        auto left = static_cast<std::uint32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& parent = tree.nodes[id];
        parent.feature = static_cast<std::int32_t>(cut.feature);
        parent.threshold = cut.threshold;
        parent.left = left;
        parent.right = left + 1;
        stack.push_back({left + 1, split, end});
        stack.push_back({left, begin, split});
    }
    return tree;
}

}  // namespace

TreeEnsemblePolicy improve_tree_ensemble(const std::vector<WeightedSample>& samples, const PolicyTreeConfig& cfg,
                                         Rng& rng) {
    require(!samples.empty(), "no samples to classify");
    require(cfg.n_trees >= 1, "need at least one tree");
    require(cfg.min_split >= 2, "eta_pi must be at least 2");
    const std::size_t dim = samples.front().state.size();
    const std::size_t n_actions = samples.front().gaps.size();
    std::vector<double> inputs;
    inputs.reserve(samples.size() * dim);
    for (const auto& s : samples) {
        require(s.state.size() == dim && s.gaps.size() == n_actions, "inconsistent samples");
        inputs.insert(inputs.end(), s.state.begin(), s.state.end());
    }
    const std::uint64_t master = rng();
    std::vector<PartitionTree> trees(cfg.n_trees);
    parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
        Rng tree_rng = make_rng(master, t);
        trees[t] = fit_policy_tree(samples, inputs, dim, n_actions, cfg, tree_rng);
    });
    return TreeEnsemblePolicy(std::move(trees), n_actions);
}

std::string to_string(PolicySpaceKind kind) {
    switch (kind) {
        case PolicySpaceKind::threshold: return "threshold";
        case PolicySpaceKind::tabular: return "tabular";
        case PolicySpaceKind::knn: return "knn";
        case PolicySpaceKind::tree_ensemble: return "tree_ensemble";
    }
    return "unknown";
}

PolicySpaceKind parse_policy_space(const std::string& text) {
    for (auto k : {PolicySpaceKind::threshold, PolicySpaceKind::tabular, PolicySpaceKind::knn,
                   PolicySpaceKind::tree_ensemble})
        if (to_string(k) == text) return k;
    throw ContractViolation("unknown policy space '" + text + "'");
}

namespace {

PolicyRepr improve_from_samples(const PolicySpaceConfig& space, const std::vector<WeightedSample>& samples,
                                std::size_t n_states, Rng& rng) {
    switch (space.kind) {
        case PolicySpaceKind::threshold: return improve_threshold(samples, n_states);
        case PolicySpaceKind::tabular: return improve_tabular(samples, n_states, samples.front().gaps.size());
        case PolicySpaceKind::tree_ensemble: return improve_tree_ensemble(samples, space.trees, rng);
        case PolicySpaceKind::knn: break;
    }
    throw ContractViolation("KNN policies are built from action values, not samples");
}

}  // namespace

PolicyRepr improve_zero_one(const std::vector<WeightedSample>& samples, const PolicySpaceConfig& space,
                            std::size_t n_states, Rng& rng) {
    require(space.kind == PolicySpaceKind::threshold || space.kind == PolicySpaceKind::tree_ensemble ||
                space.kind == PolicySpaceKind::tabular,
            "0/1 loss needs a threshold, tabular or tree policy space");
    return improve_from_samples(space, zero_one_samples(samples), n_states, rng);
}

PolicyRepr improve_policy(const PolicySpaceConfig& space, const ActionValueFn& qhat,
                          const std::vector<State>& states, std::size_t n_states, const std::vector<double>& scale,
                          Rng& rng, double* empirical_loss) {
    auto samples = build_weighted_dataset(qhat, states);
    if (space.kind == PolicySpaceKind::knn) {
        require(!space.zero_one, "0/1 loss is not defined for KNN policies");
        PolicyRepr pi = improve_knn(qhat, states, space.knn_kappa, scale);
        if (empirical_loss) *empirical_loss = empirical_weighted_loss(pi, samples);
        return pi;
    }
    PolicyRepr pi = space.zero_one ? improve_zero_one(samples, space, n_states, rng)
                                   : improve_from_samples(space, samples, n_states, rng);
    if (empirical_loss) *empirical_loss = empirical_weighted_loss(pi, samples);
    return pi;
}

PolicyRepr initial_policy(const PolicySpaceConfig& space, std::size_t n_states, std::size_t n_actions,
                          std::size_t dim) {
    switch (space.kind) {
        case PolicySpaceKind::threshold:
            require(n_actions == 2, "threshold policies need two actions");
            return ThresholdPolicy(n_states, Orientation::low_is_a0);
        case PolicySpaceKind::tabular: return constant_tabular_policy(n_states, n_actions, 0);
        case PolicySpaceKind::knn: {
            std::vector<double> row(n_actions, 0.0);
            row[0] = 1.0;
            return KnnPolicy({State(dim, 0.0)}, std::move(row), n_actions, 1);
        }
        case PolicySpaceKind::tree_ensemble: {
            PartitionTree leaf;
            leaf.nodes.emplace_back();
            return TreeEnsemblePolicy({leaf}, n_actions);
        }
    }
    throw ContractViolation("unknown policy space");
}

}  // namespace capi
