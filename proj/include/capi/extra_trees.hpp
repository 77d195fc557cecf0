#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "capi/common.hpp"
#include "capi/random.hpp"

namespace capi {

/// Extremely randomized trees settings.
struct TreeConfig {
    std::size_t n_trees = 30;
    /// Nodes holding fewer points than this become leaves.
    std::size_t min_split = 20;
    /// Random (feature, cut) candidates per node; 0 means max(1, sqrt(dim)).
    std::size_t k_random_cuts = 0;
    std::size_t threads = 1;

    std::size_t cuts_for(std::size_t dim) const;
};

/// Row-major design matrix with one target per row.
struct RegressionData {
    std::size_t dim = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    std::size_t size() const { return targets.size(); }
    StateView row(std::size_t i) const { return {inputs.data() + i * dim, dim}; }
    void add(StateView x, double y);
};

class RegressionTree {
public:
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;     // x[feature] < threshold goes left
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        double value = 0.0;         // leaf mean
        std::uint32_t count = 0;    // training points reaching the node
    };

    double predict(StateView x) const;
    const std::vector<Node>& nodes() const { return nodes_; }

private:
    friend RegressionTree fit_single_tree(const RegressionData&, const TreeConfig&, Rng&);
    std::vector<Node> nodes_;
};

/// Mean prediction over a forest of randomized regression trees.
class RegressionTreeEnsemble {
public:
    explicit RegressionTreeEnsemble(std::vector<RegressionTree> trees);

    double predict(StateView x) const;
    const std::vector<RegressionTree>& trees() const { return trees_; }

private:
    std::vector<RegressionTree> trees_;
};

RegressionTree fit_single_tree(const RegressionData& data, const TreeConfig& cfg, Rng& rng);

/// Extra-trees regression. Each tree draws its stream from (seed, tree
/// index), so the fit does not depend on cfg.threads.
RegressionTreeEnsemble fit_tree_regressor(const RegressionData& data, const TreeConfig& cfg, Rng& rng);

/// Splits on uniform random cuts strictly inside the node's data range.
/// Shared by the regression trees and the policy trees.
class RandomCutSampler {
public:
    RandomCutSampler(const double* inputs, std::size_t dim) : inputs_(inputs), dim_(dim) {}

    struct Cut {
        std::size_t feature;
        double threshold;
    };

    /// Up to k candidates over the non-constant features of `rows`; empty
    /// when every feature is constant.
    std::vector<Cut> draw(std::span<const std::uint32_t> rows, std::size_t k, Rng& rng) const;

    bool goes_left(std::uint32_t row, const Cut& cut) const {
        return inputs_[row * dim_ + cut.feature] < cut.threshold;
    }

private:
    const double* inputs_;
    std::size_t dim_;
};

}  // namespace capi
