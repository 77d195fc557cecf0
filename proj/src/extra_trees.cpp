#include "capi/extra_trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "capi/parallel.hpp"

namespace capi {

std::size_t TreeConfig::cuts_for(std::size_t dim) const {
    if (k_random_cuts > 0) return k_random_cuts;
    auto k = static_cast<std::size_t>(std::sqrt(static_cast<double>(dim)));
    return std::max<std::size_t>(1, k);
}

void RegressionData::add(StateView x, double y) {
    if (inputs.empty() && targets.empty()) dim = x.size();
    require(x.size() == dim, "regression input has wrong dimension");
    inputs.insert(inputs.end(), x.begin(), x.end());
    targets.push_back(y);
}

std::vector<RandomCutSampler::Cut> RandomCutSampler::draw(std::span<const std::uint32_t> rows, std::size_t k,
                                                          Rng& rng) const {
    std::vector<double> lo(dim_, 0.0), hi(dim_, 0.0);
    for (std::size_t d = 0; d < dim_; ++d) lo[d] = hi[d] = inputs_[rows[0] * dim_ + d];
    for (auto r : rows) {
        const double* x = inputs_ + r * dim_;
        for (std::size_t d = 0; d < dim_; ++d) {
            lo[d] = std::min(lo[d], x[d]);
            hi[d] = std::max(hi[d], x[d]);
        }
    }
    std::vector<std::size_t> features;
    for (std::size_t d = 0; d < dim_; ++d)
        if (lo[d] < hi[d]) features.push_back(d);
    k = std::min(k, features.size());
    std::vector<Cut> cuts;
    cuts.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + uniform_index(rng, features.size() - i);
        std::swap(features[i], features[j]);
        std::size_t f = features[i];
        double t = uniform(rng, lo[f], hi[f]);
        if (!(t > lo[f] && t < hi[f])) t = 0.5 * (lo[f] + hi[f]);
        if (!(t > lo[f])) t = hi[f];  // adjacent doubles
        cuts.push_back({f, t});
    }
    return cuts;
}

double RegressionTree::predict(StateView x) const {
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
        const auto& node = nodes_[i];
        i = x[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
    }
    return nodes_[i].value;
}

RegressionTree fit_single_tree(const RegressionData& data, const TreeConfig& cfg, Rng& rng) {
    require(data.size() > 0, "cannot fit a tree on empty data");
    require(cfg.min_split >= 2, "min_split must be at least 2");
    RegressionTree tree;
    RandomCutSampler sampler(data.inputs.data(), data.dim);
    const std::size_t k = cfg.cuts_for(data.dim);
    std::vector<std::uint32_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), 0u);

    struct Pending {
        std::uint32_t node;
        std::size_t begin;
        std::size_t end;
    };
    std::vector<Pending> stack{{0, 0, rows.size()}};
    tree.nodes_.emplace_back();
    while (!stack.empty()) {
        auto [id, begin, end] = stack.back();
        stack.pop_back();
        std::span<std::uint32_t> cell(rows.data() + begin, end - begin);
        double sum = 0.0;
        double first = data.targets[cell[0]];
        bool constant = true;
        for (auto r : cell) {
            sum += data.targets[r];
            constant = constant && data.targets[r] == first;
        }
        auto& node = tree.nodes_[id];
        node.count = static_cast<std::uint32_t>(cell.size());
        node.value = sum / static_cast<double>(cell.size());
        if (cell.size() < cfg.min_split || constant) continue;

        auto cuts = sampler.draw(cell, k, rng);
        if (cuts.empty()) continue;
        double best_score = -1.0;
        std::size_t best = 0;
        for (std::size_t c = 0; c < cuts.size(); ++c) {
            double sl = 0.0, sr = 0.0;
            std::size_t nl = 0;
            for (auto r : cell) {
                if (sampler.goes_left(r, cuts[c])) {
                    sl += data.targets[r];
                    ++nl;
                } else {
                    sr += data.targets[r];
                }
            }
            std::size_t nr = cell.size() - nl;
            // maximizing this minimizes the children's squared error
            double score = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr);
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        const auto cut = cuts[best];
        auto mid = std::stable_partition(cell.begin(), cell.end(),
                                         [&](std::uint32_t r) { return sampler.goes_left(r, cut); });
        std::size_t split = begin + static_cast<std::size_t>(mid - cell.begin());
        auto left = static_cast<std::uint32_t>(tree.nodes_.size());
        tree.nodes_.emplace_back();
        tree.nodes_.emplace_back();
        auto& parent = tree.nodes_[id];
        parent.feature = static_cast<std::int32_t>(cut.feature);
        parent.threshold = cut.threshold;
        parent.left = left;
        parent.right = left + 1;
        stack.push_back({left + 1, split, end});
        stack.push_back({left, begin, split});
    }
    return tree;
}

RegressionTreeEnsemble::RegressionTreeEnsemble(std::vector<RegressionTree> trees) : trees_(std::move(trees)) {
    require(!trees_.empty(), "ensemble needs at least one tree");
}

double RegressionTreeEnsemble::predict(StateView x) const {
    double total = 0.0;
    for (const auto& t : trees_) total += t.predict(x);
    return total / static_cast<double>(trees_.size());
}

RegressionTreeEnsemble fit_tree_regressor(const RegressionData& data, const TreeConfig& cfg, Rng& rng) {
    require(data.size() > 0, "cannot fit a regressor on empty data");
    require(cfg.n_trees >= 1, "need at least one tree");
    const std::uint64_t master = rng();
    std::vector<RegressionTree> trees(cfg.n_trees);
    parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
        Rng tree_rng = make_rng(master, t);
        trees[t] = fit_single_tree(data, cfg, tree_rng);
    });
    return RegressionTreeEnsemble(std::move(trees));
}

}  // namespace capi
