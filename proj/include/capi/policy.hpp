#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "capi/common.hpp"

namespace capi {

/// Explicit action per tabular state.
class TabularPolicy {
public:
    TabularPolicy(std::vector<std::size_t> actions, std::size_t n_actions);

    std::size_t act(StateView x) const;
    std::size_t n_actions() const { return n_actions_; }
    std::size_t n_states() const { return actions_.size(); }
    const std::vector<std::size_t>& actions() const { return actions_; }

    friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

private:
    std::vector<std::size_t> actions_;
    std::size_t n_actions_;
};

enum class Orientation { low_is_a0, low_is_a1 };

/// Two-action half-space policy on a tabular chain.
///
/// States with 0-based index below `threshold` (the 1-indexed states
/// 1..threshold) take the "low" action; all others take the other one.
class ThresholdPolicy {
public:
    ThresholdPolicy(std::size_t threshold, Orientation orientation);

    std::size_t act(StateView x) const;
    std::size_t n_actions() const { return 2; }
    std::size_t threshold() const { return threshold_; }
    Orientation orientation() const { return orientation_; }

    friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;

private:
    std::size_t threshold_;
    Orientation orientation_;
};

/// Picks argmax_a of the summed action values over the kappa nearest
/// support points. Distances are Euclidean after per-dimension scaling.
class KnnPolicy {
public:
    /// `q_rows` is row-major, one row of n_actions values per support point.
    KnnPolicy(std::vector<State> support, std::vector<double> q_rows, std::size_t n_actions,
              std::size_t kappa, std::vector<double> scale = {});

    std::size_t act(StateView x) const;
    std::size_t n_actions() const { return n_actions_; }
    std::size_t kappa() const { return kappa_; }
    std::size_t dim() const { return dim_; }
    std::size_t support_size() const { return support_.size() / dim_; }
    StateView support_point(std::size_t i) const;
    std::span<const double> q_row(std::size_t i) const;
    const std::vector<double>& scale() const { return scale_; }

    /// Indices of the kappa nearest support points, ties by lower index.
    std::vector<std::size_t> neighbours(StateView x) const;

private:
    std::vector<double> support_;  // row-major
    std::vector<double> q_rows_;
    std::vector<double> scale_;
    std::size_t n_actions_;
    std::size_t kappa_;
    std::size_t dim_;
};

/// Axis-aligned partition of the state space with an action per leaf.
struct PartitionTree {
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;     // x[feature] < threshold goes left
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        std::size_t action = 0;
    };
    std::vector<Node> nodes;  // nodes[0] is the root

    std::size_t act(StateView x) const;
    std::size_t leaf_index(StateView x) const;
};

/// Plurality vote over partition trees; ties go to the lowest action.
class TreeEnsemblePolicy {
public:
    TreeEnsemblePolicy(std::vector<PartitionTree> trees, std::size_t n_actions);

    std::size_t act(StateView x) const;
    std::size_t n_actions() const { return n_actions_; }
    const std::vector<PartitionTree>& trees() const { return trees_; }

private:
    std::vector<PartitionTree> trees_;
    std::size_t n_actions_;
};

enum class PolicyTag { tabular, threshold, knn, tree_ensemble };

std::string to_string(PolicyTag tag);

/// Tagged union of the supported policy representations.
class PolicyRepr final : public Policy {
public:
    using Variant = std::variant<TabularPolicy, ThresholdPolicy, KnnPolicy, TreeEnsemblePolicy>;

    PolicyRepr(TabularPolicy p) : repr_(std::move(p)) {}
    PolicyRepr(ThresholdPolicy p) : repr_(std::move(p)) {}
    PolicyRepr(KnnPolicy p) : repr_(std::move(p)) {}
    PolicyRepr(TreeEnsemblePolicy p) : repr_(std::move(p)) {}

    std::size_t act(StateView x) const override;
    std::size_t n_actions() const override;
    PolicyTag tag() const { return static_cast<PolicyTag>(repr_.index()); }

    const Variant& variant() const { return repr_; }
    template <class T>
    const T* get_if() const { return std::get_if<T>(&repr_); }

private:
    Variant repr_;
};

/// Policy that plays the same action everywhere, as a tabular policy.
PolicyRepr constant_tabular_policy(std::size_t n_states, std::size_t n_actions, std::size_t action);

/// Text serialization; doubles are written with 17 significant digits.
void write_policy(std::ostream& out, const PolicyRepr& policy);
PolicyRepr read_policy(std::istream& in);
std::string policy_to_string(const PolicyRepr& policy);
PolicyRepr policy_from_string(const std::string& text);

}  // namespace capi
