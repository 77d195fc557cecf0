#include "capi/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace capi {

TabularPolicy::TabularPolicy(std::vector<std::size_t> actions, std::size_t n_actions)
    : actions_(std::move(actions)), n_actions_(n_actions) {
    require(!actions_.empty(), "tabular policy needs at least one state");
    require(n_actions_ > 0, "tabular policy needs at least one action");
    for (auto a : actions_) require(a < n_actions_, "tabular policy action out of range");
}

std::size_t TabularPolicy::act(StateView x) const { return actions_[state_index(x, actions_.size())]; }

ThresholdPolicy::ThresholdPolicy(std::size_t threshold, Orientation orientation)
    : threshold_(threshold), orientation_(orientation) {
    require(threshold_ >= 1, "threshold must be at least 1");
}

std::size_t ThresholdPolicy::act(StateView x) const {
    require(x.size() == 1 && x[0] >= 0.0, "threshold policy expects a tabular state");
    bool low = x[0] < static_cast<double>(threshold_);
    std::size_t low_action = orientation_ == Orientation::low_is_a0 ? 0 : 1;
    return low ? low_action : 1 - low_action;
}

KnnPolicy::KnnPolicy(std::vector<State> support, std::vector<double> q_rows, std::size_t n_actions,
                     std::size_t kappa, std::vector<double> scale)
    : q_rows_(std::move(q_rows)), scale_(std::move(scale)), n_actions_(n_actions), kappa_(kappa) {
    require(kappa_ >= 1, "kappa must be at least 1");
    require(support.size() >= kappa_, "kappa exceeds the number of support points");
    require(n_actions_ > 0, "KNN policy needs at least one action");
    require(q_rows_.size() == support.size() * n_actions_, "Q rows do not match the support");
    dim_ = support.front().size();
    require(dim_ > 0, "support points must be non-empty");
    if (scale_.empty()) scale_.assign(dim_, 1.0);
    require(scale_.size() == dim_, "scale has wrong dimension");
    support_.reserve(support.size() * dim_);
    for (const auto& s : support) {
        require(s.size() == dim_, "support points differ in dimension");
        support_.insert(support_.end(), s.begin(), s.end());
    }
}

StateView KnnPolicy::support_point(std::size_t i) const { return {support_.data() + i * dim_, dim_}; }

std::span<const double> KnnPolicy::q_row(std::size_t i) const {
    return {q_rows_.data() + i * n_actions_, n_actions_};
}

std::vector<std::size_t> KnnPolicy::neighbours(StateView x) const {
    require(x.size() == dim_, "query state has wrong dimension");
    const std::size_t n = support_size();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = support_.data() + i * dim_;
        double d2 = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) {
            double diff = (x[d] - p[d]) * scale_[d];
            d2 += diff * diff;
        }
        dist[i] = {d2, i};
    }
    // pair ordering breaks distance ties by the lower index
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kappa_ - 1), dist.end());
    std::vector<std::size_t> out(kappa_);
    for (std::size_t i = 0; i < kappa_; ++i) out[i] = dist[i].second;
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t KnnPolicy::act(StateView x) const {
    std::vector<double> total(n_actions_, 0.0);
    for (auto i : neighbours(x)) {
        auto row = q_row(i);
        for (std::size_t a = 0; a < n_actions_; ++a) total[a] += row[a];
    }
    std::size_t best = 0;
    for (std::size_t a = 1; a < n_actions_; ++a)
        if (total[a] > total[best]) best = a;
    return best;
}

std::size_t PartitionTree::leaf_index(StateView x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& node = nodes[i];
        i = x[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
    }
    return i;
}

std::size_t PartitionTree::act(StateView x) const { return nodes[leaf_index(x)].action; }

TreeEnsemblePolicy::TreeEnsemblePolicy(std::vector<PartitionTree> trees, std::size_t n_actions)
    : trees_(std::move(trees)), n_actions_(n_actions) {
    require(!trees_.empty(), "tree ensemble needs at least one tree");
    require(n_actions_ > 0, "tree ensemble needs at least one action");
    for (const auto& t : trees_) {
        require(!t.nodes.empty(), "empty partition tree");
        for (const auto& node : t.nodes) {
            if (node.feature < 0)
                require(node.action < n_actions_, "leaf action out of range");
            else
                require(node.left < t.nodes.size() && node.right < t.nodes.size(),
                        "tree child index out of range");
        }
    }
}

std::size_t TreeEnsemblePolicy::act(StateView x) const {
    std::vector<std::size_t> votes(n_actions_, 0);
    for (const auto& t : trees_) ++votes[t.act(x)];
    std::size_t best = 0;
    for (std::size_t a = 1; a < n_actions_; ++a)
        if (votes[a] > votes[best]) best = a;
    return best;
}

std::string to_string(PolicyTag tag) {
    switch (tag) {
        case PolicyTag::tabular: return "tabular";
        case PolicyTag::threshold: return "threshold";
        case PolicyTag::knn: return "knn";
        case PolicyTag::tree_ensemble: return "tree_ensemble";
    }
    return "unknown";
}

std::size_t PolicyRepr::act(StateView x) const {
    return std::visit([&](const auto& p) { return p.act(x); }, repr_);
}

std::size_t PolicyRepr::n_actions() const {
    return std::visit([](const auto& p) { return p.n_actions(); }, repr_);
}

PolicyRepr constant_tabular_policy(std::size_t n_states, std::size_t n_actions, std::size_t action) {
    return TabularPolicy(std::vector<std::size_t>(n_states, action), n_actions);
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_tree(std::ostream& out, const PartitionTree& tree, std::size_t i) {
    const auto& node = tree.nodes[i];
    if (node.feature < 0) {
        out << "leaf " << node.action << '\n';
        return;
    }
    out << "split " << node.feature << ' ' << fmt(node.threshold) << '\n';
    write_tree(out, tree, node.left);
    write_tree(out, tree, node.right);
}

std::size_t count_nodes(const PartitionTree& tree, std::size_t i) {
    const auto& node = tree.nodes[i];
    if (node.feature < 0) return 1;
    return 1 + count_nodes(tree, node.left) + count_nodes(tree, node.right);
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::istringstream next_line() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
        }
        fail("unexpected end of input");
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("policy line " + std::to_string(line_no_) + ": " + what);
    }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

std::uint32_t read_tree_node(Reader& reader, PartitionTree& tree, std::size_t dim) {
    auto ls = reader.next_line();
    std::string kind;
    ls >> kind;
    auto index = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (kind == "leaf") {
        std::size_t action;
        if (!(ls >> action)) reader.fail("bad leaf");
        tree.nodes[index].action = action;
    } else if (kind == "split") {
        std::int32_t feature;
        double threshold;
        if (!(ls >> feature >> threshold) || feature < 0 || static_cast<std::size_t>(feature) >= dim)
            reader.fail("bad split");
        tree.nodes[index].feature = feature;
        tree.nodes[index].threshold = threshold;
        auto left = read_tree_node(reader, tree, dim);
        auto right = read_tree_node(reader, tree, dim);
        tree.nodes[index].left = left;
        tree.nodes[index].right = right;
    } else {
        reader.fail("expected 'leaf' or 'split'");
    }
    return index;
}

}  // namespace

void write_policy(std::ostream& out, const PolicyRepr& policy) {
    if (const auto* p = policy.get_if<TabularPolicy>()) {
        out << "tabular " << p->n_states() << ' ' << p->n_actions() << '\n';
        for (std::size_t x = 0; x < p->n_states(); ++x) out << (x ? " " : "") << p->actions()[x];
        out << '\n';
    } else if (const auto* p = policy.get_if<ThresholdPolicy>()) {
        out << "threshold " << p->threshold() << ' '
            << (p->orientation() == Orientation::low_is_a0 ? "low_is_a0" : "low_is_a1") << '\n';
    } else if (const auto* p = policy.get_if<KnnPolicy>()) {
        out << "knn " << p->kappa() << ' ' << p->support_size() << ' ' << p->dim() << ' '
            << p->n_actions() << '\n';
        out << "scale";
        for (double s : p->scale()) out << ' ' << fmt(s);
        out << '\n';
        for (std::size_t i = 0; i < p->support_size(); ++i) {
            auto x = p->support_point(i);
            for (std::size_t d = 0; d < p->dim(); ++d) out << (d ? " " : "") << fmt(x[d]);
            for (double q : p->q_row(i)) out << ' ' << fmt(q);
            out << '\n';
        }
    } else if (const auto* p = policy.get_if<TreeEnsemblePolicy>()) {
        std::size_t dim = 0;
        for (const auto& t : p->trees())
            for (const auto& n : t.nodes)
                if (n.feature >= 0) dim = std::max(dim, static_cast<std::size_t>(n.feature) + 1);
        out << "tree_ensemble " << p->trees().size() << ' ' << p->n_actions() << ' ' << dim << '\n';
        for (const auto& t : p->trees()) {
            out << "tree " << count_nodes(t, 0) << '\n';
            write_tree(out, t, 0);
        }
    }
}

PolicyRepr read_policy(std::istream& in) {
    Reader reader(in);
    auto header = reader.next_line();
    std::string tag;
    header >> tag;
    if (tag == "tabular") {
        std::size_t n, n_actions;
        if (!(header >> n >> n_actions)) reader.fail("bad tabular header");
        auto ls = reader.next_line();
        std::vector<std::size_t> actions(n);
        for (auto& a : actions)
            if (!(ls >> a)) reader.fail("too few tabular actions");
        return TabularPolicy(std::move(actions), n_actions);
    }
    if (tag == "threshold") {
        std::size_t p;
        std::string orient;
        if (!(header >> p >> orient)) reader.fail("bad threshold header");
        if (orient != "low_is_a0" && orient != "low_is_a1") reader.fail("bad orientation");
        return ThresholdPolicy(p, orient == "low_is_a0" ? Orientation::low_is_a0 : Orientation::low_is_a1);
    }
    if (tag == "knn") {
        std::size_t kappa, n, dim, n_actions;
        if (!(header >> kappa >> n >> dim >> n_actions)) reader.fail("bad knn header");
        auto sl = reader.next_line();
        std::string word;
        sl >> word;
        if (word != "scale") reader.fail("expected scale line");
        std::vector<double> scale(dim);
        for (auto& s : scale)
            if (!(sl >> s)) reader.fail("bad scale");
        std::vector<State> support(n, State(dim));
        std::vector<double> rows(n * n_actions);
        for (std::size_t i = 0; i < n; ++i) {
            auto ls = reader.next_line();
            for (auto& v : support[i])
                if (!(ls >> v)) reader.fail("bad support point");
            for (std::size_t a = 0; a < n_actions; ++a)
                if (!(ls >> rows[i * n_actions + a])) reader.fail("bad Q row");
        }
        return KnnPolicy(std::move(support), std::move(rows), n_actions, kappa, std::move(scale));
    }
    if (tag == "tree_ensemble") {
        std::size_t n_trees, n_actions, dim;
        if (!(header >> n_trees >> n_actions >> dim)) reader.fail("bad tree_ensemble header");
        std::vector<PartitionTree> trees(n_trees);
        for (auto& t : trees) {
            auto tl = reader.next_line();
            std::string word;
            std::size_t n_nodes;
            if (!(tl >> word >> n_nodes) || word != "tree") reader.fail("expected tree header");
            t.nodes.reserve(n_nodes);
            read_tree_node(reader, t, std::max<std::size_t>(dim, 1));
            if (t.nodes.size() != n_nodes) reader.fail("tree node count mismatch");
        }
        return TreeEnsemblePolicy(std::move(trees), n_actions);
    }
    reader.fail("unknown policy tag '" + tag + "'");
}

std::string policy_to_string(const PolicyRepr& policy) {
    std::ostringstream out;
    write_policy(out, policy);
    return out.str();
}

PolicyRepr policy_from_string(const std::string& text) {
    std::istringstream in(text);
    return read_policy(in);
}

}  // namespace capi
