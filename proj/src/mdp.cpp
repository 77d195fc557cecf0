#include "capi/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace capi {

std::size_t state_index(StateView x, std::size_t n_states) {
    require(x.size() == 1, "tabular state must have exactly one coordinate");
    double v = x[0];
    require(v >= 0.0 && v < static_cast<double>(n_states) && v == std::floor(v),
            "tabular state index out of range");
    return static_cast<std::size_t>(v);
}

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, double gamma,
                       std::vector<double> reward, std::vector<double> transition,
                       std::optional<double> r_max)
    : n_states_(n_states),
      n_actions_(n_actions),
      gamma_(gamma),
      r_max_(0.0),
      reward_(std::move(reward)),
      transition_(std::move(transition)) {
    require(n_states_ > 0 && n_actions_ > 0, "MDP needs at least one state and one action");
    require(gamma_ >= 0.0 && gamma_ < 1.0, "gamma must lie in [0, 1)");
    require(reward_.size() == n_states_ * n_actions_, "reward table has wrong size");
    require(transition_.size() == n_states_ * n_actions_ * n_states_,
            "transition tensor has wrong size");

    double largest = 0.0;
    for (double r : reward_) {
        require(std::isfinite(r), "reward must be finite");
        largest = std::max(largest, std::abs(r));
    }
    if (r_max) {
        require(std::isfinite(*r_max) && *r_max >= largest, "declared R_max below max |reward|");
        r_max_ = *r_max;
    } else {
        r_max_ = largest;
    }

    offsets_.reserve(n_states_ * n_actions_ + 1);
    offsets_.push_back(0);
    for (std::size_t xa = 0; xa < n_states_ * n_actions_; ++xa) {
        const double* row = transition_.data() + xa * n_states_;
        double total = 0.0;
        for (std::size_t y = 0; y < n_states_; ++y) {
            require(row[y] >= 0.0, "negative transition probability");
            total += row[y];
            if (row[y] > 0.0) successors_.push_back({y, row[y]});
        }
        require(std::abs(total - 1.0) <= 1e-12, "transition row does not sum to 1");
        offsets_.push_back(successors_.size());
    }
}

std::span<const double> TabularMdp::transition_row(std::size_t x, std::size_t a) const {
    return {transition_.data() + (x * n_actions_ + a) * n_states_, n_states_};
}

std::span<const TabularMdp::Successor> TabularMdp::successors(std::size_t x, std::size_t a) const {
    std::size_t xa = x * n_actions_ + a;
    return {successors_.data() + offsets_[xa], offsets_[xa + 1] - offsets_[xa]};
}

TabularQ::TabularQ(std::size_t n_states, std::size_t n_actions, double q_max)
    : TabularQ(n_states, n_actions, q_max, std::vector<double>(n_states * n_actions, 0.0)) {}

TabularQ::TabularQ(std::size_t n_states, std::size_t n_actions, double q_max,
                   std::vector<double> values)
    : n_states_(n_states), n_actions_(n_actions), q_max_(q_max), values_(std::move(values)) {
    require(values_.size() == n_states_ * n_actions_, "Q table has wrong size");
}

double TabularQ::value(StateView x, std::size_t a) const {
    require(a < n_actions_, "action out of range");
    return (*this)(state_index(x, n_states_), a);
}

double sup_distance(const TabularQ& a, const TabularQ& b) {
    require(a.values_.size() == b.values_.size(), "Q tables differ in shape");
    double d = 0.0;
    for (std::size_t i = 0; i < a.values_.size(); ++i)
        d = std::max(d, std::abs(a.values_[i] - b.values_[i]));
    return d;
}

void validate_distribution(std::span<const double> p, std::size_t n) {
    require(p.size() == n, "distribution has wrong size");
    double total = 0.0;
    for (double v : p) {
        require(v >= 0.0, "distribution has a negative entry");
        total += v;
    }
    require(std::abs(total - 1.0) <= 1e-12, "distribution does not sum to 1");
}

std::vector<double> uniform_distribution(std::size_t n) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

double action_gap(std::span<const double> q_row, std::optional<std::size_t> a) {
    require(!q_row.empty(), "empty action-value row");
    if (!a) {
        require(q_row.size() == 2, "two-action gap needs exactly two actions");
        return std::abs(q_row[0] - q_row[1]);
    }
    require(*a < q_row.size(), "action out of range");
    return q_row[greedy_action(q_row)] - q_row[*a];
}

double action_gap(const ActionValueFn& q, StateView x, std::optional<std::size_t> a) {
    return action_gap(q.row(x), a);
}

std::size_t greedy_action(std::span<const double> q_row) {
    require(!q_row.empty(), "empty action-value row");
    std::size_t best = 0;
    for (std::size_t a = 1; a < q_row.size(); ++a)
        if (q_row[a] > q_row[best]) best = a;
    return best;
}

std::size_t greedy_action(const ActionValueFn& q, StateView x) { return greedy_action(q.row(x)); }

std::vector<std::size_t> tabulate(const Policy& policy, std::size_t n_states) {
    std::vector<std::size_t> actions(n_states);
    for (std::size_t x = 0; x < n_states; ++x) actions[x] = policy.act(tabular_state(x));
    return actions;
}

namespace {

void check_shape(const TabularMdp& mdp, const TabularQ& q) {
    require(q.n_states() == mdp.n_states() && q.n_actions() == mdp.n_actions(),
            "Q table does not match the MDP dimensions");
}

// Continuation value q(y, pi(y)) per next state, or max_a q(y, a).
std::vector<double> continuation(const TabularQ& q, std::span<const std::size_t> actions) {
    std::vector<double> v(q.n_states());
    for (std::size_t y = 0; y < v.size(); ++y) {
        if (actions.empty()) {
            auto r = q.row(y);
            v[y] = *std::max_element(r.begin(), r.end());
        } else {
            v[y] = q(y, actions[y]);
        }
    }
    return v;
}

TabularQ backup_with(const TabularMdp& mdp, const TabularQ& q, std::span<const std::size_t> actions) {
    check_shape(mdp, q);
    std::vector<double> v = continuation(q, actions);
    std::vector<double> out(mdp.n_states() * mdp.n_actions());
    const double gamma = mdp.gamma();
    for (std::size_t x = 0; x < mdp.n_states(); ++x) {
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            double expected = 0.0;
            for (const auto& s : mdp.successors(x, a)) expected += s.prob * v[s.next];
            out[x * mdp.n_actions() + a] = mdp.reward(x, a) + gamma * expected;
        }
    }
    return TabularQ(mdp.n_states(), mdp.n_actions(), q.q_max(), std::move(out));
}

TabularQ iterate_to_fixed_point(const TabularMdp& mdp, std::span<const std::size_t> actions, double tol) {
    require(tol > 0.0, "solver tolerance must be positive");
    TabularQ q(mdp.n_states(), mdp.n_actions(), mdp.q_max());
    for (;;) {
        TabularQ next = backup_with(mdp, q, actions);
        double diff = sup_distance(next, q);
        q = std::move(next);
        // ||T q' - q'|| <= gamma ||q' - q|| <= tol
        if (diff <= tol) return q;
    }
}

}  // namespace

TabularQ bellman_backup(const TabularMdp& mdp, const TabularQ& q, const Policy* policy) {
    if (policy == nullptr) return backup_with(mdp, q, {});
    auto actions = tabulate(*policy, mdp.n_states());
    return backup_with(mdp, q, actions);
}

TabularQ bellman_backup(const TabularMdp& mdp, const TabularQ& q, std::span<const std::size_t> actions) {
    require(actions.size() == mdp.n_states(), "policy table does not match the MDP");
    return backup_with(mdp, q, actions);
}

TabularQ solve_q_policy(const TabularMdp& mdp, const Policy& policy, double tol) {
    auto actions = tabulate(policy, mdp.n_states());
    return iterate_to_fixed_point(mdp, actions, tol);
}

TabularQ solve_q_policy(const TabularMdp& mdp, std::span<const std::size_t> actions, double tol) {
    require(actions.size() == mdp.n_states(), "policy table does not match the MDP");
    for (auto a : actions) require(a < mdp.n_actions(), "policy action out of range");
    return iterate_to_fixed_point(mdp, actions, tol);
}

std::vector<double> policy_values(const TabularQ& q, std::span<const std::size_t> actions) {
    require(actions.size() == q.n_states(), "policy table does not match the Q table");
    std::vector<double> v(actions.size());
    for (std::size_t x = 0; x < v.size(); ++x) v[x] = q(x, actions[x]);
    return v;
}

namespace {

std::vector<std::size_t> greedy_table(const TabularQ& q) {
    std::vector<std::size_t> actions(q.n_states());
    for (std::size_t x = 0; x < actions.size(); ++x) actions[x] = greedy_action(q.row(x));
    return actions;
}

}  // namespace

OptimalSolution solve_optimal(const TabularMdp& mdp, double tol) {
    TabularQ q = iterate_to_fixed_point(mdp, {}, tol);
    PolicyRepr policy = TabularPolicy(greedy_table(q), mdp.n_actions());
    return {std::move(q), std::move(policy)};
}

std::vector<PolicyRepr> exact_policy_iteration(const TabularMdp& mdp, const PolicyRepr& init,
                                               std::size_t max_iters, double tol) {
    require(max_iters >= 1, "policy iteration needs at least one iteration");
    std::vector<PolicyRepr> out;
    auto current = tabulate(init, mdp.n_states());
    for (std::size_t k = 0; k < max_iters; ++k) {
        TabularQ q = solve_q_policy(mdp, current, tol);
        auto next = greedy_table(q);
        // keep the incumbent action on ties so PI cannot cycle between
        // equally good greedy choices
        for (std::size_t x = 0; x < next.size(); ++x)
            if (q(x, current[x]) == q(x, next[x])) next[x] = current[x];
        bool stable = next == current;
        out.emplace_back(TabularPolicy(next, mdp.n_actions()));
        current = std::move(next);
        if (stable) break;
    }
    return out;
}

double performance_loss(const TabularMdp& mdp, const Policy& policy, std::span<const double> rho,
                        double tol) {
    return LossOracle(mdp, std::vector<double>(rho.begin(), rho.end()), tol).loss(policy);
}

LossOracle::LossOracle(const TabularMdp& mdp, std::vector<double> rho, double tol)
    : mdp_(&mdp), rho_(std::move(rho)), tol_(tol), q_star_(solve_optimal(mdp, tol).q) {
    validate_distribution(rho_, mdp.n_states());
    v_star_.resize(mdp.n_states());
    for (std::size_t x = 0; x < v_star_.size(); ++x) {
        auto r = q_star_.row(x);
        v_star_[x] = *std::max_element(r.begin(), r.end());
    }
}

double LossOracle::loss(const Policy& policy) const {
    auto actions = tabulate(policy, mdp_->n_states());
    return loss(actions);
}

double LossOracle::loss(std::span<const std::size_t> actions) const {
    TabularQ q = solve_q_policy(*mdp_, actions, tol_);
    auto v = policy_values(q, actions);
    double total = 0.0;
    for (std::size_t x = 0; x < v.size(); ++x) total += rho_[x] * (v_star_[x] - v[x]);
    return total;
}

void write_mdp(std::ostream& out, const TabularMdp& mdp) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", mdp.gamma());
    out << "mdp " << mdp.n_states() << ' ' << mdp.n_actions() << ' ' << buf << '\n';
    for (std::size_t x = 0; x < mdp.n_states(); ++x)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a)
            if (mdp.reward(x, a) != 0.0) {
                std::snprintf(buf, sizeof buf, "%.17g", mdp.reward(x, a));
                out << "r " << x << ' ' << a << ' ' << buf << '\n';
            }
    for (std::size_t x = 0; x < mdp.n_states(); ++x)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a)
            for (const auto& s : mdp.successors(x, a)) {
                std::snprintf(buf, sizeof buf, "%.17g", s.prob);
                out << "p " << x << ' ' << a << ' ' << s.next << ' ' << buf << '\n';
            }
}

TabularMdp read_mdp(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("mdp line " + std::to_string(line_no) + ": " + what);
    };
    std::size_t n_states = 0, n_actions = 0;
    double gamma = 0.0;
    bool have_header = false;
    std::vector<double> reward, transition;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind) || kind[0] == '#') continue;
        if (!have_header) {
            if (kind != "mdp" || !(ls >> n_states >> n_actions >> gamma)) fail("expected header");
            if (n_states == 0 || n_actions == 0) fail("empty state or action set");
            reward.assign(n_states * n_actions, 0.0);
            transition.assign(n_states * n_actions * n_states, 0.0);
            have_header = true;
        } else if (kind == "r") {
            std::size_t x, a;
            double v;
            if (!(ls >> x >> a >> v) || x >= n_states || a >= n_actions) fail("bad reward entry");
            reward[x * n_actions + a] = v;
        } else if (kind == "p") {
            std::size_t x, a, y;
            double v;
            if (!(ls >> x >> a >> y >> v) || x >= n_states || a >= n_actions || y >= n_states)
                fail("bad transition entry");
            transition[(x * n_actions + a) * n_states + y] = v;
        } else {
            fail("unknown entry '" + kind + "'");
        }
    }
    if (!have_header) throw std::runtime_error("mdp: missing header");
    return TabularMdp(n_states, n_actions, gamma, std::move(reward), std::move(transition));
}

}  // namespace capi
