#include "capi/environments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace capi {

TabularMdp build_chain_walk(const ChainWalkSpec& spec) {
    const std::size_t n = spec.n_states;
    require(n >= 2, "chain walk needs at least two states");
    require(spec.success_prob >= 0.0 && spec.success_prob <= 1.0, "success_prob must lie in [0, 1]");
    std::vector<double> reward(n * 2, 0.0);
    std::vector<double> transition(n * 2 * n, 0.0);

    auto set_block = [&](std::size_t first, std::size_t last, double value) {
        // 1-indexed, inclusive; clipped to the chain
        for (std::size_t s = first; s <= last && s <= n; ++s) {
            reward[(s - 1) * 2 + 0] = value;
            reward[(s - 1) * 2 + 1] = value;
        }
    };
    set_block(10, 15, 1.0);
    if (spec.variant == ChainVariant::A) set_block(180, 190, 0.1);

    for (std::size_t x = 0; x < n; ++x) {
        const std::size_t left = x == 0 ? 0 : x - 1;
        const std::size_t right = x + 1 == n ? x : x + 1;
        for (std::size_t a = 0; a < 2; ++a) {
            double* row = transition.data() + (x * 2 + a) * n;
            std::size_t intended = a == 0 ? left : right;
            std::size_t slipped = a == 0 ? right : left;
            row[intended] += spec.success_prob;
            row[slipped] += 1.0 - spec.success_prob;
        }
    }
    return TabularMdp(n, 2, spec.gamma, std::move(reward), std::move(transition), 1.0);
}

bool Box::contains(StateView x) const {
    if (x.size() != low.size()) return false;
    for (std::size_t d = 0; d < x.size(); ++d)
        if (x[d] < low[d] || x[d] > high[d]) return false;
    return true;
}

void Box::clip(State& x) const {
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = std::clamp(x[d], low[d], high[d]);
}

MountainCar::MountainCar(double gamma)
    : gamma_(gamma), box_{{kMinPosition, -kMaxSpeed}, {kMaxPosition, kMaxSpeed}} {}

State MountainCar::reset(Rng& rng) const {
    return {uniform(rng, kMinPosition, kMaxPosition), uniform(rng, -kMaxSpeed, kMaxSpeed)};
}

StepResult MountainCar::step(StateView x, std::size_t a, Rng&) const {
    require(x.size() == 2 && a < 3, "bad mountain-car state or action");
    if (is_terminal(x)) return {State(x.begin(), x.end()), 0.0, true};
    double velocity = x[1] + (static_cast<double>(a) - 1.0) * kForce - kGravity * std::cos(3.0 * x[0]);
    velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
    double position = x[0] + velocity;
    if (position <= kMinPosition) {
        position = kMinPosition;
        velocity = 0.0;
    }
    position = std::min(position, kMaxPosition);
    return {{position, velocity}, -1.0, position >= kGoal};
}

CartPole::CartPole(double gamma)
    : gamma_(gamma),
      box_{{-kXLimit, -kMaxCartSpeed, -kThetaLimit, -kMaxPoleSpeed},
           {kXLimit, kMaxCartSpeed, kThetaLimit, kMaxPoleSpeed}} {}

State CartPole::reset(Rng& rng) const {
    State s(4);
    for (auto& v : s) v = uniform(rng, -0.05, 0.05);
    return s;
}

bool CartPole::is_terminal(StateView x) const {
    return std::abs(x[2]) >= kThetaLimit || std::abs(x[0]) >= kXLimit;
}

StepResult CartPole::step(StateView x, std::size_t a, Rng&) const {
    require(x.size() == 4 && a < 2, "bad cart-pole state or action");
    if (is_terminal(x)) return {State(x.begin(), x.end()), 0.0, true};
    const double total_mass = kCartMass + kPoleMass;
    const double pole_moment = kPoleMass * kHalfLength;
    const double force = a == 1 ? kForce : -kForce;
    const double cos_t = std::cos(x[2]);
    const double sin_t = std::sin(x[2]);
    const double temp = (force + pole_moment * x[3] * x[3] * sin_t) / total_mass;
    const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                             (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_moment * theta_acc * cos_t / total_mass;
    State next{x[0] + kTau * x[1], x[1] + kTau * x_acc, x[2] + kTau * x[3], x[3] + kTau * theta_acc};
    box_.clip(next);
    bool failed = is_terminal(next);
    return {std::move(next), failed ? 0.0 : 1.0, failed};
}

TabularEnv::TabularEnv(TabularMdp mdp, std::string id)
    : mdp_(std::move(mdp)),
      id_(std::move(id)),
      box_{{0.0}, {static_cast<double>(mdp_.n_states() - 1)}} {}

State TabularEnv::reset(Rng& rng) const { return tabular_state(uniform_index(rng, mdp_.n_states())); }

StepResult TabularEnv::step(StateView x, std::size_t a, Rng& rng) const {
    std::size_t s = state_index(x, mdp_.n_states());
    require(a < mdp_.n_actions(), "action out of range");
    auto successors = mdp_.successors(s, a);
    double u = uniform01(rng);
    std::size_t next = successors.back().next;
    double acc = 0.0;
    for (const auto& succ : successors) {
        acc += succ.prob;
        if (u < acc) {
            next = succ.next;
            break;
        }
    }
    return {tabular_state(next), mdp_.reward(s, a), false};
}

bool is_tabular_env(const std::string& id) { return id == "chain_a" || id == "chain_b"; }

TabularMdp make_tabular_mdp(const EnvSpec& spec) {
    require(is_tabular_env(spec.id), "environment '" + spec.id + "' is not tabular");
    ChainWalkSpec chain;
    chain.n_states = spec.n_states;
    chain.success_prob = spec.success_prob;
    chain.variant = spec.id == "chain_a" ? ChainVariant::A : ChainVariant::B;
    return build_chain_walk(chain);
}

std::unique_ptr<GenerativeEnv> make_env(const EnvSpec& spec) {
    if (is_tabular_env(spec.id)) return std::make_unique<TabularEnv>(make_tabular_mdp(spec), spec.id);
    if (spec.id == "mountain_car") return std::make_unique<MountainCar>();
    if (spec.id == "cart_pole") return std::make_unique<CartPole>();
    throw ContractViolation("unknown environment id '" + spec.id + "'");
}

std::string to_string(NuScheme scheme) {
    switch (scheme) {
        case NuScheme::all_states: return "all_states";
        case NuScheme::uniform_states: return "uniform_states";
        case NuScheme::uniform_box: return "uniform_box";
        case NuScheme::random_policy_visits: return "random_policy_visits";
    }
    return "unknown";
}

NuScheme parse_nu_scheme(const std::string& text) {
    for (auto s : {NuScheme::all_states, NuScheme::uniform_states, NuScheme::uniform_box,
                   NuScheme::random_policy_visits})
        if (to_string(s) == text) return s;
    throw ContractViolation("unknown sampling scheme '" + text + "'");
}

namespace {

std::vector<State> tabular_states(std::size_t n_states, NuScheme scheme, std::size_t n, Rng& rng) {
    std::vector<State> out;
    if (scheme == NuScheme::all_states) {
        for (std::size_t x = 0; x < n_states; ++x) out.push_back(tabular_state(x));
        return out;
    }
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(tabular_state(uniform_index(rng, n_states)));
    return out;
}

}  // namespace

std::vector<State> sample_nu(const GenerativeEnv& env, NuScheme scheme, std::size_t n, Rng& rng) {
    require(n >= 1, "need at least one sample");
    auto discrete = env.n_discrete_states();
    switch (scheme) {
        case NuScheme::all_states:
        case NuScheme::uniform_states:
            require(discrete.has_value(), "scheme " + to_string(scheme) + " needs a tabular environment");
            return tabular_states(*discrete, scheme, n, rng);
        case NuScheme::uniform_box: {
            require(!discrete, "uniform_box needs a continuous environment");
            const Box& box = env.state_box();
            std::vector<State> out(n, State(box.dim()));
            for (auto& s : out)
                for (std::size_t d = 0; d < box.dim(); ++d) s[d] = uniform(rng, box.low[d], box.high[d]);
            return out;
        }
        case NuScheme::random_policy_visits: {
            std::vector<State> out;
            out.reserve(n);
            State x = env.reset(rng);
            while (out.size() < n) {
                out.push_back(x);
                auto step = env.step(x, uniform_index(rng, env.n_actions()), rng);
                x = step.terminal ? env.reset(rng) : std::move(step.next);
            }
            return out;
        }
    }
    throw ContractViolation("unknown sampling scheme");
}

std::vector<State> sample_nu(const TabularMdp& mdp, NuScheme scheme, std::size_t n, Rng& rng) {
    require(n >= 1, "need at least one sample");
    require(scheme == NuScheme::all_states || scheme == NuScheme::uniform_states,
            "scheme " + to_string(scheme) + " is not available for a tabular MDP");
    return tabular_states(mdp.n_states(), scheme, n, rng);
}

EpisodeResult evaluate_episode(const GenerativeEnv& env, const Policy& policy, std::size_t max_steps,
                               double gamma, Rng& rng, const EpisodeOptions& options) {
    require(max_steps >= 1, "max_steps must be at least 1");
    EpisodeResult result;
    State x = options.start ? *options.start : env.reset(rng);
    double discount = 1.0;
    while (result.steps < max_steps) {
        std::size_t a = policy.act(x);
        auto step = env.step(x, a, rng);
        if (options.store_trajectory) result.trajectory.push_back({x, a, step.reward});
        result.discounted_return += discount * step.reward;
        discount *= gamma;
        ++result.steps;
        if (step.terminal) {
            result.terminated = true;
            break;
        }
        x = std::move(step.next);
    }
    return result;
}

std::string to_string(CollectScheme scheme) {
    return scheme == CollectScheme::iid_uniform ? "iid_uniform" : "random_policy_trajectories";
}

CollectScheme parse_collect_scheme(const std::string& text) {
    if (text == "iid_uniform") return CollectScheme::iid_uniform;
    if (text == "random_policy_trajectories") return CollectScheme::random_policy_trajectories;
    throw ContractViolation("unknown collection scheme '" + text + "'");
}

std::vector<Transition> collect_transitions(const GenerativeEnv& env, std::size_t n, CollectScheme scheme,
                                            Rng& rng, std::size_t max_trajectory_length) {
    require(n >= 1, "need at least one transition");
    std::vector<Transition> out;
    out.reserve(n);
    if (scheme == CollectScheme::iid_uniform) {
        auto nu = env.n_discrete_states() ? NuScheme::uniform_states : NuScheme::uniform_box;
        auto states = sample_nu(env, nu, n, rng);
        for (auto& x : states) {
            std::size_t a = uniform_index(rng, env.n_actions());
            auto step = env.step(x, a, rng);
            out.push_back({std::move(x), a, step.reward, std::move(step.next), step.terminal});
        }
        return out;
    }
    require(max_trajectory_length >= 1, "trajectory length must be positive");
    State x = env.reset(rng);
    std::size_t length = 0;
    while (out.size() < n) {
        std::size_t a = uniform_index(rng, env.n_actions());
        auto step = env.step(x, a, rng);
        out.push_back({x, a, step.reward, step.next, step.terminal});
        ++length;
        if (step.terminal || length >= max_trajectory_length) {
            x = env.reset(rng);
            length = 0;
        } else {
            x = std::move(step.next);
        }
    }
    return out;
}

void write_transitions(std::ostream& out, const std::vector<Transition>& data) {
    std::size_t dim = data.empty() ? 0 : data.front().x.size();
    out << "transitions " << dim << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    for (const auto& t : data) {
        for (double v : t.x) put(v), out << ' ';
        out << t.a << ' ';
        put(t.r);
        for (double v : t.next) out << ' ', put(v);
        out << ' ' << (t.done ? 1 : 0) << '\n';
    }
}

std::vector<Transition> read_transitions(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("transitions line " + std::to_string(line_no) + ": " + what);
    };
    std::size_t dim = 0;
    bool have_header = false;
    std::vector<Transition> out;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!have_header) {
            std::string word;
            if (!(ls >> word >> dim) || word != "transitions") fail("expected header");
            have_header = true;
            continue;
        }
        Transition t;
        t.x.resize(dim);
        t.next.resize(dim);
        int done = 0;
        for (auto& v : t.x)
            if (!(ls >> v)) fail("bad state");
        if (!(ls >> t.a >> t.r)) fail("bad action or reward");
        for (auto& v : t.next)
            if (!(ls >> v)) fail("bad next state");
        if (!(ls >> done)) fail("bad done flag");
        t.done = done != 0;
        out.push_back(std::move(t));
    }
    if (!have_header) throw std::runtime_error("transitions: missing header");
    return out;
}

}  // namespace capi
