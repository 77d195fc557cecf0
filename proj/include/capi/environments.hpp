#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capi/common.hpp"
#include "capi/mdp.hpp"
#include "capi/random.hpp"

namespace capi {

enum class ChainVariant { A, B };

struct ChainWalkSpec {
    std::size_t n_states = 200;
    ChainVariant variant = ChainVariant::A;
    double gamma = 0.99;
    double success_prob = 0.9;
};

/// Two-action chain: action 0 moves left, action 1 moves right. The
/// intended move succeeds with `success_prob`, otherwise the agent moves
/// the other way; moves off either end leave the state unchanged.
/// Rewards (1-indexed states, both actions): +1 on 10..15, and for
/// variant A also +0.1 on 180..190.
TabularMdp build_chain_walk(const ChainWalkSpec& spec);

struct Box {
    std::vector<double> low;
    std::vector<double> high;

    std::size_t dim() const { return low.size(); }
    bool contains(StateView x) const;
    void clip(State& x) const;
};

struct StepResult {
    State next;
    double reward = 0.0;
    bool terminal = false;
};

/// Simulator interface. Environments are stateless; all randomness comes
/// from the caller's stream.
class GenerativeEnv {
public:
    virtual ~GenerativeEnv() = default;

    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t n_actions() const = 0;
    virtual const Box& state_box() const = 0;
    virtual double gamma() const = 0;
    virtual double r_max() const = 0;
    virtual State reset(Rng& rng) const = 0;
    /// Terminal states are absorbing: stepping from one returns it
    /// unchanged with zero reward.
    virtual StepResult step(StateView x, std::size_t a, Rng& rng) const = 0;
    virtual bool is_terminal(StateView) const { return false; }
    /// Set for environments with a finite, index-encoded state space.
    virtual std::optional<std::size_t> n_discrete_states() const { return std::nullopt; }

    double q_max() const { return r_max() / (1.0 - gamma()); }
};

/// Mountain car. Actions: 0 reverse, 1 coast, 2 forward. Reward -1 per
/// step, episode ends once position reaches 0.5.
class MountainCar final : public GenerativeEnv {
public:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.5;
    static constexpr double kMaxSpeed = 0.07;
    static constexpr double kForce = 0.001;
    static constexpr double kGravity = 0.0025;
    static constexpr double kGoal = 0.5;

    explicit MountainCar(double gamma = 0.98);

    std::string id() const override { return "mountain_car"; }
    std::size_t dim() const override { return 2; }
    std::size_t n_actions() const override { return 3; }
    const Box& state_box() const override { return box_; }
    double gamma() const override { return gamma_; }
    double r_max() const override { return 1.0; }
    State reset(Rng& rng) const override;
    StepResult step(StateView x, std::size_t a, Rng& rng) const override;
    bool is_terminal(StateView x) const override { return x[0] >= kGoal; }

private:
    double gamma_;
    Box box_;
};

/// Cart-pole with Euler integration. State (x, x_dot, theta, theta_dot);
/// actions: 0 push left, 1 push right. Reward +1 for every step that does
/// not end in failure.
class CartPole final : public GenerativeEnv {
public:
    static constexpr double kGravity = 9.8;
    static constexpr double kCartMass = 1.0;
    static constexpr double kPoleMass = 0.1;
    static constexpr double kHalfLength = 0.5;
    static constexpr double kForce = 10.0;
    static constexpr double kTau = 0.02;
    static constexpr double kThetaLimit = 12.0 * 3.14159265358979323846 / 180.0;
    static constexpr double kXLimit = 2.4;
    static constexpr double kMaxCartSpeed = 4.0;
    static constexpr double kMaxPoleSpeed = 5.0;

    explicit CartPole(double gamma = 0.98);

    std::string id() const override { return "cart_pole"; }
    std::size_t dim() const override { return 4; }
    std::size_t n_actions() const override { return 2; }
    const Box& state_box() const override { return box_; }
    double gamma() const override { return gamma_; }
    double r_max() const override { return 1.0; }
    State reset(Rng& rng) const override;
    StepResult step(StateView x, std::size_t a, Rng& rng) const override;
    bool is_terminal(StateView x) const override;

private:
    double gamma_;
    Box box_;
};

/// A TabularMdp exposed through the simulator interface.
class TabularEnv final : public GenerativeEnv {
public:
    explicit TabularEnv(TabularMdp mdp, std::string id = "tabular");

    std::string id() const override { return id_; }
    std::size_t dim() const override { return 1; }
    std::size_t n_actions() const override { return mdp_.n_actions(); }
    const Box& state_box() const override { return box_; }
    double gamma() const override { return mdp_.gamma(); }
    double r_max() const override { return mdp_.r_max(); }
    State reset(Rng& rng) const override;
    StepResult step(StateView x, std::size_t a, Rng& rng) const override;
    std::optional<std::size_t> n_discrete_states() const override { return mdp_.n_states(); }

    const TabularMdp& mdp() const { return mdp_; }

private:
    TabularMdp mdp_;
    std::string id_;
    Box box_;
};

/// Environment selection by id: chain_a, chain_b, mountain_car, cart_pole.
struct EnvSpec {
    std::string id = "chain_a";
    std::size_t n_states = 200;
    double success_prob = 0.9;
};

bool is_tabular_env(const std::string& id);
std::unique_ptr<GenerativeEnv> make_env(const EnvSpec& spec);
/// Chain MDP for a tabular id; throws for continuous ids.
TabularMdp make_tabular_mdp(const EnvSpec& spec);

enum class NuScheme { all_states, uniform_states, uniform_box, random_policy_visits };

std::string to_string(NuScheme scheme);
NuScheme parse_nu_scheme(const std::string& text);

/// n states drawn from nu. `all_states` enumerates every tabular state
/// once (n is ignored) and gives the exact uniform empirical measure.
std::vector<State> sample_nu(const GenerativeEnv& env, NuScheme scheme, std::size_t n, Rng& rng);
std::vector<State> sample_nu(const TabularMdp& mdp, NuScheme scheme, std::size_t n, Rng& rng);

struct TrajectoryStep {
    State state;
    std::size_t action;
    double reward;
};

struct EpisodeResult {
    std::size_t steps = 0;
    double discounted_return = 0.0;
    bool terminated = false;
    std::vector<TrajectoryStep> trajectory;  // filled when requested
};

struct EpisodeOptions {
    std::optional<State> start;  // defaults to env.reset(rng)
    bool store_trajectory = false;
};

/// Rolls `policy` for at most max_steps steps; truncated episodes report
/// max_steps.
EpisodeResult evaluate_episode(const GenerativeEnv& env, const Policy& policy, std::size_t max_steps,
                               double gamma, Rng& rng, const EpisodeOptions& options = {});

struct Transition {
    State x;
    std::size_t a = 0;
    double r = 0.0;
    State next;
    bool done = false;
};

enum class CollectScheme {
    /// x from sample_nu(uniform_box or uniform_states), a uniform.
    iid_uniform,
    /// consecutive steps of a uniformly random policy from reset.
    random_policy_trajectories,
};

std::string to_string(CollectScheme scheme);
CollectScheme parse_collect_scheme(const std::string& text);

/// `max_trajectory_length` caps a random-policy trajectory before a reset.
std::vector<Transition> collect_transitions(const GenerativeEnv& env, std::size_t n, CollectScheme scheme,
                                            Rng& rng, std::size_t max_trajectory_length = 100);

/// Header `transitions <dim>`, then one `x... a r x'... done` line each.
void write_transitions(std::ostream& out, const std::vector<Transition>& data);
std::vector<Transition> read_transitions(std::istream& in);

}  // namespace capi
