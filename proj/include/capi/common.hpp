#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace capi {

/// A point of the state space. Tabular states are encoded as a
/// one-element vector holding the 0-based state index.
using State = std::vector<double>;
using StateView = std::span<const double>;

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

inline State tabular_state(std::size_t index) { return {static_cast<double>(index)}; }

/// Decodes a tabular state, checking it is an integer in [0, n_states).
std::size_t state_index(StateView x, std::size_t n_states);

/// Deterministic Markov stationary policy.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::size_t act(StateView x) const = 0;
    virtual std::size_t n_actions() const = 0;
};

/// Action-value function Q(x, a).
///
/// Implementations are immutable after construction and must return the
/// same value for the same query.
class ActionValueFn {
public:
    virtual ~ActionValueFn() = default;
    virtual std::size_t n_actions() const = 0;
    virtual double value(StateView x, std::size_t a) const = 0;
    /// Declared bound on |value|.
    virtual double q_max() const = 0;

    std::vector<double> row(StateView x) const {
        std::vector<double> out(n_actions());
        for (std::size_t a = 0; a < out.size(); ++a) out[a] = value(x, a);
        return out;
    }
};

}  // namespace capi
