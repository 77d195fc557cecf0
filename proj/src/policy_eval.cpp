#include "capi/policy_eval.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "capi/parallel.hpp"

namespace capi {

std::string to_string(EvaluatorKind kind) {
    switch (kind) {
        case EvaluatorKind::exact_one_step: return "exact_one_step";
        case EvaluatorKind::exact_solve: return "exact_solve";
        case EvaluatorKind::rollout: return "rollout";
        case EvaluatorKind::fqe_trees: return "fqe_trees";
        case EvaluatorKind::fqe_kernel: return "fqe_kernel";
    }
    return "unknown";
}

EvaluatorKind parse_evaluator_kind(const std::string& text) {
    for (auto k : {EvaluatorKind::exact_one_step, EvaluatorKind::exact_solve, EvaluatorKind::rollout,
                   EvaluatorKind::fqe_trees, EvaluatorKind::fqe_kernel})
        if (to_string(k) == text) return k;
    throw ContractViolation("unknown evaluator kind '" + text + "'");
}

void EvaluatorConfig::validate() const {
    require(rollout.horizon >= 1, "rollout horizon must be at least 1");
    require(rollout.trajectories >= 1, "rollout trajectories must be at least 1");
    require(trees.n_trees >= 1, "n_trees must be at least 1");
    require(trees.min_split >= 2, "eta_v must be at least 2");
    require(kernel.bandwidth > 0.0, "kernel bandwidth must be positive");
    require(kernel.dictionary_cap >= 1, "dictionary cap must be positive");
    require(fqe_tol > 0.0 && solve_tol > 0.0, "tolerances must be positive");
}

std::size_t EvaluatorConfig::iterations_for(double gamma, double r_max) const {
    return fqe_iterations > 0 ? fqe_iterations : default_fqe_iterations(fqe_tol, gamma, r_max);
}

std::size_t default_fqe_iterations(double tol, double gamma, double r_max) {
    require(tol > 0.0, "tolerance must be positive");
    if (gamma <= 0.0 || r_max <= 0.0) return 1;
    double ratio = tol * (1.0 - gamma) / r_max;
    if (ratio >= 1.0) return 1;
    double k = std::ceil(std::log(ratio) / std::log(gamma));
    return static_cast<std::size_t>(std::clamp(k, 1.0, 100.0));
}

TabularQ eval_one_step(const TabularMdp& mdp, const Policy& policy, const TabularQ& prev_q) {
    return bellman_backup(mdp, prev_q, &policy);
}

TabularQ eval_exact(const TabularMdp& mdp, const Policy& policy, double tol) {
    return solve_q_policy(mdp, policy, tol);
}

double rollout_return(const GenerativeEnv& env, const Policy& policy, StateView x, std::size_t a,
                      std::size_t horizon, Rng& rng) {
    require(horizon >= 1, "rollout horizon must be at least 1");
    const double gamma = env.gamma();
    auto step = env.step(x, a, rng);
    double total = step.reward;
    double discount = gamma;
    for (std::size_t t = 1; t < horizon && !step.terminal; ++t) {
        State current = std::move(step.next);
        step = env.step(current, policy.act(current), rng);
        total += discount * step.reward;
        discount *= gamma;
    }
    return total;
}

std::vector<RolloutQuery> all_action_queries(const std::vector<State>& states, std::size_t n_actions) {
    std::vector<RolloutQuery> out;
    out.reserve(states.size() * n_actions);
    for (const auto& s : states)
        for (std::size_t a = 0; a < n_actions; ++a) out.emplace_back(s, a);
    return out;
}

const RolloutQ::Estimate& RolloutQ::estimate(StateView x, std::size_t a) const {
    auto it = table_.find({State(x.begin(), x.end()), a});
    if (it == table_.end()) throw ContractViolation("rollout estimate requested for an unseen (state, action)");
    return it->second;
}

double RolloutQ::value(StateView x, std::size_t a) const {
    return std::clamp(estimate(x, a).mean, -q_max_, q_max_);
}

void RolloutQ::insert(const State& x, std::size_t a, Estimate e) {
    require(a < n_actions_, "action out of range");
    table_[{x, a}] = e;
}

std::shared_ptr<const RolloutQ> eval_rollout(const GenerativeEnv& env, const Policy& policy,
                                             const std::vector<RolloutQuery>& queries,
                                             const EvaluatorConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::uint64_t master = rng();
    const std::size_t m = cfg.rollout.trajectories;
    std::vector<RolloutQ::Estimate> estimates(queries.size());
    parallel_for(queries.size(), cfg.threads, [&](std::size_t i) {
        Rng query_rng = make_rng(master, i);
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t t = 0; t < m; ++t) {
            double g = rollout_return(env, policy, queries[i].first, queries[i].second, cfg.rollout.horizon,
                                      query_rng);
            sum += g;
            sum_sq += g * g;
        }
        double mean = sum / static_cast<double>(m);
        double se = 0.0;
        if (m > 1) {
            double var = std::max(0.0, (sum_sq - static_cast<double>(m) * mean * mean) / static_cast<double>(m - 1));
            se = std::sqrt(var / static_cast<double>(m));
        }
        estimates[i] = {mean, se, m};
    });
    auto out = std::make_shared<RolloutQ>(env.n_actions(), env.q_max());
    for (std::size_t i = 0; i < queries.size(); ++i) out->insert(queries[i].first, queries[i].second, estimates[i]);
    return out;
}

EnsembleQ::EnsembleQ(std::vector<RegressionTreeEnsemble> per_action, double q_max)
    : per_action_(std::move(per_action)), q_max_(q_max) {
    require(!per_action_.empty(), "need one ensemble per action");
}

double EnsembleQ::value(StateView x, std::size_t a) const {
    require(a < per_action_.size(), "action out of range");
    return std::clamp(per_action_[a].predict(x), -q_max_, q_max_);
}

KernelQ::KernelQ(std::vector<KernelDictionary> per_action, std::vector<double> input_scale, double q_max)
    : per_action_(std::move(per_action)), input_scale_(std::move(input_scale)), q_max_(q_max) {
    require(!per_action_.empty(), "need one dictionary per action");
}

double KernelQ::value(StateView x, std::size_t a) const {
    require(a < per_action_.size(), "action out of range");
    require(x.size() == input_scale_.size(), "query has wrong dimension");
    State scaled(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) scaled[d] = x[d] * input_scale_[d];
    return std::clamp(per_action_[a].predict(scaled), -q_max_, q_max_);
}

std::vector<double> unit_box_scale(const Box& box) {
    std::vector<double> scale(box.dim());
    for (std::size_t d = 0; d < scale.size(); ++d) {
        double width = box.high[d] - box.low[d];
        scale[d] = width > 0.0 ? 1.0 / width : 1.0;
    }
    return scale;
}

namespace {

// Samples grouped by their action.
struct ActionGroups {
    std::vector<std::vector<std::size_t>> members;

    ActionGroups(const std::vector<Transition>& data, std::size_t n_actions) : members(n_actions) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            require(data[i].a < n_actions, "transition action out of range");
            members[data[i].a].push_back(i);
        }
    }
};

// Stand-in for an action that has no samples: a single leaf predicting 0.
RegressionTreeEnsemble zero_ensemble(std::size_t dim) {
    RegressionData data;
    data.add(State(dim, 0.0), 0.0);
    TreeConfig cfg;
    cfg.n_trees = 1;
    Rng rng(0);
    return fit_tree_regressor(data, cfg, rng);
}

class TreeFitter {
public:
    TreeFitter(const GenerativeEnv& env, const std::vector<Transition>& data, const EvaluatorConfig& cfg,
               std::uint64_t master)
        : env_(env), data_(data), cfg_(cfg), master_(master), groups_(data, env.n_actions()) {
        require(!data.empty(), "empty transition dataset");
    }

    std::shared_ptr<const EnsembleQ> fit(std::size_t iteration, const std::vector<double>& targets) const {
        std::vector<RegressionTreeEnsemble> per_action;
        TreeConfig tree_cfg = cfg_.trees;
        tree_cfg.threads = cfg_.threads;
        for (std::size_t a = 0; a < env_.n_actions(); ++a) {
            const auto& members = groups_.members[a];
            if (members.empty()) {
                per_action.push_back(zero_ensemble(data_.front().x.size()));
                continue;
            }
            RegressionData reg;
            for (auto i : members) reg.add(data_[i].x, targets[i]);
            Rng rng = make_rng(master_, iteration * env_.n_actions() + a);
            per_action.push_back(fit_tree_regressor(reg, tree_cfg, rng));
        }
        return std::make_shared<EnsembleQ>(std::move(per_action), env_.q_max());
    }

private:
    const GenerativeEnv& env_;
    const std::vector<Transition>& data_;
    const EvaluatorConfig& cfg_;
    std::uint64_t master_;
    ActionGroups groups_;
};

// Kernel ridge per action plus the next-state kernel rows needed to form
// the regression targets.
class KernelFitter {
public:
    KernelFitter(const GenerativeEnv& env, const std::vector<Transition>& data, const EvaluatorConfig& cfg,
                 std::vector<double> scale, Rng& rng)
        : env_(env), data_(data), scale_(std::move(scale)), groups_(data, env.n_actions()) {
        require(!data.empty(), "empty transition dataset");
        require(cfg.kernel.bandwidth > 0.0, "kernel bandwidth must be positive");
        dim_ = data.front().x.size();
        if (scale_.empty()) scale_ = unit_box_scale(env.state_box());
        require(scale_.size() == dim_, "input scale has wrong dimension");
        for (std::size_t a = 0; a < env.n_actions(); ++a) {
            const auto& members = groups_.members[a];
            if (members.empty()) {
                solvers_.emplace_back();
                continue;
            }
            std::vector<double> inputs;
            inputs.reserve(members.size() * dim_);
            for (auto i : members) append_scaled(inputs, data[i].x);
            Rng action_rng = make_rng(rng(), a);
            solvers_.emplace_back(KernelRidge(std::move(inputs), dim_, cfg.kernel, action_rng));
        }
    }

    void append_scaled(std::vector<double>& out, StateView x) const {
        for (std::size_t d = 0; d < dim_; ++d) out.push_back(x[d] * scale_[d]);
    }

    // Kernel rows of the given next states against action a's dictionary.
    Eigen::MatrixXd next_rows(const std::vector<std::size_t>& samples, std::size_t a) const {
        std::vector<double> pts;
        pts.reserve(samples.size() * dim_);
        for (auto i : samples) append_scaled(pts, data_[i].next);
        return gaussian_kernel_matrix(pts, solvers_[a]->centers(), dim_, solvers_[a]->bandwidth());
    }

    bool has(std::size_t a) const { return solvers_[a].has_value(); }

    std::vector<Eigen::VectorXd> solve(const std::vector<double>& targets) const {
        std::vector<Eigen::VectorXd> weights(solvers_.size());
        for (std::size_t a = 0; a < solvers_.size(); ++a) {
            if (!solvers_[a]) continue;
            std::vector<double> y;
            y.reserve(groups_.members[a].size());
            for (auto i : groups_.members[a]) y.push_back(targets[i]);
            weights[a] = solvers_[a]->solve(y);
        }
        return weights;
    }

    std::shared_ptr<const KernelQ> make_q(const std::vector<Eigen::VectorXd>& weights, double bandwidth) const {
        std::vector<KernelDictionary> dicts;
        for (std::size_t a = 0; a < solvers_.size(); ++a) {
            if (solvers_[a])
                dicts.emplace_back(solvers_[a]->centers(), dim_, weights[a], bandwidth);
            else
                dicts.emplace_back(std::vector<double>(dim_, 0.0), dim_, Eigen::VectorXd::Zero(1), bandwidth);
        }
        return std::make_shared<KernelQ>(std::move(dicts), scale_, env_.q_max());
    }

private:
    const GenerativeEnv& env_;
    const std::vector<Transition>& data_;
    std::vector<double> scale_;
    std::size_t dim_ = 0;
    ActionGroups groups_;
    std::vector<std::optional<KernelRidge>> solvers_;
};

std::vector<double> rewards_of(const std::vector<Transition>& data) {
    std::vector<double> r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) r[i] = data[i].r;
    return r;
}

}  // namespace

std::shared_ptr<const EnsembleQ> eval_fqe_trees(const GenerativeEnv& env, const Policy& policy,
                                                const std::vector<Transition>& dataset,
                                                const EvaluatorConfig& cfg, Rng& rng) {
    cfg.validate();
    require(!dataset.empty(), "empty transition dataset");
    const double gamma = env.gamma();
    const std::size_t iterations = cfg.iterations_for(gamma, env.r_max());
    std::vector<std::size_t> next_action(dataset.size(), 0);
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (!dataset[i].done) next_action[i] = policy.act(dataset[i].next);

    TreeFitter fitter(env, dataset, cfg, rng());
    auto q = fitter.fit(0, rewards_of(dataset));
    for (std::size_t j = 1; j < iterations; ++j) {
        std::vector<double> targets(dataset.size());
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const auto& t = dataset[i];
            targets[i] = t.r + (t.done ? 0.0 : gamma * q->value(t.next, next_action[i]));
        }
        q = fitter.fit(j, targets);
    }
    return q;
}

std::shared_ptr<const KernelQ> eval_fqe_kernel(const GenerativeEnv& env, const Policy& policy,
                                               const std::vector<Transition>& dataset,
                                               const EvaluatorConfig& cfg, Rng& rng,
                                               std::vector<double> input_scale) {
    cfg.validate();
    require(!dataset.empty(), "empty transition dataset");
    const double gamma = env.gamma();
    const double q_max = env.q_max();
    const std::size_t iterations = cfg.iterations_for(gamma, env.r_max());
    KernelFitter fitter(env, dataset, cfg, std::move(input_scale), rng);

    // next states grouped by the action the policy takes there
    std::vector<std::vector<std::size_t>> by_action(env.n_actions());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (!dataset[i].done) by_action[policy.act(dataset[i].next)].push_back(i);
    std::vector<Eigen::MatrixXd> rows(env.n_actions());
    for (std::size_t a = 0; a < env.n_actions(); ++a)
        if (fitter.has(a) && !by_action[a].empty()) rows[a] = fitter.next_rows(by_action[a], a);

    std::vector<double> targets = rewards_of(dataset);
    auto weights = fitter.solve(targets);
    for (std::size_t j = 1; j < iterations; ++j) {
        targets = rewards_of(dataset);
        for (std::size_t a = 0; a < env.n_actions(); ++a) {
            if (!fitter.has(a) || by_action[a].empty()) continue;
            Eigen::VectorXd next = rows[a] * weights[a];
            for (std::size_t k = 0; k < by_action[a].size(); ++k)
                targets[by_action[a][k]] += gamma * std::clamp(next[static_cast<Eigen::Index>(k)], -q_max, q_max);
        }
        weights = fitter.solve(targets);
    }
    return fitter.make_q(weights, cfg.kernel.bandwidth);
}

std::shared_ptr<const ActionValueFn> run_fqi_optimal(const GenerativeEnv& env,
                                                     const std::vector<Transition>& dataset,
                                                     const EvaluatorConfig& cfg, Rng& rng,
                                                     std::size_t iterations, const FqiObserver& observer) {
    cfg.validate();
    require(iterations >= 1, "FQI needs at least one iteration");
    require(!dataset.empty(), "empty transition dataset");
    require(cfg.kind == EvaluatorKind::fqe_trees || cfg.kind == EvaluatorKind::fqe_kernel,
            "FQI needs a tree or kernel regressor");
    const double gamma = env.gamma();
    const double q_max = env.q_max();
    const std::size_t n_actions = env.n_actions();

    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (!dataset[i].done) live.push_back(i);

    if (cfg.kind == EvaluatorKind::fqe_trees) {
        TreeFitter fitter(env, dataset, cfg, rng());
        std::shared_ptr<const ActionValueFn> q = fitter.fit(0, rewards_of(dataset));
        if (observer) observer(1, *q);
        for (std::size_t j = 1; j < iterations; ++j) {
            std::vector<double> targets = rewards_of(dataset);
            for (auto i : live) {
                auto row = q->row(dataset[i].next);
                targets[i] += gamma * *std::max_element(row.begin(), row.end());
            }
            q = fitter.fit(j, targets);
            if (observer) observer(j + 1, *q);
        }
        return q;
    }

    KernelFitter fitter(env, dataset, cfg, {}, rng);
    std::vector<Eigen::MatrixXd> rows(n_actions);
    for (std::size_t a = 0; a < n_actions; ++a)
        if (fitter.has(a) && !live.empty()) rows[a] = fitter.next_rows(live, a);
    auto weights = fitter.solve(rewards_of(dataset));
    if (observer) observer(1, *fitter.make_q(weights, cfg.kernel.bandwidth));
    for (std::size_t j = 1; j < iterations; ++j) {
        std::vector<double> best(live.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t a = 0; a < n_actions; ++a) {
            if (!fitter.has(a) || live.empty()) {
                for (auto& b : best) b = std::max(b, 0.0);
                continue;
            }
            Eigen::VectorXd next = rows[a] * weights[a];
            for (std::size_t k = 0; k < live.size(); ++k)
                best[k] = std::max(best[k], std::clamp(next[static_cast<Eigen::Index>(k)], -q_max, q_max));
        }
        std::vector<double> targets = rewards_of(dataset);
        for (std::size_t k = 0; k < live.size(); ++k) targets[live[k]] += gamma * best[k];
        weights = fitter.solve(targets);
        if (observer) observer(j + 1, *fitter.make_q(weights, cfg.kernel.bandwidth));
    }
    return fitter.make_q(weights, cfg.kernel.bandwidth);
}

}  // namespace capi
