#include "capi/engine.hpp"

#include <chrono>
#include <cmath>

#include "capi/parallel.hpp"

namespace capi {

void CapiConfig::validate() const {
    require(K >= 1, "K must be at least 1");
    require(n >= 1, "n must be at least 1");
    for (auto v : n_schedule) require(v >= 1, "n schedule entries must be positive");
    evaluator.validate();
    if (eval_episodes > 0) require(eval_max_steps >= 1, "eval_max_steps must be at least 1");
}

std::size_t CapiConfig::n_at(std::size_t k) const {
    return k >= 1 && k <= n_schedule.size() ? n_schedule[k - 1] : n;
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::vi: return "vi";
        case BaselineKind::pi: return "pi";
        case BaselineKind::fqi: return "fqi";
        case BaselineKind::dpi: return "dpi";
        case BaselineKind::zero_one_star: return "zero_one_star";
    }
    return "unknown";
}

BaselineKind parse_baseline(const std::string& text) {
    for (auto k : {BaselineKind::vi, BaselineKind::pi, BaselineKind::fqi, BaselineKind::dpi, BaselineKind::zero_one_star})
        if (to_string(k) == text) return k;
    throw ContractViolation("unknown baseline '" + text + "'");
}

McResult mc_return(const GenerativeEnv& env, const Policy& policy, std::size_t n_episodes, std::size_t max_steps,
                   double gamma, Rng& rng, std::size_t threads) {
    require(n_episodes >= 1, "need at least one episode");
    const std::uint64_t master = rng();
    McResult out;
    out.episodes.resize(n_episodes);
    parallel_for(n_episodes, threads, [&](std::size_t i) {
        Rng episode_rng = make_rng(master, i);
        out.episodes[i] = evaluate_episode(env, policy, max_steps, gamma, episode_rng);
    });
    const double n = static_cast<double>(n_episodes);
    double s1 = 0.0, s2 = 0.0, r1 = 0.0, r2 = 0.0;
    std::size_t capped = 0;
    for (const auto& e : out.episodes) {
        const double steps = static_cast<double>(e.steps);
        s1 += steps;
        s2 += steps * steps;
        r1 += e.discounted_return;
        r2 += e.discounted_return * e.discounted_return;
        if (e.steps == max_steps && !e.terminated) ++capped;
    }
    out.mean_steps = s1 / n;
    out.mean_return = r1 / n;
    out.cap_rate = static_cast<double>(capped) / n;
    if (n_episodes > 1) {
        auto se = [n](double sum_sq, double mean) {
            return std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) / n);
        };
        out.se_steps = se(s2, out.mean_steps);
        out.se_return = se(r2, out.mean_return);
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Stream index for the Monte-Carlo scoring of iterate k, disjoint from the
// per-iteration streams 1..K.
constexpr std::uint64_t kScoreStream = 0x5c07e00000000000ULL;

class RunContext {
public:
    explicit RunContext(const CapiConfig& cfg) : cfg_(cfg), env_(make_env(cfg.env)) {
        cfg.validate();
        tabular_ = dynamic_cast<const TabularEnv*>(env_.get());
        if (tabular_) {
            oracle_.emplace(tabular_->mdp(), uniform_distribution(tabular_->mdp().n_states()),
                            cfg.evaluator.solve_tol);
            n_states_ = tabular_->mdp().n_states();
        } else {
            scale_ = unit_box_scale(env_->state_box());
        }
    }

    const GenerativeEnv& env() const { return *env_; }
    const TabularMdp* mdp() const { return tabular_ ? &tabular_->mdp() : nullptr; }
    std::size_t n_states() const { return n_states_; }
    const std::vector<double>& scale() const { return scale_; }

    void score(const Policy& policy, std::size_t k, IterationRecord& rec, bool monte_carlo = true) const {
        if (oracle_) rec.performance_loss = oracle_->loss(policy);
        if (monte_carlo && cfg_.eval_episodes > 0) {
            Rng rng = make_rng(cfg_.seed, kScoreStream + k);
            auto mc = mc_return(*env_, policy, cfg_.eval_episodes, cfg_.eval_max_steps, env_->gamma(), rng,
                                cfg_.threads);
            rec.mc_steps = mc.mean_steps;
            rec.mc_return = mc.mean_return;
            rec.mc_cap_rate = mc.cap_rate;
        }
    }

private:
    const CapiConfig& cfg_;
    std::unique_ptr<GenerativeEnv> env_;
    const TabularEnv* tabular_ = nullptr;
    std::optional<LossOracle> oracle_;
    std::size_t n_states_ = 0;
    std::vector<double> scale_;
};

double sup_error_on(const ActionValueFn& qhat, const TabularQ& q, const std::vector<State>& states) {
    double worst = 0.0;
    for (const auto& x : states)
        for (std::size_t a = 0; a < q.n_actions(); ++a)
            worst = std::max(worst, std::abs(qhat.value(x, a) - q.value(x, a)));
    return worst;
}

}  // namespace

RunResult run_capi(const CapiConfig& cfg) {
    RunContext ctx(cfg);
    const auto& env = ctx.env();
    const TabularMdp* mdp = ctx.mdp();
    EvaluatorConfig eval_cfg = cfg.evaluator;
    eval_cfg.threads = std::max(eval_cfg.threads, cfg.threads);
    PolicySpaceConfig space = cfg.space;
    space.trees.threads = std::max(space.trees.threads, cfg.threads);
    const bool tabular_eval =
        eval_cfg.kind == EvaluatorKind::exact_one_step || eval_cfg.kind == EvaluatorKind::exact_solve;
    require(!tabular_eval || mdp, "exact evaluators need a tabular environment");
    const std::size_t n_eval = cfg.n_eval > 0 ? cfg.n_eval : cfg.n;

    RunResult result;
    result.policies.push_back(initial_policy(space, ctx.n_states(), env.n_actions(), env.dim()));
    std::optional<TabularQ> prev_q;
    if (mdp) prev_q.emplace(mdp->n_states(), mdp->n_actions(), mdp->q_max());
    std::vector<State> states;

    for (std::size_t k = 1; k <= cfg.K; ++k) {
        const auto start = Clock::now();
        IterationRecord rec;
        rec.k = k;
        rec.seed_used = derive_seed(cfg.seed, k);
        Rng rng(rec.seed_used);
        if (k == 1 || cfg.resample_each_iter) {
            states = mdp ? sample_nu(*mdp, cfg.nu, cfg.n_at(k), rng) : sample_nu(env, cfg.nu, cfg.n_at(k), rng);
        }
        const PolicyRepr& pi = result.policies.back();

        std::shared_ptr<const ActionValueFn> qhat;
        switch (eval_cfg.kind) {
            case EvaluatorKind::exact_one_step:
                prev_q = eval_one_step(*mdp, pi, *prev_q);
                qhat = std::make_shared<TabularQ>(*prev_q);
                break;
            case EvaluatorKind::exact_solve:
                qhat = std::make_shared<TabularQ>(eval_exact(*mdp, pi, eval_cfg.solve_tol));
                break;
            case EvaluatorKind::rollout:
                qhat = eval_rollout(env, pi, all_action_queries(states, env.n_actions()), eval_cfg, rng);
                break;
            case EvaluatorKind::fqe_trees: {
                auto data = collect_transitions(env, n_eval, cfg.collect, rng);
                qhat = eval_fqe_trees(env, pi, data, eval_cfg, rng);
                break;
            }
            case EvaluatorKind::fqe_kernel: {
                auto data = collect_transitions(env, n_eval, cfg.collect, rng);
                qhat = eval_fqe_kernel(env, pi, data, eval_cfg, rng);
                break;
            }
        }
        if (mdp) rec.sup_eval_error = sup_error_on(*qhat, solve_q_policy(*mdp, pi, eval_cfg.solve_tol), states);

        double empirical = 0.0;
        PolicyRepr next = improve_policy(space, *qhat, states, ctx.n_states(), ctx.scale(), rng, &empirical);
        rec.empirical_loss = empirical;
        ctx.score(next, k, rec);
        rec.wall_ms = elapsed_ms(start);
        result.records.push_back(rec);
        result.policies.push_back(std::move(next));
    }
    result.final_policy = std::make_shared<PolicyRepr>(result.policies.back());
    return result;
}

namespace {

// Greedy policy over a borrowed action-value function.
class BorrowedGreedy final : public Policy {
public:
    explicit BorrowedGreedy(const ActionValueFn& q) : q_(q) {}
    std::size_t act(StateView x) const override { return greedy_action(q_, x); }
    std::size_t n_actions() const override { return q_.n_actions(); }

private:
    const ActionValueFn& q_;
};

RunResult run_exact_baseline(BaselineKind kind, const CapiConfig& cfg) {
    RunContext ctx(cfg);
    const TabularMdp* mdp = ctx.mdp();
    require(mdp != nullptr, to_string(kind) + " needs a tabular environment");
    RunResult result;
    result.policies.push_back(constant_tabular_policy(mdp->n_states(), mdp->n_actions(), 0));
    if (kind == BaselineKind::vi) {
        TabularQ q(mdp->n_states(), mdp->n_actions(), mdp->q_max());
        for (std::size_t k = 1; k <= cfg.K; ++k) {
            const auto start = Clock::now();
            q = bellman_backup(*mdp, q, nullptr);
            result.policies.push_back(TabularPolicy(tabulate(BorrowedGreedy(q), mdp->n_states()), mdp->n_actions()));
            IterationRecord rec;
            rec.k = k;
            rec.seed_used = cfg.seed;
            ctx.score(result.policies.back(), k, rec);
            rec.wall_ms = elapsed_ms(start);
            result.records.push_back(rec);
        }
    } else {
        const auto start = Clock::now();
        auto seq = exact_policy_iteration(*mdp, result.policies.front(), cfg.K, cfg.evaluator.solve_tol);
        const double per_iter = elapsed_ms(start) / static_cast<double>(seq.size());
        for (std::size_t k = 1; k <= cfg.K; ++k) {
            result.policies.push_back(seq[std::min(k, seq.size()) - 1]);
            IterationRecord rec;
            rec.k = k;
            rec.seed_used = cfg.seed;
            ctx.score(result.policies.back(), k, rec);
            rec.wall_ms = k <= seq.size() ? per_iter : 0.0;
            result.records.push_back(rec);
        }
    }
    result.final_policy = std::make_shared<PolicyRepr>(result.policies.back());
    return result;
}

RunResult run_zero_one_star(const CapiConfig& cfg) {
    RunContext ctx(cfg);
    const TabularMdp* mdp = ctx.mdp();
    require(mdp != nullptr, "zero_one_star needs a tabular environment");
    const TabularQ q_star = solve_optimal(*mdp, cfg.evaluator.solve_tol).q;
    PolicySpaceConfig space = cfg.space;
    space.zero_one = true;
    RunResult result;
    result.policies.push_back(initial_policy(space, mdp->n_states(), mdp->n_actions(), 1));
    std::vector<State> states;
    for (std::size_t k = 1; k <= cfg.K; ++k) {
        const auto start = Clock::now();
        IterationRecord rec;
        rec.k = k;
        rec.seed_used = derive_seed(cfg.seed, k);
        Rng rng(rec.seed_used);
        if (k == 1 || cfg.resample_each_iter) states = sample_nu(*mdp, cfg.nu, cfg.n_at(k), rng);
        rec.sup_eval_error = 0.0;
        double empirical = 0.0;
        PolicyRepr next = improve_policy(space, q_star, states, mdp->n_states(), {}, rng, &empirical);
        rec.empirical_loss = empirical;
        ctx.score(next, k, rec);
        rec.wall_ms = elapsed_ms(start);
        result.records.push_back(rec);
        result.policies.push_back(std::move(next));
    }
    result.final_policy = std::make_shared<PolicyRepr>(result.policies.back());
    return result;
}

RunResult run_fqi_baseline(const CapiConfig& cfg) {
    RunContext ctx(cfg);
    const auto& env = ctx.env();
    const TabularMdp* mdp = ctx.mdp();
    EvaluatorConfig eval_cfg = cfg.evaluator;
    eval_cfg.threads = std::max(eval_cfg.threads, cfg.threads);
    Rng rng(derive_seed(cfg.seed, 1));
    const std::size_t n_eval = cfg.n_eval > 0 ? cfg.n_eval : cfg.n;
    auto data = collect_transitions(env, n_eval, cfg.collect, rng);

    RunResult result;
    if (mdp) result.policies.push_back(constant_tabular_policy(mdp->n_states(), mdp->n_actions(), 0));
    auto start = Clock::now();
    auto observer = [&](std::size_t j, const ActionValueFn& q) {
        IterationRecord rec;
        rec.k = j;
        rec.seed_used = derive_seed(cfg.seed, 1);
        BorrowedGreedy greedy(q);
        if (mdp) {
            result.policies.push_back(TabularPolicy(tabulate(greedy, mdp->n_states()), mdp->n_actions()));
            ctx.score(result.policies.back(), j, rec);
        } else {
            ctx.score(greedy, j, rec, j == cfg.K);
        }
        rec.wall_ms = elapsed_ms(start);
        start = Clock::now();
        result.records.push_back(rec);
    };
    auto q = run_fqi_optimal(env, data, eval_cfg, rng, cfg.K, observer);
    if (mdp)
        result.final_policy = std::make_shared<PolicyRepr>(result.policies.back());
    else
        result.final_policy = std::make_shared<GreedyPolicy>(q);
    return result;
}

}  // namespace

RunResult run_baseline(BaselineKind kind, const CapiConfig& cfg) {
    switch (kind) {
        case BaselineKind::vi:
        case BaselineKind::pi: return run_exact_baseline(kind, cfg);
        case BaselineKind::fqi: return run_fqi_baseline(cfg);
        case BaselineKind::dpi: {
            CapiConfig dpi = cfg;
            dpi.evaluator.kind = EvaluatorKind::rollout;
            return run_capi(dpi);
        }
        case BaselineKind::zero_one_star: return run_zero_one_star(cfg);
    }
    throw ContractViolation("unknown baseline");
}

}  // namespace capi
