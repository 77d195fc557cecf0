#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "capi/config.hpp"
#include "capi/environments.hpp"
#include "capi/experiment.hpp"
#include "capi/mdp.hpp"
#include "capi/policy_eval.hpp"
#include "capi/report.hpp"
#include "capi/theory.hpp"

namespace fs = std::filesystem;
using namespace capi;

namespace {

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    bool svg = false;
    bool timing = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--seed", f.seed, "Base seed (run r uses seed + r)");
    cmd->add_option("--runs", f.runs, "Number of seeded runs");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--threads", f.threads, "Worker threads (CAPI_LAB_THREADS overrides)");
    cmd->add_flag("--svg", f.svg, "Also render SVG charts");
    cmd->add_flag("--timing", f.timing, "Fill the wall_ms column");
}

RunOptions options_from(const CommonFlags& f) {
    RunOptions o;
    o.seed = f.seed;
    o.runs = f.runs;
    o.output_dir = f.out;
    o.threads = f.threads;
    o.svg = f.svg;
    o.timing = f.timing;
    o.log = &std::cerr;
    if (const char* env = std::getenv("CAPI_LAB_THREADS")) {
        try {
            o.threads = static_cast<std::size_t>(std::stoul(env));
        } catch (const std::exception&) {
            throw std::runtime_error(std::string("CAPI_LAB_THREADS is not an integer: ") + env);
        }
    }
    return o;
}

int execute(ExperimentSpec spec, const CommonFlags& flags) {
    auto out = run_experiment(std::move(spec), options_from(flags));
    std::cout << "records: " << out.records_path << "\nsummary: " << out.summary_path << "\n";
    for (const auto& p : out.svg_paths) std::cout << "chart:   " << p << "\n";
    return 0;
}

class ConstantPolicy final : public Policy {
public:
    explicit ConstantPolicy(std::size_t n_actions) : n_actions_(n_actions) {}
    std::size_t act(StateView) const override { return 0; }
    std::size_t n_actions() const override { return n_actions_; }

private:
    std::size_t n_actions_;
};

// Two-action gap, or best minus second best.
double state_gap(std::span<const double> row) {
    if (row.size() == 2) return action_gap(row);
    std::vector<double> v(row.begin(), row.end());
    std::sort(v.begin(), v.end(), std::greater<>());
    return v.size() > 1 ? v[0] - v[1] : 0.0;
}

int analyze_gap(const std::string& target, const std::optional<std::string>& policy_path, std::size_t samples,
                std::uint64_t seed, const std::optional<std::string>& csv_path) {
    std::vector<double> gaps;
    double q_max = 0.0;
    std::optional<PolicyRepr> policy;
    if (policy_path) {
        std::ifstream in(*policy_path);
        if (!in) throw std::runtime_error("cannot open policy file '" + *policy_path + "'");
        policy = read_policy(in);
    }
    std::optional<TabularMdp> mdp;
    if (fs::exists(target)) {
        std::ifstream in(target);
        mdp = read_mdp(in);
    } else if (is_tabular_env(target)) {
        mdp = make_tabular_mdp(EnvSpec{target});
    }
    if (mdp) {
        TabularQ q = policy ? solve_q_policy(*mdp, *policy) : solve_optimal(*mdp).q;
        for (std::size_t x = 0; x < mdp->n_states(); ++x) gaps.push_back(state_gap(q.row(x)));
        q_max = mdp->q_max();
    } else {
        auto env = make_env(EnvSpec{target});
        Rng rng(seed);
        auto nu = target == "cart_pole" ? NuScheme::random_policy_visits : NuScheme::uniform_box;
        auto states = sample_nu(*env, nu, samples, rng);
        ConstantPolicy fallback(env->n_actions());
        const Policy& pi = policy ? static_cast<const Policy&>(*policy) : fallback;
        EvaluatorConfig cfg;
        cfg.kind = EvaluatorKind::rollout;
        cfg.rollout.trajectories = 10;
        auto q = eval_rollout(*env, pi, all_action_queries(states, env->n_actions()), cfg, rng);
        for (const auto& x : states) gaps.push_back(state_gap(q->row(x)));
        q_max = env->q_max();
    }
    auto fit = estimate_gap_exponent(gaps, default_eps_grid(q_max));
    std::cout << "states:     " << gaps.size() << "\n"
              << "zeta_hat:   " << format_double(fit.zeta_hat) << "\n"
              << "cg_hat:     " << format_double(fit.cg_hat) << "\n"
              << "residual:   " << format_double(fit.fit_residual) << "\n"
              << "points:     " << fit.points_used << "\n"
              << "status:     "
              << (fit.status == GapFitStatus::fitted     ? "fitted"
                  : fit.status == GapFitStatus::all_zero ? "degenerate (all gaps zero)"
                                                         : "degenerate (no mass on grid)")
              << "\n";
    if (csv_path) {
        std::ofstream out(*csv_path);
        out << "eps,probability\n";
        for (std::size_t i = 0; i < fit.eps_grid.size(); ++i)
            out << format_double(fit.eps_grid[i]) << ',' << format_double(fit.empirical_probs[i]) << '\n';
    }
    return 0;
}

int bound_check(const std::string& dir, std::size_t threads) {
    const fs::path root(dir);
    std::ifstream mdp_in(root / "mdp.txt");
    if (!mdp_in) throw std::runtime_error("no mdp.txt in '" + dir + "'");
    TabularMdp mdp = read_mdp(mdp_in);
    std::vector<ActionTable> policies;
    for (std::size_t k = 0;; ++k) {
        std::ifstream in(root / ("pi_" + std::to_string(k) + ".txt"));
        if (!in) break;
        policies.push_back(tabulate(read_policy(in), mdp.n_states()));
    }
    if (policies.size() < 2) throw std::runtime_error("need pi_0.txt and pi_1.txt in '" + dir + "'");
    std::string space_kind;
    if (std::ifstream in(root / "space.txt"); in) in >> space_kind;
    std::vector<ActionTable> space;
    if (space_kind == "threshold" && mdp.n_actions() == 2) space = threshold_space(mdp.n_states());

    auto uniform = uniform_distribution(mdp.n_states());
    auto rep = propagation_bound_check(mdp, policies, uniform, uniform, space, default_s_grid(), 0,
                                       kDefaultSolveTol, threads);
    std::ofstream csv(root / "bound_check.csv");
    csv << "K,s,concentrability,weighted_error,rhs,truncation_tail\n";
    for (std::size_t j = 0; j < rep.s_grid.size(); ++j)
        csv << rep.K << ',' << format_double(rep.s_grid[j]) << ',' << format_double(rep.concentrability[j]) << ','
            << format_double(rep.weighted_error[j]) << ',' << format_double(rep.rhs[j]) << ','
            << format_double(rep.truncation_tail[j]) << '\n';
    std::cout << "K:             " << rep.K << "\n"
              << "Loss(pi_K):    " << format_double(rep.loss) << "\n";
    for (std::size_t k = 0; k < rep.step_loss.size(); ++k)
        std::cout << "L(pi_" << k << " -> pi_" << k + 1 << "): " << format_double(rep.step_loss[k]) << "\n";
    std::cout << "best s:        " << format_double(rep.s_grid[rep.best_s]) << "\n"
              << "bound:         " << format_double(rep.rhs[rep.best_s]) << "\n"
              << "slack:         " << format_double(rep.slack) << "\n"
              << "result:        " << (rep.holds ? "holds" : "VIOLATED") << "\n";
    return rep.holds ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"capi_lab: classification-based approximate policy iteration experiments"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    std::string config_path;
    auto* run = app.add_subcommand("run", "Run an experiment config");
    run->add_option("config", config_path, "Config file")->required();
    add_common(run, run_flags);

    CommonFlags repro_flags;
    std::string target;
    auto* repro = app.add_subcommand("reproduce", "Reproduce a figure at desk scale");
    repro->add_option("target", target, "Figure target")->required()->check(CLI::IsMember(reproduce_targets()));
    add_common(repro, repro_flags);

    std::string gap_target;
    std::optional<std::string> gap_policy, gap_csv;
    std::size_t gap_samples = 1000;
    std::uint64_t gap_seed = 1;
    auto* gap = app.add_subcommand("analyze-gap", "Estimate the action-gap exponent");
    gap->add_option("target", gap_target, "MDP file or environment id")->required();
    gap->add_option("--policy", gap_policy, "Policy file (default: optimal or action 0)");
    gap->add_option("--samples", gap_samples, "States sampled on continuous environments");
    gap->add_option("--seed", gap_seed, "Seed");
    gap->add_option("--csv", gap_csv, "Write the empirical probabilities here");

    std::string run_dir;
    std::size_t bound_threads = 1;
    auto* bound = app.add_subcommand("bound-check", "Check the error-propagation inequality on a run directory");
    bound->add_option("run_dir", run_dir, "Directory with mdp.txt and pi_k.txt")->required();
    bound->add_option("--threads", bound_threads, "Worker threads");

    auto* defaults = app.add_subcommand("print-defaults", "Print every config key with its default");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return execute(parse_config_file(config_path), run_flags);
        if (*repro) {
            std::cerr << reproduce_banner(target);
            std::istringstream text(reproduce_config(target));
            return execute(parse_config(text), repro_flags);
        }
        if (*gap) return analyze_gap(gap_target, gap_policy, gap_samples, gap_seed, gap_csv);
        if (*bound) {
            if (const char* env = std::getenv("CAPI_LAB_THREADS")) bound_threads = std::stoul(env);
            return bound_check(run_dir, bound_threads);
        }
        if (*defaults) {
            std::cout << default_config_text();
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
