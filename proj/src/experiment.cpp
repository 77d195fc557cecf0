#include "capi/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "capi/parallel.hpp"

namespace capi {

namespace fs = std::filesystem;

RunResult run_algorithm(const AlgorithmSpec& algo) {
    switch (algo.kind) {
        case AlgorithmKind::capi: return run_capi(algo.config);
        case AlgorithmKind::vi: return run_baseline(BaselineKind::vi, algo.config);
        case AlgorithmKind::pi: return run_baseline(BaselineKind::pi, algo.config);
        case AlgorithmKind::fqi: return run_baseline(BaselineKind::fqi, algo.config);
        case AlgorithmKind::dpi: return run_baseline(BaselineKind::dpi, algo.config);
        case AlgorithmKind::zero_one_star: return run_baseline(BaselineKind::zero_one_star, algo.config);
    }
    throw ContractViolation("unknown algorithm kind");
}

namespace {

struct Task {
    std::size_t algo;
    std::size_t grid;
    std::size_t run;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_run_dir(const fs::path& dir, const AlgorithmSpec& algo, const RunResult& result) {
    fs::create_directories(dir);
    if (is_tabular_env(algo.config.env.id) && !result.policies.empty()) {
        std::ostringstream mdp;
        write_mdp(mdp, make_tabular_mdp(algo.config.env));
        write_file(dir / "mdp.txt", mdp.str());
        for (std::size_t k = 0; k < result.policies.size(); ++k)
            write_file(dir / ("pi_" + std::to_string(k) + ".txt"), policy_to_string(result.policies[k]));
        std::string space = algo.kind == AlgorithmKind::capi || algo.kind == AlgorithmKind::dpi ||
                                    algo.kind == AlgorithmKind::zero_one_star
                                ? to_string(algo.config.space.kind)
                                : "tabular";
        write_file(dir / "space.txt", space + "\n");
    }
    if (auto repr = std::dynamic_pointer_cast<const PolicyRepr>(result.final_policy))
        write_file(dir / "final_policy.txt", policy_to_string(*repr));
}

}  // namespace

ExperimentOutput run_experiment(ExperimentSpec spec, const RunOptions& options) {
    if (options.seed) spec.seed = *options.seed;
    if (options.runs) spec.runs = *options.runs;
    if (options.output_dir) spec.output_dir = *options.output_dir;
    if (options.threads) spec.threads = *options.threads;
    require(spec.runs >= 1, "runs must be at least 1");
    require(!spec.algorithms.empty(), "experiment has no algorithms");

    const fs::path out_dir(spec.output_dir);
    fs::create_directories(out_dir);
    ExperimentOutput output;
    output.records_path = (out_dir / (spec.name + "_records.csv")).string();
    output.summary_path = (out_dir / (spec.name + "_summary.csv")).string();
    auto remove_outputs = [&] {
        std::error_code ec;
        fs::remove(output.records_path, ec);
        fs::remove(output.summary_path, ec);
    };

    std::vector<Task> tasks;
    for (std::size_t a = 0; a < spec.algorithms.size(); ++a)
        for (std::size_t g = 0; g < spec.grid_size(); ++g)
            for (std::size_t r = 0; r < spec.runs; ++r) tasks.push_back({a, g, r});

    std::vector<std::vector<RecordRow>> staged(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::mutex log_mutex;
    parallel_for(tasks.size(), spec.threads, [&](std::size_t i) {
        const auto& t = tasks[i];
        const std::string label = spec.algorithms[t.algo].label;
        const std::uint64_t seed = spec.seed + t.run;
        try {
            AlgorithmSpec algo = spec.resolved(t.algo, t.grid);
            algo.config.seed = seed;
            algo.config.threads = 1;
            RunResult result = run_algorithm(algo);
            for (const auto& rec : result.records) {
                RecordRow row;
                row.experiment = spec.name + "." + label;
                if (spec.sweep) {
                    row.grid_key = spec.sweep->key;
                    row.grid_value = spec.sweep->values[t.grid];
                }
                row.run = t.run;
                row.record = rec;
                staged[i].push_back(std::move(row));
            }
            if (options.write_run_dirs)
                write_run_dir(out_dir / (spec.name + "_runs") / label /
                                  ("g" + std::to_string(t.grid) + "_r" + std::to_string(t.run)),
                              algo, result);
            if (options.log) {
                std::lock_guard lock(log_mutex);
                *options.log << "  done " << label << " grid " << t.grid << " run " << t.run << '\n';
            }
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "algorithm '" << label << "'";
            if (spec.sweep) msg << " at " << spec.sweep->key << " = " << spec.sweep->values[t.grid];
            msg << " with seed " << seed << " failed: " << e.what();
            errors[i] = msg.str();
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) {
            remove_outputs();
            throw std::runtime_error(e);
        }
    }

    for (auto& rows : staged)
        for (auto& r : rows) output.rows.push_back(std::move(r));
    output.summary = summarize(output.rows, options.timing);
    try {
        std::ostringstream records, summary;
        write_records_csv(records, output.rows, options.timing);
        write_summary_csv(summary, output.summary);
        write_file(output.records_path, records.str());
        write_file(output.summary_path, summary.str());
        if (options.svg) {
            for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
                std::ostringstream svg;
                if (!write_svg(svg, output.summary, m, spec.name + ": " + kMetricNames[m])) continue;
                auto path = (out_dir / (spec.name + "_" + kMetricNames[m] + ".svg")).string();
                write_file(path, svg.str());
                output.svg_paths.push_back(path);
            }
        }
    } catch (...) {
        remove_outputs();
        throw;
    }
    return output;
}

std::vector<std::string> reproduce_targets() { return {"fig-chain-a", "fig-chain-b", "fig-mc", "fig-pole"}; }

std::string reproduce_config(const std::string& target) {
    if (target == "fig-chain-a") {
        return R"([experiment]
name = fig-chain-a
runs = 1
seed = 1

[algorithm capi]
kind = capi
env = chain_a
K = 15
nu = all_states
space = threshold
evaluator.kind = exact_one_step

[algorithm zero_one_star]
kind = zero_one_star
env = chain_a
K = 15
nu = all_states
space = threshold

[algorithm vi]
kind = vi
env = chain_a
K = 15

[algorithm pi]
kind = pi
env = chain_a
K = 15
)";
    }
    if (target == "fig-chain-b") {
        return R"([experiment]
name = fig-chain-b
runs = 1
seed = 1

[algorithm capi]
kind = capi
env = chain_b
K = 10
nu = all_states
space = threshold
evaluator.kind = exact_one_step

[algorithm vi]
kind = vi
env = chain_b
K = 10

[algorithm pi]
kind = pi
env = chain_b
K = 10
)";
    }
    if (target == "fig-mc") {
        return R"([experiment]
name = fig-mc
runs = 10
seed = 1

[algorithm knn_capi]
kind = capi
env = mountain_car
K = 5
nu = uniform_box
collect = iid_uniform
space = knn
space.kappa = 75
evaluator.kind = fqe_kernel
evaluator.bandwidth = 0.01
evaluator.ridge_scale = 0.01
eval.episodes = 100
eval.max_steps = 200

[algorithm kernel_fqi]
kind = fqi
env = mountain_car
K = 100
collect = iid_uniform
evaluator.kind = fqe_kernel
evaluator.bandwidth = 0.01
evaluator.ridge_scale = 0.01
eval.episodes = 100
eval.max_steps = 200

[sweep]
key = n
values = 1000, 2000, 4000, 8000
)";
    }
    if (target == "fig-pole") {
        return R"([experiment]
name = fig-pole
runs = 10
seed = 1

[algorithm tree_capi]
kind = capi
env = cart_pole
K = 5
n = 15000
n_eval = 15000
nu = random_policy_visits
collect = iid_uniform
space = tree_ensemble
space.n_trees = 30
evaluator.kind = fqe_trees
evaluator.k_cuts = 4
evaluator.eta = 60
evaluator.iterations = 100
eval.episodes = 100
eval.max_steps = 1000

[algorithm tree_dpi]
kind = dpi
env = cart_pole
K = 5
n = 150
nu = random_policy_visits
space = tree_ensemble
space.n_trees = 30
evaluator.kind = rollout
evaluator.horizon = 50
evaluator.trajectories = 1
eval.episodes = 100
eval.max_steps = 1000

[algorithm tree_fqi]
kind = fqi
env = cart_pole
K = 50
n_eval = 15000
collect = iid_uniform
evaluator.kind = fqe_trees
evaluator.k_cuts = 4
evaluator.eta = 60
eval.episodes = 100
eval.max_steps = 1000

[sweep]
key = space.eta
values = 20, 500
)";
    }
    throw ContractViolation("unknown reproduce target '" + target + "'");
}

std::string reproduce_banner(const std::string& target) {
    std::ostringstream out;
    out << "reproduce " << target << " (desk scale)\n";
    if (target == "fig-chain-a" || target == "fig-chain-b") {
        out << "  full-size 200-state chain; nu covers every state once, so one run is exact\n";
    } else if (target == "fig-mc") {
        out << "  runs: 10 (published: 50)\n"
            << "  sample sizes: 1000..8000\n"
            << "  kernel dictionary: uniform subsample of at most 800 centers (published: online sparsification)\n";
    } else if (target == "fig-pole") {
        out << "  runs: 10 (published: 50)\n"
            << "  episode cap: 1000 steps (published: 3000)\n"
            << "  samples: 15000 transitions per iteration\n";
    }
    return out.str();
}

}  // namespace capi
