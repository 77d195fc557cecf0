#include "capi/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace capi {

ConfigError::ConfigError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::string to_string(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::capi: return "capi";
        case AlgorithmKind::vi: return "vi";
        case AlgorithmKind::pi: return "pi";
        case AlgorithmKind::fqi: return "fqi";
        case AlgorithmKind::dpi: return "dpi";
        case AlgorithmKind::zero_one_star: return "zero_one_star";
    }
    return "unknown";
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && p == v.data() + v.size(), "key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && p == v.data() + v.size(), "key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && p == v.data() + v.size(), "key '" + key + "' expects a real number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ContractViolation("key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

AlgorithmKind parse_algorithm_kind(const std::string& v) {
    for (auto k : {AlgorithmKind::capi, AlgorithmKind::vi, AlgorithmKind::pi, AlgorithmKind::fqi, AlgorithmKind::dpi,
                   AlgorithmKind::zero_one_star})
        if (to_string(k) == v) return k;
    throw ContractViolation("unknown algorithm kind '" + v + "'");
}

}  // namespace

void apply_setting(AlgorithmSpec& algo, const std::string& key, const std::string& value) {
    auto& c = algo.config;
    auto& e = c.evaluator;
    auto& sp = c.space;
    if (key == "kind") algo.kind = parse_algorithm_kind(value);
    else if (key == "env") c.env.id = value;
    else if (key == "env.n_states") c.env.n_states = parse_size(key, value);
    else if (key == "env.success_prob") c.env.success_prob = parse_real(key, value);
    else if (key == "K") c.K = parse_size(key, value);
    else if (key == "n") c.n = parse_size(key, value);
    else if (key == "n_eval") c.n_eval = parse_size(key, value);
    else if (key == "n_schedule") {
        c.n_schedule.clear();
        for (const auto& v : split_list(value)) c.n_schedule.push_back(parse_size(key, v));
    }
    else if (key == "nu") c.nu = parse_nu_scheme(value);
    else if (key == "collect") c.collect = parse_collect_scheme(value);
    else if (key == "resample") c.resample_each_iter = parse_bool(key, value);
    else if (key == "space") sp.kind = parse_policy_space(value);
    else if (key == "space.kappa") sp.knn_kappa = parse_size(key, value);
    else if (key == "space.n_trees") sp.trees.n_trees = parse_size(key, value);
    else if (key == "space.eta") sp.trees.min_split = parse_size(key, value);
    else if (key == "space.k_cuts") sp.trees.k_random_cuts = parse_size(key, value);
    else if (key == "space.zero_one") sp.zero_one = parse_bool(key, value);
    else if (key == "evaluator.kind") e.kind = parse_evaluator_kind(value);
    else if (key == "evaluator.horizon") e.rollout.horizon = parse_size(key, value);
    else if (key == "evaluator.trajectories") e.rollout.trajectories = parse_size(key, value);
    else if (key == "evaluator.n_trees") e.trees.n_trees = parse_size(key, value);
    else if (key == "evaluator.eta") e.trees.min_split = parse_size(key, value);
    else if (key == "evaluator.k_cuts") e.trees.k_random_cuts = parse_size(key, value);
    else if (key == "evaluator.bandwidth") e.kernel.bandwidth = parse_real(key, value);
    else if (key == "evaluator.ridge_scale") e.kernel.ridge_scale = parse_real(key, value);
    else if (key == "evaluator.dictionary_cap") e.kernel.dictionary_cap = parse_size(key, value);
    else if (key == "evaluator.iterations") e.fqe_iterations = parse_size(key, value);
    else if (key == "evaluator.tol") e.fqe_tol = parse_real(key, value);
    else if (key == "evaluator.solve_tol") e.solve_tol = parse_real(key, value);
    else if (key == "eval.episodes") c.eval_episodes = parse_size(key, value);
    else if (key == "eval.max_steps") c.eval_max_steps = parse_size(key, value);
    else throw ContractViolation("unknown key '" + key + "'");
}

AlgorithmSpec ExperimentSpec::resolved(std::size_t a, std::size_t g) const {
    AlgorithmSpec out = algorithms.at(a);
    if (sweep) apply_setting(out, sweep->key, sweep->values.at(g));
    return out;
}

ExperimentSpec parse_config(std::istream& in) {
    ExperimentSpec spec;
    enum class Section { none, experiment, algorithm, sweep } section = Section::none;
    std::set<std::string> seen_keys;
    std::set<std::string> labels;
    std::size_t section_line = 0;
    bool algo_has_env = false;
    std::string line;
    std::size_t number = 0;

    auto close_section = [&] {
        if (section == Section::algorithm && !algo_has_env)
            throw ConfigError(section_line, "algorithm '" + spec.algorithms.back().label + "' is missing required key 'env'");
        if (section == Section::sweep && (!spec.sweep || spec.sweep->key.empty() || spec.sweep->values.empty()))
            throw ConfigError(section_line, "[sweep] needs both 'key' and 'values'");
    };

    while (std::getline(in, line)) {
        ++number;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(number, "malformed section header");
            close_section();
            seen_keys.clear();
            section_line = number;
            std::string inner = trim(line.substr(1, line.size() - 2));
            if (inner == "experiment") {
                section = Section::experiment;
            } else if (inner == "sweep") {
                if (spec.sweep) throw ConfigError(number, "only one [sweep] section is allowed");
                section = Section::sweep;
                spec.sweep.emplace();
                spec.sweep->line = number;
            } else if (inner.rfind("algorithm", 0) == 0) {
                std::string label = trim(inner.substr(9));
                if (label.empty()) throw ConfigError(number, "algorithm section needs a label");
                if (!labels.insert(label).second) throw ConfigError(number, "duplicate algorithm '" + label + "'");
                section = Section::algorithm;
                algo_has_env = false;
                spec.algorithms.push_back({label, AlgorithmKind::capi, {}});
            } else {
                throw ConfigError(number, "unknown section [" + inner + "]");
            }
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(number, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(number, "empty key");
        if (section == Section::none) throw ConfigError(number, "key '" + key + "' outside of any section");
        if (!seen_keys.insert(key).second) throw ConfigError(number, "duplicate key '" + key + "'");
        try {
            if (section == Section::experiment) {
                if (key == "name") spec.name = value;
                else if (key == "runs") spec.runs = parse_size(key, value);
                else if (key == "seed") spec.seed = parse_u64(key, value);
                else if (key == "output_dir") spec.output_dir = value;
                else if (key == "threads") spec.threads = parse_size(key, value);
                else throw ContractViolation("unknown key '" + key + "'");
            } else if (section == Section::sweep) {
                if (key == "key") spec.sweep->key = value;
                else if (key == "values") spec.sweep->values = split_list(value);
                else throw ContractViolation("unknown key '" + key + "'");
            } else {
                apply_setting(spec.algorithms.back(), key, value);
                if (key == "env") algo_has_env = true;
            }
        } catch (const ContractViolation& e) {
            throw ConfigError(number, e.what());
        }
    }
    close_section();

    if (spec.algorithms.empty()) throw ConfigError(number, "no [algorithm] section");
    if (spec.runs < 1) throw ConfigError(number, "runs must be at least 1");
    if (spec.name.empty()) throw ConfigError(number, "experiment name must not be empty");
    for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
        for (std::size_t g = 0; g < spec.grid_size(); ++g) {
            try {
                auto algo = spec.resolved(a, g);
                algo.config.validate();
                if (!is_tabular_env(algo.config.env.id)) make_env(algo.config.env);
            } catch (const ContractViolation& e) {
                std::size_t where = spec.sweep ? spec.sweep->line : 0;
                throw ConfigError(where, "algorithm '" + spec.algorithms[a].label + "': " + e.what());
            }
        }
    }
    return spec;
}

ExperimentSpec parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    return parse_config(in);
}

std::string default_config_text() {
    CapiConfig c;
    const auto& e = c.evaluator;
    std::ostringstream out;
    out << "[experiment]\n"
        << "name = experiment\n"
        << "runs = 1                      # seeds are seed + run index\n"
        << "seed = 1\n"
        << "output_dir = .\n"
        << "threads = 1\n"
        << "\n"
        << "[algorithm capi]\n"
        << "kind = capi                   # capi | vi | pi | fqi | dpi | zero_one_star\n"
        << "env = chain_a                 # required: chain_a | chain_b | mountain_car | cart_pole\n"
        << "env.n_states = " << c.env.n_states << "\n"
        << "env.success_prob = " << c.env.success_prob << "\n"
        << "K = " << c.K << "\n"
        << "n = " << c.n << "                       # classification states per iteration\n"
        << "n_eval = " << c.n_eval << "                    # transitions for batch evaluators, 0 = n\n"
        << "n_schedule =                  # optional per-iteration n list\n"
        << "nu = " << to_string(c.nu) << "              # all_states | uniform_states | uniform_box | random_policy_visits\n"
        << "collect = " << to_string(c.collect) << "         # iid_uniform | random_policy_trajectories\n"
        << "resample = true\n"
        << "space = " << to_string(c.space.kind) << "             # threshold | tabular | knn | tree_ensemble\n"
        << "space.kappa = " << c.space.knn_kappa << "\n"
        << "space.n_trees = " << c.space.trees.n_trees << "\n"
        << "space.eta = " << c.space.trees.min_split << "\n"
        << "space.k_cuts = 0              # 0 = max(1, sqrt(dim))\n"
        << "space.zero_one = false\n"
        << "evaluator.kind = " << to_string(e.kind) << "   # exact_one_step | exact_solve | rollout | fqe_trees | fqe_kernel\n"
        << "evaluator.horizon = " << e.rollout.horizon << "\n"
        << "evaluator.trajectories = " << e.rollout.trajectories << "\n"
        << "evaluator.n_trees = " << e.trees.n_trees << "\n"
        << "evaluator.eta = " << e.trees.min_split << "\n"
        << "evaluator.k_cuts = 0\n"
        << "evaluator.bandwidth = " << e.kernel.bandwidth << "\n"
        << "evaluator.ridge_scale = " << e.kernel.ridge_scale << "     # lambda = ridge_scale / n\n"
        << "evaluator.dictionary_cap = " << e.kernel.dictionary_cap << "\n"
        << "evaluator.iterations = 0      # 0 = derived from evaluator.tol\n"
        << "evaluator.tol = " << e.fqe_tol << "\n"
        << "evaluator.solve_tol = " << e.solve_tol << "\n"
        << "eval.episodes = " << c.eval_episodes << "               # Monte-Carlo episodes per iterate\n"
        << "eval.max_steps = " << c.eval_max_steps << "\n"
        << "\n"
        << "# [sweep]\n"
        << "# key = space.eta\n"
        << "# values = 20, 500\n";
    return out.str();
}

}  // namespace capi
