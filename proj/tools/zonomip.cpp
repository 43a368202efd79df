#include "zonomip/config_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

using namespace zonomip;
using json = nlohmann::json;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, infeasible = 3, no_incumbent = 4 };

struct Overrides {
    std::optional<int> threads;
    std::optional<double> eps_a;
    std::optional<double> eps_r;
    std::optional<double> t_max;
    std::optional<std::string> formulation;
    std::optional<bool> warm;
    std::optional<int> steps;
    std::optional<std::string> mode;
    std::optional<double> d_max;
    std::optional<int> horizon;
    std::optional<double> max_time;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--threads", o.threads, "Solver worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--eps-a", o.eps_a, "Absolute convergence tolerance");
    cmd->add_option("--eps-r", o.eps_r, "Relative convergence tolerance");
    cmd->add_option("--t-max", o.t_max, "Per-solve budget in real-time mode (s)");
    cmd->add_option("--formulation", o.formulation, "hz or bigm")->check(CLI::IsMember({"hz", "bigm"}));
    cmd->add_flag("--warm,!--no-warm", o.warm, "Warm start from the previous solution");
    cmd->add_option("--horizon", o.horizon, "MPC horizon N");
    cmd->add_option("--max-time", o.max_time, "Solver wall-clock limit (s)");
}

void add_sim_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--steps", o.steps, "Closed-loop steps");
    cmd->add_option("--mode", o.mode, "converge_each_step or real_time_budget")
        ->check(CLI::IsMember({"converge_each_step", "real_time_budget"}));
    cmd->add_option("--d-max", o.d_max, "Reachability distance per step (0 = default)");
}

std::optional<int> env_threads() {
    const char* v = std::getenv("ZONOMIP_THREADS");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw std::invalid_argument("ZONOMIP_THREADS must be a positive integer");
    return static_cast<int>(n);
}

// Defaults, then ZONOMIP_THREADS, then the config file, then flags;
// --deterministic wins over all of them.
RunConfig effective_config(const std::string& config_path, int dim, const Overrides& o, bool deterministic) {
    RunConfig cfg = default_run_config(dim);
    if (const auto t = env_threads()) cfg.solver.threads = *t;
    if (!config_path.empty()) {
        const int env = cfg.solver.threads;
        const std::string text = read_text(config_path);
        cfg = parse_run_config(text, dim);
        if (json::parse(text).value("solver", json::object()).count("threads") == 0) cfg.solver.threads = env;
    }
    if (o.threads) cfg.solver.threads = *o.threads;
    if (o.eps_a) cfg.solver.eps_a = *o.eps_a;
    if (o.eps_r) cfg.solver.eps_r = *o.eps_r;
    if (o.t_max) cfg.t_max = *o.t_max;
    if (o.formulation) cfg.formulation = parse_formulation(*o.formulation);
    if (o.warm) cfg.solver.warm_start = *o.warm;
    if (o.steps) cfg.steps = *o.steps;
    if (o.mode) cfg.mode = *o.mode == "real_time_budget" ? SimMode::real_time_budget : SimMode::converge_each_step;
    if (o.d_max) cfg.d_max = *o.d_max;
    if (o.horizon) cfg.mpc.N = *o.horizon;
    if (o.max_time) cfg.solver.max_time_s = *o.max_time;
    if (deterministic) cfg.solver.threads = 1;
    cfg.mpc.validate();
    cfg.solver.validate();
    if (cfg.steps < 1) throw std::invalid_argument("steps must be at least 1");
    if (!(cfg.t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
    return cfg;
}

// A map file, with start and goal when it carries them.
struct MapInput {
    Map map;
    std::optional<Scenario> scenario;
};

MapInput read_map(const std::string& path) {
    const std::string text = read_text(path);
    const auto j = json::parse(text, nullptr, false);
    const std::string name = std::filesystem::path(path).stem().string();
    if (!j.is_discarded() && j.is_object() && j.contains("start") && j.contains("goal")) {
        auto s = parse_scenario(text, name);
        return {s.map, s};
    }
    return {parse_map(text, name), std::nullopt};
}

json vectors(const std::vector<VectorXd>& v) {
    auto a = json::array();
    for (const auto& x : v) a.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    return a;
}

json maybe_inf(double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "-inf"); }

int run_solve(const std::string& config, const std::string& map_path, const std::string& out, const Overrides& o,
              bool deterministic) {
    const auto in = read_map(map_path);
    RunConfig cfg = effective_config(config, in.map.dim(), o, deterministic);
    double kappa = cfg.kappa.value_or(0.0);
    if (in.scenario) {
        const auto placed = scenario_config(cfg.mpc, *in.scenario);
        cfg.mpc.x0 = placed.x0;
        cfg.mpc.x_ref = placed.x_ref;
        kappa = cfg.kappa.value_or(in.scenario->kappa);
    }
    const auto prob = build_planning_problem(cfg.mpc, in.map, cfg.formulation, kappa);
    const double d_max = cfg.d_max == 0.0 ? default_d_max(cfg.mpc, cfg.v_max) : cfg.d_max;
    const auto tables = build_tables(in.map, {d_max, cfg.mpc.N, cfg.solver.threads}, cfg.mpc.H * cfg.mpc.x0);
    const auto res = solve_miqp(prob.miqp, prob.hreps, tables, cfg.solver);
    const bool incumbent = std::isfinite(res.j_plus);

    json j = {{"status", to_string(res.status)},
              {"objective", maybe_inf(res.j_plus)},
              {"j_plus", maybe_inf(res.j_plus)},
              {"j_minus", maybe_inf(res.j_minus)},
              {"gap", maybe_inf(res.gap)},
              {"iterations", res.iterations},
              {"seconds", res.seconds},
              {"qp_failures", res.qp_failures},
              {"regions", res.regions},
              {"config", json::parse(run_config_json(cfg))}};
    if (incumbent) {
        const auto traj = extract_trajectory(prob.miqp, res.z);
        j["x"] = vectors(traj.x);
        j["u"] = vectors(traj.u);
    }
    write_atomic(out, j.dump(1));
    if (res.status == MiqpStatus::infeasible) {
        std::cerr << "solve: infeasible\n";
        return infeasible;
    }
    if (!incumbent) {
        std::cerr << "solve: " << to_string(res.status) << " without an incumbent\n";
        return no_incumbent;
    }
    return ok;
}

int run_simulate(const std::string& config, const std::string& map_path, const std::string& out,
                 const std::string& csv, const std::optional<std::string>& cache, const Overrides& o,
                 bool deterministic) {
    const auto in = read_map(map_path);
    if (!in.scenario) throw std::invalid_argument("simulate: the map file needs 'start' and 'goal'");
    const RunConfig cfg = effective_config(config, in.map.dim(), o, deterministic);
    SimConfig sim = make_sim_config(cfg, *in.scenario);
    sim.reach_cache = cache;
    SimRecord rec;
    try {
        rec = run_closed_loop(sim);
    } catch (const SimulationError& e) {
        std::cerr << "simulate: " << e.what() << '\n';
        return infeasible;
    }
    auto j = json::parse(record_json(sim, rec));
    j["config"] = json::parse(run_config_json(cfg));
    j["reached_goal"] = rec.final_distance <= sim.goal_tolerance;
    write_atomic(out, j.dump(1));
    if (!csv.empty()) write_atomic(csv, trajectory_csv(rec));
    return ok;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int run_bench_cmd(const std::string& config, const std::string& suite_dir, const std::string& formulations,
                  const std::string& warm, int trials, int steps, bool diagnostics, double cell_timeout,
                  const std::string& out, const std::string& json_out, const Overrides& o, bool deterministic) {
    const auto suite = load_suite(suite_dir);
    const RunConfig cfg = effective_config(config, 2, o, deterministic);
    BenchOptions opt;
    opt.formulations.clear();
    for (const auto& f : split(formulations)) opt.formulations.push_back(parse_formulation(f));
    opt.warm.clear();
    for (const auto& w : split(warm)) {
        if (w != "cold" && w != "warm") throw std::invalid_argument("--warm-variants takes cold and/or warm");
        opt.warm.push_back(w == "warm");
    }
    if (opt.formulations.empty() || opt.warm.empty()) throw std::invalid_argument("bench: nothing to run");
    opt.trials = trials;
    opt.steps = steps;
    opt.diagnostics = diagnostics;
    opt.cell_timeout_s = cell_timeout;
    opt.mpc = cfg.mpc;
    opt.solver = cfg.solver;
    const auto cells = run_bench(suite, opt);
    const std::string csv = bench_csv(cells);
    if (out.empty())
        std::cout << csv;
    else
        write_atomic(out, csv);
    if (!json_out.empty()) {
        auto j = json::parse(bench_json(cells));
        j["config"] = json::parse(run_config_json(cfg));
        j["trials"] = trials;
        j["steps"] = steps;
        write_atomic(json_out, j.dump(1));
    }
    return ok;
}

int run_precompute(const std::string& config, const std::string& map_path, const std::string& out,
                   const Overrides& o, bool deterministic) {
    const auto in = read_map(map_path);
    const RunConfig cfg = effective_config(config, in.map.dim(), o, deterministic);
    const double d_max = cfg.d_max == 0.0 ? default_d_max(cfg.mpc, cfg.v_max) : cfg.d_max;
    const auto tables = build_tables(in.map, {d_max, cfg.mpc.N, cfg.solver.threads});
    save_tables(tables, out);
    std::cout << "regions " << tables.num_regions() << ", d_max " << d_max << ", N " << tables.N << '\n';
    return ok;
}

int run_verify(const std::string& map_path, unsigned seed, int directions, int points) {
    const auto in = read_map(map_path);
    const auto report = verify_map(in.map, seed, directions, points);
    if (!report.ok) {
        for (const auto& f : report.failures) std::cerr << "verify-map: " << f << '\n';
        return config_error;
    }
    std::cout << "verify-map: " << in.map.name << " ok (" << in.map.num_regions() << " regions)\n";
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid-zonotope mixed-integer MPC planner"};
    app.require_subcommand(1);
    bool deterministic = false;
    app.add_flag("--deterministic", deterministic, "Single-threaded, reproducible runs");

    Overrides o;
    std::string config, map_path, out, csv, suite_dir, json_out;
    std::optional<std::string> cache;

    auto* solve = app.add_subcommand("solve", "Solve one MIQP from the map's start");
    solve->add_option("--config", config, "Config JSON")->check(CLI::ExistingFile);
    solve->add_option("--map", map_path, "Map JSON")->required()->check(CLI::ExistingFile);
    solve->add_option("--out", out, "Result JSON")->required();
    add_overrides(solve, o);

    auto* simulate = app.add_subcommand("simulate", "Closed-loop receding-horizon run");
    simulate->add_option("--config", config, "Config JSON")->check(CLI::ExistingFile);
    simulate->add_option("--map", map_path, "Map JSON with start and goal")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", out, "Stats JSON")->required();
    simulate->add_option("--csv", csv, "Trajectory CSV");
    simulate->add_option("--reach-cache", cache, "Reachability cache file");
    add_overrides(simulate, o);
    add_sim_overrides(simulate, o);

    std::string formulations = "hz,bigm", warm = "cold,warm";
    int trials = 5, steps = 30;
    bool diagnostics = false;
    double cell_timeout = std::numeric_limits<double>::infinity();
    auto* bench = app.add_subcommand("bench", "Benchmark a suite of maps");
    bench->add_option("--config", config, "Config JSON")->check(CLI::ExistingFile);
    bench->add_option("--suite", suite_dir, "Directory of map JSON files")->required()->check(CLI::ExistingDirectory);
    bench->add_option("--formulations", formulations, "Comma-separated: hz,bigm");
    bench->add_option("--warm-variants", warm, "Comma-separated: cold,warm");
    bench->add_option("--trials", trials, "Runs per cell")->check(CLI::PositiveNumber);
    bench->add_option("--steps", steps, "Closed-loop steps per run")->check(CLI::Range(2, 100000));
    bench->add_flag("--diagnostics", diagnostics, "Add no-reach and no-diag cells");
    bench->add_option("--cell-timeout", cell_timeout, "Seconds per cell before N/A");
    bench->add_option("--out", out, "CSV output (stdout when omitted)");
    bench->add_option("--json", json_out, "JSON output");
    add_overrides(bench, o);

    auto* reach = app.add_subcommand("precompute-reach", "Build and cache reachability tables");
    reach->add_option("--config", config, "Config JSON")->check(CLI::ExistingFile);
    reach->add_option("--map", map_path, "Map JSON")->required()->check(CLI::ExistingFile);
    reach->add_option("--out", out, "Cache file")->required();
    reach->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    reach->add_option("--horizon", o.horizon, "MPC horizon N");
    reach->add_option("--d-max", o.d_max, "Reachability distance per step (0 = default)");

    unsigned seed = 0;
    int directions = 16, points = 100;
    auto* verify = app.add_subcommand("verify-map", "Load-time property checks of a map");
    verify->add_option("--map", map_path, "Map JSON")->required()->check(CLI::ExistingFile);
    verify->add_option("--seed", seed, "Sampling seed");
    verify->add_option("--directions", directions, "Support directions")->check(CLI::PositiveNumber);
    verify->add_option("--points", points, "Membership samples")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*solve) return run_solve(config, map_path, out, o, deterministic);
        if (*simulate) return run_simulate(config, map_path, out, csv, cache, o, deterministic);
        if (*bench)
            return run_bench_cmd(config, suite_dir, formulations, warm, trials, steps, diagnostics, cell_timeout, out,
                                 json_out, o, deterministic);
        if (*reach) return run_precompute(config, map_path, out, o, deterministic);
        if (*verify) return run_verify(map_path, seed, directions, points);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return ok;
}
