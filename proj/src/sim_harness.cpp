#include "zonomip/sim_harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace zonomip {

namespace {

// Unit-form box |v_i| <= r on a linear image of the variable.
SoftSetConstraint box_constraint(const MatrixXd& map, double r, double W, double sigma_max) {
    const Index n = map.rows();
    ConstrainedZonotoped z(r * MatrixXd::Identity(n, n), VectorXd::Zero(n), MatrixXd(0, n), VectorXd(0));
    return {to_unit_form(z), map, VectorXd::Constant(n, W), VectorXd::Constant(n, sigma_max)};
}

}  // namespace

MpcConfig double_integrator(int dim, double dt) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("double_integrator: dim must be 2 or 3");
    if (!(dt > 0.0)) throw std::invalid_argument("double_integrator: dt must be positive");
    MpcConfig cfg;
    cfg.dt = dt;
    cfg.A = MatrixXd::Zero(2 * dim, 2 * dim);
    cfg.B = MatrixXd::Zero(2 * dim, dim);
    cfg.H = MatrixXd::Zero(dim, 2 * dim);
    for (int i = 0; i < dim; ++i) {
        cfg.A(2 * i, 2 * i) = 1.0;
        cfg.A(2 * i, 2 * i + 1) = dt;
        cfg.A(2 * i + 1, 2 * i + 1) = 1.0;
        cfg.B(2 * i, i) = 0.5 * dt * dt;
        cfg.B(2 * i + 1, i) = dt;
        cfg.H(i, 2 * i) = 1.0;
    }
    return cfg;
}

MpcConfig default_benchmark_config(int dim, double dt) {
    MpcConfig cfg = double_integrator(dim, dt);
    const Index nx = 2 * dim;
    constexpr double v_max = 1.0, a_max = 1.0, bound = 1e4, W = 1e6, sigma_max = 1e4;
    cfg.N = 15;
    cfg.Q = VectorXd::Zero(nx);
    cfg.QN = VectorXd::Zero(nx);
    for (int i = 0; i < dim; ++i) {
        cfg.Q[2 * i] = 0.1;
        cfg.QN[2 * i] = 10.0;
    }
    cfg.R = VectorXd::Constant(dim, 10.0);
    cfg.x_ref = VectorXd::Zero(nx);
    MatrixXd vel = MatrixXd::Zero(dim, nx);
    for (int i = 0; i < dim; ++i) vel(i, 2 * i + 1) = 1.0;
    cfg.state_set = box_constraint(vel, v_max, W, sigma_max);
    cfg.input_set = box_constraint(MatrixXd::Identity(dim, dim), a_max, W, sigma_max);
    // Rest set: a point at zero velocity, no generators.
    ConstrainedZonotoped rest(MatrixXd(dim, 0), VectorXd::Zero(dim), MatrixXd(0, 0), VectorXd(0), FactorDomain::unit);
    cfg.terminal_set = SoftSetConstraint{rest, vel, VectorXd::Constant(dim, W), VectorXd::Constant(dim, sigma_max)};
    cfg.x_lower = cfg.xN_lower = VectorXd::Constant(nx, -bound);
    cfg.x_upper = cfg.xN_upper = VectorXd::Constant(nx, bound);
    cfg.u_lower = VectorXd::Constant(dim, -bound);
    cfg.u_upper = VectorXd::Constant(dim, bound);
    cfg.W_hz = VectorXd::Constant(dim, W);
    cfg.sigma_hz_max = VectorXd::Constant(dim, sigma_max);
    cfg.x0 = VectorXd::Zero(nx);
    return cfg;
}

void set_motion_limits(MpcConfig& cfg, double v_max, double a_max) {
    if (!(v_max > 0.0) || !(a_max > 0.0)) throw std::invalid_argument("motion limits must be positive");
    if (!cfg.state_set || !cfg.input_set) throw std::invalid_argument("motion limits need state and input sets");
    const int dim = cfg.ny();
    if (cfg.nx() != 2 * dim || cfg.nu() != dim) throw std::invalid_argument("motion limits apply to double integrators");
    MatrixXd vel = MatrixXd::Zero(dim, cfg.nx());
    for (int i = 0; i < dim; ++i) vel(i, 2 * i + 1) = 1.0;
    auto state = box_constraint(vel, v_max, 0.0, 0.0);
    state.W = cfg.state_set->W;
    state.sigma_max = cfg.state_set->sigma_max;
    auto input = box_constraint(MatrixXd::Identity(dim, dim), a_max, 0.0, 0.0);
    input.W = cfg.input_set->W;
    input.sigma_max = cfg.input_set->sigma_max;
    cfg.state_set = state;
    cfg.input_set = input;
}

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

VectorXd json_point(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) throw std::invalid_argument(std::string("scenario: missing '") + key + "'");
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double slack_max(const MultiStageMiqp& m, const VectorXd& z) {
    double s = 0.0;
    Index off = 0;
    for (int k = 0; k <= m.horizon(); ++k) {
        const auto& L = m.layout[k];
        if (L.sig.size > 0) s = std::max(s, z.segment(off + L.sig.start, L.sig.size).cwiseAbs().maxCoeff());
        off += m.qp.stages[k].size();
    }
    return s;
}

double step_cost(const SimConfig& cfg, const VectorXd& region_costs, const std::vector<RegionHrep>& hreps,
                 const VectorXd& x, const VectorXd& u) {
    const VectorXd e = x - cfg.mpc.x_ref;
    double c = e.dot(cfg.mpc.Q.cwiseProduct(e)) + u.dot(cfg.mpc.R.cwiseProduct(u));
    const int r = region_at(hreps, cfg.mpc.H * x);
    if (r >= 0) c += region_costs[r];
    return c;
}

}  // namespace

Scenario parse_scenario(const std::string& json_text, const std::string& name) {
    Scenario s;
    s.map = parse_map(json_text, name);
    const json j = json::parse(json_text);
    s.start = json_point(j, "start");
    s.goal = json_point(j, "goal");
    s.kappa = j.value("kappa", 0.0);
    if (s.start.size() != s.map.dim() || s.goal.size() != s.map.dim())
        throw std::invalid_argument("scenario: start/goal dimension must match the map");
    if (s.kappa < 0.0) throw std::invalid_argument("scenario: kappa must be nonnegative");
    return s;
}

Scenario load_scenario(const std::string& path) {
    return parse_scenario(read_file(path), std::filesystem::path(path).stem().string());
}

std::vector<Scenario> load_suite(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::invalid_argument("suite: not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::vector<Scenario> out;
    for (const auto& f : files) out.push_back(load_scenario(f));
    if (out.empty()) throw std::invalid_argument("suite: no maps in " + dir);
    return out;
}

MpcConfig scenario_config(const MpcConfig& base, const Scenario& s) {
    MpcConfig cfg = base;
    if (cfg.ny() != s.map.dim()) throw std::invalid_argument("scenario: output dimension does not match the map");
    cfg.x0 = VectorXd::Zero(cfg.nx());
    cfg.x_ref = VectorXd::Zero(cfg.nx());
    // Least-squares inverse of H places the positions; velocities stay zero.
    const MatrixXd Hp = cfg.H.completeOrthogonalDecomposition().pseudoInverse();
    cfg.x0 = Hp * s.start;
    cfg.x_ref = Hp * s.goal;
    return cfg;
}

double default_d_max(const MpcConfig& cfg, double v_max) {
    if (!(v_max > 0.0)) throw std::invalid_argument("default_d_max: v_max must be positive");
    return std::sqrt(static_cast<double>(cfg.ny())) * v_max * cfg.dt;
}

PlanningProblem build_planning_problem(const MpcConfig& cfg, const Map& map, Formulation f, double kappa) {
    PlanningProblem p;
    p.region_costs = region_costs_vector(map, kappa);
    const auto base = build_convex_problem(cfg);
    switch (f) {
        case Formulation::hz: p.miqp = attach_hybzono(cfg, base, to_hybrid_zonotope(map), p.region_costs); break;
        case Formulation::bigm: p.miqp = attach_bigm(cfg, base, bigm_encoding(map), p.region_costs); break;
        case Formulation::convex: throw std::invalid_argument("build_planning_problem: formulation must be hz or bigm");
    }
    p.hreps = region_hreps(map);
    return p;
}

int region_at(const std::vector<RegionHrep>& hreps, const VectorXd& y) {
    for (std::size_t r = 0; r < hreps.size(); ++r)
        if (hreps[r].contains(y, 1e-6)) return static_cast<int>(r);
    return -1;
}

std::string to_string(SimMode m) { return m == SimMode::converge_each_step ? "converge_each_step" : "real_time_budget"; }

std::string to_string(Formulation f) {
    switch (f) {
        case Formulation::convex: return "convex";
        case Formulation::hz: return "hz";
        case Formulation::bigm: return "bigm";
    }
    return "unknown";
}

void SimConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("sim config: steps must be at least 1");
    if (!(t_max > 0.0)) throw std::invalid_argument("sim config: t_max must be positive");
    if (d_max < 0.0 || std::isnan(d_max)) throw std::invalid_argument("sim config: d_max must be nonnegative");
    if (!(goal_tolerance > 0.0)) throw std::invalid_argument("sim config: goal tolerance must be positive");
    if (mode == SimMode::real_time_budget && mpc.N < 2)
        throw std::invalid_argument("sim config: real-time mode needs a horizon of at least 2");
    if (mpc.ny() != scenario.map.dim()) throw std::invalid_argument("sim config: output dimension does not match the map");
    solver.validate();
}

SimRecord run_closed_loop(const SimConfig& cfg) {
    cfg.validate();
    SimRecord rec;
    MpcConfig mpc = scenario_config(cfg.mpc, cfg.scenario);
    mpc.fix_first_input = cfg.mode == SimMode::real_time_budget;
    if (mpc.fix_first_input) mpc.u0 = VectorXd::Zero(mpc.nu());
    mpc.validate();
    const Map& map = cfg.scenario.map;
    auto prob = build_planning_problem(mpc, map, cfg.formulation, cfg.scenario.kappa);

    rec.d_max = cfg.d_max == 0.0 ? default_d_max(mpc, cfg.v_max) : cfg.d_max;
    const auto t_pre = Clock::now();
    std::optional<ReachTables> tables;
    if (cfg.reach_cache) tables = load_tables(*cfg.reach_cache, map, rec.d_max, mpc.N);
    if (!tables) {
        tables = build_tables(map, {rec.d_max, mpc.N, cfg.solver.threads});
        if (cfg.reach_cache) save_tables(*tables, *cfg.reach_cache);
    }
    rec.precompute_seconds = seconds_since(t_pre);

    SolverSettings settings = cfg.solver;
    if (cfg.mode == SimMode::real_time_budget) {
        settings.max_time_s = cfg.t_max;
        settings.require_incumbent = true;
    }
    const MiqpSolver solver(prob.miqp, prob.hreps, *tables);

    VectorXd x = mpc.x0;
    VectorXd stored_u = VectorXd::Zero(mpc.nu());
    std::optional<std::vector<int>> previous;
    for (int n = 0; n < cfg.steps; ++n) {
        refresh_point_table(*tables, map, mpc.H * x, cfg.solver.threads);
        if (mpc.fix_first_input)
            update_initial_state(prob.miqp, x, stored_u);
        else
            update_initial_state(prob.miqp, x);
        const auto res = solver.solve(settings, settings.warm_start ? previous : std::nullopt);
        if (!std::isfinite(res.j_plus))
            throw SimulationError(n, "simulation: solver found no feasible plan at step " + std::to_string(n) + " (" +
                                         to_string(res.status) + ")");
        const auto plan = extract_trajectory(prob.miqp, res.z);
        StepRecord s;
        s.x = x;
        s.u = mpc.fix_first_input ? stored_u : plan.u[0];
        s.status = res.status;
        s.solve_seconds = res.seconds;
        s.iterations = res.iterations;
        s.gap = res.gap;
        s.j_plus = res.j_plus;
        s.j_minus = res.j_minus;
        s.slack_max = slack_max(prob.miqp, res.z);
        s.region = region_at(prob.hreps, mpc.H * x);
        s.qp_seconds = res.average_qp_seconds();
        s.qp_failures = res.qp_failures;
        SimConfig costed = cfg;
        costed.mpc = mpc;
        s.stage_cost = step_cost(costed, prob.region_costs, prob.hreps, x, s.u);
        rec.J_st += s.stage_cost;
        if (mpc.fix_first_input) stored_u = plan.u[1];
        previous = res.regions;
        x = mpc.A * x + mpc.B * s.u;
        rec.steps.push_back(std::move(s));
    }
    rec.final_state = x;
    rec.final_distance = (mpc.H * x - cfg.scenario.goal).norm();
    return rec;
}

double integrated_stage_cost(const SimConfig& cfg, const SimRecord& rec) {
    SimConfig c = cfg;
    c.mpc = scenario_config(cfg.mpc, cfg.scenario);
    const VectorXd costs = region_costs_vector(cfg.scenario.map, cfg.scenario.kappa);
    const auto hreps = region_hreps(cfg.scenario.map);
    double J = 0.0;
    for (const auto& s : rec.steps) J += step_cost(c, costs, hreps, s.x, s.u);
    return J;
}

std::string trajectory_csv(const SimRecord& rec) {
    std::ostringstream out;
    out << std::setprecision(17);
    if (rec.steps.empty()) return "step\n";
    const Index nx = rec.steps[0].x.size(), nu = rec.steps[0].u.size();
    out << "step";
    for (Index i = 0; i < nx; ++i) out << ",x" << i;
    for (Index i = 0; i < nu; ++i) out << ",u" << i;
    out << ",status,solve_seconds,iterations,gap,slack_max,region\n";
    for (std::size_t n = 0; n < rec.steps.size(); ++n) {
        const auto& s = rec.steps[n];
        out << n;
        for (Index i = 0; i < nx; ++i) out << ',' << s.x[i];
        for (Index i = 0; i < nu; ++i) out << ',' << s.u[i];
        out << ',' << to_string(s.status) << ',' << s.solve_seconds << ',' << s.iterations << ',' << s.gap << ','
            << s.slack_max << ',' << s.region << '\n';
    }
    return out.str();
}

namespace {

json finite_or_string(double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : (v < 0 ? "-inf" : "nan")); }

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string record_json(const SimConfig& cfg, const SimRecord& rec) {
    json j;
    j["map"] = cfg.scenario.map.name;
    j["formulation"] = to_string(cfg.formulation);
    j["mode"] = to_string(cfg.mode);
    j["steps"] = cfg.steps;
    j["d_max"] = finite_or_string(rec.d_max);
    j["loop_rate_hz"] = cfg.loop_rate_hz;
    j["dynamics_rate_hz"] = cfg.dynamics_rate_hz;
    j["J_st"] = rec.J_st;
    j["final_distance"] = rec.final_distance;
    j["final_state"] = vec_json(rec.final_state);
    j["precompute_seconds"] = rec.precompute_seconds;
    auto steps = json::array();
    double total = 0.0, max_t = 0.0, max_slack = 0.0;
    int max_it = 0;
    long long iters = 0;
    for (const auto& s : rec.steps) {
        steps.push_back({{"x", vec_json(s.x)},
                         {"u", vec_json(s.u)},
                         {"status", to_string(s.status)},
                         {"solve_seconds", s.solve_seconds},
                         {"iterations", s.iterations},
                         {"gap", finite_or_string(s.gap)},
                         {"j_plus", finite_or_string(s.j_plus)},
                         {"j_minus", finite_or_string(s.j_minus)},
                         {"slack_max", s.slack_max},
                         {"region", s.region},
                         {"qp_seconds", s.qp_seconds},
                         {"stage_cost", s.stage_cost}});
        total += s.solve_seconds;
        max_t = std::max(max_t, s.solve_seconds);
        max_it = std::max(max_it, s.iterations);
        iters += s.iterations;
        max_slack = std::max(max_slack, s.slack_max);
    }
    j["per_step"] = steps;
    const double n = std::max<std::size_t>(1, rec.steps.size());
    j["aggregates"] = {{"total_solve_seconds", total}, {"avg_solve_seconds", total / n},
                       {"max_solve_seconds", max_t},   {"avg_iterations", static_cast<double>(iters) / n},
                       {"max_iterations", max_it},     {"max_slack", max_slack}};
    return j.dump(1);
}

std::vector<BenchCell> run_bench(const std::vector<Scenario>& suite, const BenchOptions& opt) {
    if (opt.trials < 1 || opt.steps < 2) throw std::invalid_argument("bench: need trials >= 1 and steps >= 2");
    struct Variant {
        std::string name;
        Formulation f;
        bool warm;
        double d_max;
        bool cholesky;
    };
    std::vector<Variant> variants;
    for (auto f : opt.formulations)
        for (bool w : opt.warm) variants.push_back({to_string(f) + (w ? "_ws" : ""), f, w, 0.0, false});
    if (opt.diagnostics) {
        variants.push_back({"hz_noreach", Formulation::hz, false, kInf, false});
        variants.push_back({"hz_nodiag", Formulation::hz, false, 0.0, true});
    }
    std::vector<BenchCell> cells;
    for (const auto& sc : suite) {
        MpcConfig base = opt.mpc;
        if (base.ny() != sc.map.dim()) {
            base = default_benchmark_config(sc.map.dim(), opt.mpc.dt);
            base.N = opt.mpc.N;
        }
        for (const auto& v : variants) {
            BenchCell cell;
            cell.map = sc.map.name;
            cell.variant = v.name;
            cell.formulation = v.f;
            cell.warm = v.warm;
            long long iters = 0;
            double qp = 0.0;
            const auto t_cell = Clock::now();
            for (int t = 0; t < opt.trials && !cell.na; ++t) {
                SimConfig sim;
                sim.scenario = sc;
                sim.mpc = base;
                sim.formulation = v.f;
                sim.solver = opt.solver;
                sim.solver.warm_start = v.warm;
                sim.solver.qp.force_cholesky = v.cholesky;
                sim.steps = opt.steps;
                sim.d_max = v.d_max;
                SimRecord rec;
                try {
                    rec = run_closed_loop(sim);
                } catch (const SimulationError&) {
                    cell.na = true;
                    break;
                }
                for (std::size_t n = 1; n < rec.steps.size(); ++n) {
                    const auto& s = rec.steps[n];
                    ++cell.samples;
                    cell.total_seconds += s.solve_seconds;
                    cell.max_seconds = std::max(cell.max_seconds, s.solve_seconds);
                    iters += s.iterations;
                    cell.max_iterations = std::max(cell.max_iterations, s.iterations);
                    qp += s.qp_seconds;
                }
                if (seconds_since(t_cell) > opt.cell_timeout_s) cell.na = true;
            }
            if (cell.samples > 0) {
                cell.avg_seconds = cell.total_seconds / cell.samples;
                cell.avg_iterations = static_cast<double>(iters) / cell.samples;
                cell.avg_qp_seconds = qp / cell.samples;
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

std::string bench_csv(const std::vector<BenchCell>& cells) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "map,variant,formulation,warm,avg_seconds,max_seconds,total_seconds,avg_iterations,max_iterations,"
           "avg_qp_seconds,samples\n";
    for (const auto& c : cells) {
        out << c.map << ',' << c.variant << ',' << to_string(c.formulation) << ',' << (c.warm ? 1 : 0) << ',';
        if (c.na) {
            out << "N/A,N/A,N/A,N/A,N/A,N/A," << c.samples << '\n';
            continue;
        }
        out << c.avg_seconds << ',' << c.max_seconds << ',' << c.total_seconds << ',' << c.avg_iterations << ','
            << c.max_iterations << ',' << c.avg_qp_seconds << ',' << c.samples << '\n';
    }
    return out.str();
}

std::string bench_json(const std::vector<BenchCell>& cells) {
    auto arr = json::array();
    for (const auto& c : cells) {
        json j = {{"map", c.map}, {"variant", c.variant}, {"formulation", to_string(c.formulation)},
                  {"warm", c.warm}, {"samples", c.samples}};
        if (c.na) {
            j["status"] = "N/A";
        } else {
            j["status"] = "ok";
            j["avg_seconds"] = c.avg_seconds;
            j["max_seconds"] = c.max_seconds;
            j["total_seconds"] = c.total_seconds;
            j["avg_iterations"] = c.avg_iterations;
            j["max_iterations"] = c.max_iterations;
            j["avg_qp_seconds"] = c.avg_qp_seconds;
        }
        arr.push_back(j);
    }
    return json{{"cells", arr}}.dump(1);
}

}  // namespace zonomip
