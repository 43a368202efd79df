#include "zonomip/config_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zonomip {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument("config: " + what); }

void check_keys(const json& j, const std::string& block, const std::set<std::string>& allowed) {
    if (!j.is_object()) fail("'" + block + "' must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) fail("unknown key '" + k + "' in '" + block + "'");
}

double number(const json& j, const std::string& key, bool allow_inf = false) {
    if (allow_inf && j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    if (!j.is_number()) fail("'" + key + "' must be a number");
    return j.get<double>();
}

int integer(const json& j, const std::string& key) {
    if (!j.is_number_integer()) fail("'" + key + "' must be an integer");
    return j.get<int>();
}

bool boolean(const json& j, const std::string& key) {
    if (!j.is_boolean()) fail("'" + key + "' must be true or false");
    return j.get<bool>();
}

VectorXd vector(const json& j, const std::string& key, Index n) {
    if (j.is_number()) return VectorXd::Constant(n, j.get<double>());
    if (!j.is_array()) fail("'" + key + "' must be a number or an array");
    if (static_cast<Index>(j.size()) != n) fail("'" + key + "' must have " + std::to_string(n) + " entries");
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = number(j[i], key);
    return v;
}

MatrixXd matrix(const json& j, const std::string& key, Index rows, Index cols) {
    if (!j.is_array() || static_cast<Index>(j.size()) != rows) fail("'" + key + "' must have " + std::to_string(rows) + " rows");
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) m.row(i) = vector(j[i], key, cols).transpose();
    return m;
}

json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const MatrixXd& m) {
    auto rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(VectorXd(m.row(i).transpose())));
    return rows;
}

json maybe_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

SimMode parse_mode(const std::string& s) {
    if (s == "converge_each_step") return SimMode::converge_each_step;
    if (s == "real_time_budget") return SimMode::real_time_budget;
    fail("unknown sim mode '" + s + "'");
}

void apply_mpc(RunConfig& cfg, const json& j, int dim) {
    check_keys(j, "mpc", {"dim", "dt", "N", "v_max", "a_max", "A", "B", "H", "Q", "R", "QN", "x0", "x_ref", "x_lower",
                          "x_upper", "u_lower", "u_upper", "xN_lower", "xN_upper", "W_hz", "sigma_hz_max", "W_cx",
                          "sigma_cx_max", "W_cu", "sigma_cu_max", "W_cxN", "sigma_cxN_max"});
    if (j.contains("dim") && integer(j["dim"], "dim") != dim) fail("mpc.dim does not match the map dimension");
    if (j.contains("dt")) {
        const double dt = number(j["dt"], "dt");
        if (!(dt > 0.0)) fail("'dt' must be positive");
        const int N = cfg.mpc.N;
        cfg.mpc = default_benchmark_config(dim, dt);
        cfg.mpc.N = N;
    }
    auto& m = cfg.mpc;
    if (j.contains("N")) m.N = integer(j["N"], "N");
    if (j.contains("v_max")) cfg.v_max = number(j["v_max"], "v_max");
    if (j.contains("a_max")) cfg.a_max = number(j["a_max"], "a_max");
    set_motion_limits(m, cfg.v_max, cfg.a_max);
    const Index nx = m.nx(), nu = m.nu(), ny = m.ny();
    if (j.contains("A")) m.A = matrix(j["A"], "A", nx, nx);
    if (j.contains("B")) m.B = matrix(j["B"], "B", nx, nu);
    if (j.contains("H")) m.H = matrix(j["H"], "H", ny, nx);
    const std::pair<const char*, VectorXd*> vecs[] = {
        {"Q", &m.Q},           {"QN", &m.QN},         {"x0", &m.x0},         {"x_ref", &m.x_ref},
        {"x_lower", &m.x_lower}, {"x_upper", &m.x_upper}, {"xN_lower", &m.xN_lower}, {"xN_upper", &m.xN_upper}};
    for (const auto& [key, v] : vecs)
        if (j.contains(key)) *v = vector(j[key], key, nx);
    const std::pair<const char*, VectorXd*> uvecs[] = {{"R", &m.R}, {"u_lower", &m.u_lower}, {"u_upper", &m.u_upper}};
    for (const auto& [key, v] : uvecs)
        if (j.contains(key)) *v = vector(j[key], key, nu);
    if (j.contains("W_hz")) m.W_hz = vector(j["W_hz"], "W_hz", ny);
    if (j.contains("sigma_hz_max")) m.sigma_hz_max = vector(j["sigma_hz_max"], "sigma_hz_max", ny);
    const std::pair<const char*, std::optional<SoftSetConstraint>*> sets[] = {
        {"cx", &m.state_set}, {"cu", &m.input_set}, {"cxN", &m.terminal_set}};
    for (const auto& [name, set] : sets) {
        const std::string w = std::string("W_") + name, s = std::string("sigma_") + name + "_max";
        if (j.contains(w)) (*set)->W = vector(j[w], w, (*set)->map.rows());
        if (j.contains(s)) (*set)->sigma_max = vector(j[s], s, (*set)->map.rows());
    }
}

void apply_solver(SolverSettings& s, const json& j) {
    check_keys(j, "solver", {"eps_a", "eps_r", "max_iter", "max_time_s", "threads", "warm_start", "require_incumbent", "qp"});
    if (j.contains("eps_a")) s.eps_a = number(j["eps_a"], "eps_a", true);
    if (j.contains("eps_r")) s.eps_r = number(j["eps_r"], "eps_r", true);
    if (j.contains("max_iter")) s.max_iter = integer(j["max_iter"], "max_iter");
    if (j.contains("max_time_s")) s.max_time_s = number(j["max_time_s"], "max_time_s", true);
    if (j.contains("threads")) s.threads = integer(j["threads"], "threads");
    if (j.contains("warm_start")) s.warm_start = boolean(j["warm_start"], "warm_start");
    if (j.contains("require_incumbent")) s.require_incumbent = boolean(j["require_incumbent"], "require_incumbent");
    if (j.contains("qp")) {
        const json& q = j["qp"];
        check_keys(q, "solver.qp", {"tol_feas", "tol_gap", "max_iter", "step_fraction", "centering_exponent",
                                    "warm_shift", "force_cholesky", "regularization", "refinement_steps",
                                    "stall_accept_factor"});
        auto& p = s.qp;
        if (q.contains("tol_feas")) p.tol_feas = number(q["tol_feas"], "tol_feas");
        if (q.contains("tol_gap")) p.tol_gap = number(q["tol_gap"], "tol_gap");
        if (q.contains("max_iter")) p.max_iter = integer(q["max_iter"], "qp.max_iter");
        if (q.contains("step_fraction")) p.step_fraction = number(q["step_fraction"], "step_fraction");
        if (q.contains("centering_exponent")) p.centering_exponent = number(q["centering_exponent"], "centering_exponent");
        if (q.contains("warm_shift")) p.warm_shift = number(q["warm_shift"], "warm_shift");
        if (q.contains("force_cholesky")) p.force_cholesky = boolean(q["force_cholesky"], "force_cholesky");
        if (q.contains("regularization")) p.regularization = number(q["regularization"], "regularization");
        if (q.contains("refinement_steps")) p.refinement_steps = integer(q["refinement_steps"], "refinement_steps");
        if (q.contains("stall_accept_factor"))
            p.stall_accept_factor = number(q["stall_accept_factor"], "stall_accept_factor");
    }
}

void apply_sim(RunConfig& cfg, const json& j) {
    check_keys(j, "sim", {"steps", "mode", "t_max", "d_max", "loop_rate_hz", "dynamics_rate_hz", "seed",
                          "goal_tolerance", "kappa"});
    if (j.contains("steps")) cfg.steps = integer(j["steps"], "steps");
    if (j.contains("mode")) {
        if (!j["mode"].is_string()) fail("'mode' must be a string");
        cfg.mode = parse_mode(j["mode"].get<std::string>());
    }
    if (j.contains("t_max")) cfg.t_max = number(j["t_max"], "t_max");
    if (j.contains("d_max")) cfg.d_max = number(j["d_max"], "d_max", true);
    if (j.contains("loop_rate_hz")) cfg.loop_rate_hz = number(j["loop_rate_hz"], "loop_rate_hz");
    if (j.contains("dynamics_rate_hz")) cfg.dynamics_rate_hz = number(j["dynamics_rate_hz"], "dynamics_rate_hz");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) fail("'seed' must be a nonnegative integer");
        cfg.seed = j["seed"].get<unsigned>();
    }
    if (j.contains("goal_tolerance")) cfg.goal_tolerance = number(j["goal_tolerance"], "goal_tolerance");
    if (j.contains("kappa")) cfg.kappa = number(j["kappa"], "kappa");
}

}  // namespace

RunConfig default_run_config(int dim) {
    RunConfig cfg;
    cfg.mpc = default_benchmark_config(dim);
    return cfg;
}

Formulation parse_formulation(const std::string& name) {
    if (name == "hz") return Formulation::hz;
    if (name == "bigm") return Formulation::bigm;
    fail("formulation must be 'hz' or 'bigm', got '" + name + "'");
}

RunConfig parse_run_config(const std::string& json_text, int dim) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    check_keys(j, "config", {"formulation", "mpc", "solver", "sim"});
    RunConfig cfg = default_run_config(dim);
    if (j.contains("formulation")) {
        if (!j["formulation"].is_string()) fail("'formulation' must be a string");
        cfg.formulation = parse_formulation(j["formulation"].get<std::string>());
    }
    if (j.contains("mpc")) apply_mpc(cfg, j["mpc"], dim);
    if (j.contains("solver")) apply_solver(cfg.solver, j["solver"]);
    if (j.contains("sim")) apply_sim(cfg, j["sim"]);
    cfg.mpc.validate();
    cfg.solver.validate();
    if (cfg.steps < 1) fail("'steps' must be at least 1");
    if (!(cfg.t_max > 0.0)) fail("'t_max' must be positive");
    if (cfg.d_max < 0.0) fail("'d_max' must be nonnegative");
    if (cfg.kappa && *cfg.kappa < 0.0) fail("'kappa' must be nonnegative");
    return cfg;
}

RunConfig load_run_config(const std::string& path, int dim) { return parse_run_config(read_text(path), dim); }

std::string run_config_json(const RunConfig& cfg) {
    const auto& m = cfg.mpc;
    json mpc = {{"dim", m.ny()},
                {"dt", m.dt},
                {"N", m.N},
                {"v_max", cfg.v_max},
                {"a_max", cfg.a_max},
                {"A", to_json(m.A)},
                {"B", to_json(m.B)},
                {"H", to_json(m.H)},
                {"Q", to_json(m.Q)},
                {"R", to_json(m.R)},
                {"QN", to_json(m.QN)},
                {"x0", to_json(m.x0)},
                {"x_ref", to_json(m.x_ref)},
                {"x_lower", to_json(m.x_lower)},
                {"x_upper", to_json(m.x_upper)},
                {"u_lower", to_json(m.u_lower)},
                {"u_upper", to_json(m.u_upper)},
                {"xN_lower", to_json(m.xN_lower)},
                {"xN_upper", to_json(m.xN_upper)},
                {"W_hz", to_json(m.W_hz)},
                {"sigma_hz_max", to_json(m.sigma_hz_max)}};
    const std::pair<const char*, const std::optional<SoftSetConstraint>*> sets[] = {
        {"cx", &m.state_set}, {"cu", &m.input_set}, {"cxN", &m.terminal_set}};
    for (const auto& [name, set] : sets) {
        if (!*set) continue;
        mpc[std::string("W_") + name] = to_json((*set)->W);
        mpc[std::string("sigma_") + name + "_max"] = to_json((*set)->sigma_max);
    }
    const auto& s = cfg.solver;
    const auto& q = s.qp;
    json solver = {{"eps_a", maybe_inf(s.eps_a)},
                   {"eps_r", maybe_inf(s.eps_r)},
                   {"max_iter", s.max_iter},
                   {"max_time_s", maybe_inf(s.max_time_s)},
                   {"threads", s.threads},
                   {"warm_start", s.warm_start},
                   {"require_incumbent", s.require_incumbent},
                   {"qp",
                    {{"tol_feas", q.tol_feas},
                     {"tol_gap", q.tol_gap},
                     {"max_iter", q.max_iter},
                     {"step_fraction", q.step_fraction},
                     {"centering_exponent", q.centering_exponent},
                     {"warm_shift", q.warm_shift},
                     {"force_cholesky", q.force_cholesky},
                     {"regularization", q.regularization},
                     {"refinement_steps", q.refinement_steps},
                     {"stall_accept_factor", q.stall_accept_factor}}}};
    json sim = {{"steps", cfg.steps},
                {"mode", to_string(cfg.mode)},
                {"t_max", cfg.t_max},
                {"d_max", maybe_inf(cfg.d_max)},
                {"loop_rate_hz", cfg.loop_rate_hz},
                {"dynamics_rate_hz", cfg.dynamics_rate_hz},
                {"seed", cfg.seed},
                {"goal_tolerance", cfg.goal_tolerance}};
    if (cfg.kappa) sim["kappa"] = *cfg.kappa;
    json out = {{"formulation", to_string(cfg.formulation)}, {"mpc", mpc}, {"solver", solver}, {"sim", sim}};
    return out.dump(1);
}

SimConfig make_sim_config(const RunConfig& cfg, const Scenario& s) {
    SimConfig sim;
    sim.scenario = s;
    if (cfg.kappa) sim.scenario.kappa = *cfg.kappa;
    sim.mpc = cfg.mpc;
    sim.formulation = cfg.formulation;
    sim.solver = cfg.solver;
    sim.steps = cfg.steps;
    sim.mode = cfg.mode;
    sim.t_max = cfg.t_max;
    sim.d_max = cfg.d_max;
    sim.v_max = cfg.v_max;
    sim.loop_rate_hz = cfg.loop_rate_hz;
    sim.dynamics_rate_hz = cfg.dynamics_rate_hz;
    sim.seed = cfg.seed;
    sim.goal_tolerance = cfg.goal_tolerance;
    return sim;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
    }
}

}  // namespace zonomip
