#pragma once

#include "zonomip/map_ingest.hpp"
#include "zonomip/miqp_bnb.hpp"
#include "zonomip/mpc_formulation.hpp"
#include "zonomip/reachability.hpp"

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zonomip {

/// Double integrator with state (p_1, v_1, ..., p_dim, v_dim), input
/// accelerations and position output. Costs and sets are left empty.
MpcConfig double_integrator(int dim, double dt);

/// Benchmark setup: v_max = a_max = 1, terminal rest set, boxes +-1e4,
/// slack weights 1e6 with bound 1e4, Q = 0.1 on positions, R = 10,
/// Q_N = 10 on positions, N = 15.
MpcConfig default_benchmark_config(int dim, double dt = 1.0);

/// Replaces the velocity and acceleration box sets of a double integrator,
/// keeping their slack weights and bounds.
void set_motion_limits(MpcConfig& cfg, double v_max, double a_max);

/// A map with a start and goal position. kappa scales occupancy into region
/// costs on grids.
struct Scenario {
    Map map;
    VectorXd start;
    VectorXd goal;
    double kappa = 0.0;
};

/// Map JSON with extra "start", "goal" and optional "kappa" keys.
Scenario parse_scenario(const std::string& json_text, const std::string& name = "");
Scenario load_scenario(const std::string& path);
/// Every *.json scenario in a directory, sorted by file name.
std::vector<Scenario> load_suite(const std::string& dir);

/// Copy of base with x0 at the start (at rest) and x_ref at the goal (at rest).
MpcConfig scenario_config(const MpcConfig& base, const Scenario& s);

/// sqrt(dim) * v_max * dt: the per-step travel bound for per-axis speed
/// limits v_max.
double default_d_max(const MpcConfig& cfg, double v_max);

struct PlanningProblem {
    MultiStageMiqp miqp;
    std::vector<RegionHrep> hreps;
    VectorXd region_costs;
};

PlanningProblem build_planning_problem(const MpcConfig& cfg, const Map& map, Formulation f, double kappa);

/// Lowest-index region containing y at tol 1e-6, or -1.
int region_at(const std::vector<RegionHrep>& hreps, const VectorXd& y);

enum class SimMode { converge_each_step, real_time_budget };

std::string to_string(SimMode m);
std::string to_string(Formulation f);

struct SimConfig {
    Scenario scenario;
    MpcConfig mpc = default_benchmark_config(2);
    Formulation formulation = Formulation::hz;
    SolverSettings solver;
    int steps = 60;
    SimMode mode = SimMode::converge_each_step;
    /// Per-solve wall-clock budget in real-time mode.
    double t_max = 0.2;
    /// 0 selects default_d_max; +inf turns reachability pruning off.
    double d_max = 0.0;
    double v_max = 1.0;
    /// Loop and dynamics rates are reported only; the plant is stepped with
    /// the exact discrete dynamics of the MPC model.
    double loop_rate_hz = 5.0;
    double dynamics_rate_hz = 100.0;
    unsigned seed = 0;
    double goal_tolerance = 0.5;
    std::optional<std::string> reach_cache;

    /// Throws std::invalid_argument for steps < 1 or inconsistent dimensions.
    void validate() const;
};

struct StepRecord {
    VectorXd x;
    VectorXd u;
    MiqpStatus status = MiqpStatus::infeasible;
    double solve_seconds = 0.0;
    int iterations = 0;
    double gap = 0.0;
    double j_plus = 0.0;
    double j_minus = 0.0;
    /// Largest free-space slack anywhere in the plan.
    double slack_max = 0.0;
    int region = -1;
    double qp_seconds = 0.0;
    int qp_failures = 0;
    double stage_cost = 0.0;
};

struct SimRecord {
    std::vector<StepRecord> steps;
    VectorXd final_state;
    /// Running sum of (x-x_r)'Q(x-x_r) + u'Ru + q^r(y) over applied steps.
    double J_st = 0.0;
    double final_distance = 0.0;
    double precompute_seconds = 0.0;
    double d_max = 0.0;
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// Receding-horizon loop. Throws SimulationError with the step index when
/// the solver reports infeasibility.
SimRecord run_closed_loop(const SimConfig& cfg);

/// J_st recomputed from the logged states and inputs.
double integrated_stage_cost(const SimConfig& cfg, const SimRecord& rec);

/// step, states, inputs, status, solve time, iterations, gap.
std::string trajectory_csv(const SimRecord& rec);
std::string record_json(const SimConfig& cfg, const SimRecord& rec);

struct BenchOptions {
    std::vector<Formulation> formulations{Formulation::hz, Formulation::bigm};
    std::vector<bool> warm{false, true};
    /// Adds "no reach" (d_max = inf) and "no diag" (forced Cholesky) cells
    /// for the hybrid-zonotope formulation.
    bool diagnostics = false;
    int trials = 5;
    int steps = 30;
    double cell_timeout_s = std::numeric_limits<double>::infinity();
    MpcConfig mpc = default_benchmark_config(2);
    SolverSettings solver;
};

struct BenchCell {
    std::string map;
    std::string variant;
    Formulation formulation = Formulation::hz;
    bool warm = false;
    bool na = false;
    int samples = 0;
    double avg_seconds = 0.0;
    double max_seconds = 0.0;
    double total_seconds = 0.0;
    double avg_iterations = 0.0;
    int max_iterations = 0;
    double avg_qp_seconds = 0.0;
};

/// Closed-loop runs per (map, variant) cell; statistics exclude step 0.
std::vector<BenchCell> run_bench(const std::vector<Scenario>& suite, const BenchOptions& opt);

std::string bench_csv(const std::vector<BenchCell>& cells);
std::string bench_json(const std::vector<BenchCell>& cells);

}  // namespace zonomip
