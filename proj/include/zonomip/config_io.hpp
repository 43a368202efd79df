#pragma once

#include "zonomip/sim_harness.hpp"

#include <string>

namespace zonomip {

/// Everything a run reads from a config file: the MPC problem, formulation,
/// solver settings and the closed-loop block.
struct RunConfig {
    MpcConfig mpc = default_benchmark_config(2);
    double v_max = 1.0;
    double a_max = 1.0;
    Formulation formulation = Formulation::hz;
    SolverSettings solver;
    int steps = 60;
    SimMode mode = SimMode::converge_each_step;
    double t_max = 0.2;
    double d_max = 0.0;
    double loop_rate_hz = 5.0;
    double dynamics_rate_hz = 100.0;
    unsigned seed = 0;
    double goal_tolerance = 0.5;
    /// Overrides the scenario's kappa when set.
    std::optional<double> kappa;
};

/// Benchmark defaults for a map of dimension dim.
RunConfig default_run_config(int dim);

/// Overlays a config JSON document on default_run_config(dim). Blocks
/// "mpc", "solver" and "sim" plus a top-level "formulation"; unknown keys and
/// mistyped values throw std::invalid_argument. "inf" is accepted for
/// max_time_s and d_max.
RunConfig parse_run_config(const std::string& json_text, int dim);
RunConfig load_run_config(const std::string& path, int dim);

/// Effective configuration as a JSON object; parse_run_config of the result
/// reproduces it.
std::string run_config_json(const RunConfig& cfg);

SimConfig make_sim_config(const RunConfig& cfg, const Scenario& s);

Formulation parse_formulation(const std::string& name);

std::string read_text(const std::string& path);
/// Writes to path.tmp and renames it over path.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace zonomip
