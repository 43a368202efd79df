#pragma once

#include "zonomip/map_ingest.hpp"
#include "zonomip/qp_ipm.hpp"
#include "zonomip/set_core.hpp"

#include <optional>
#include <vector>

namespace zonomip {

/// A constrained-zonotope constraint on a linear image of the state or input:
/// map * v in set, softened with slack bounded by sigma_max and weighted by W.
/// Zero sigma_max disables the slack columns.
struct SoftSetConstraint {
    ConstrainedZonotoped set;  // unit form
    MatrixXd map;
    VectorXd W;
    VectorXd sigma_max;
};

struct MpcConfig {
    MatrixXd A;
    MatrixXd B;
    MatrixXd H;  // position output y = H x
    int N = 15;
    double dt = 1.0;
    VectorXd Q;
    VectorXd R;
    VectorXd QN;
    VectorXd x_ref;
    std::optional<SoftSetConstraint> state_set;
    std::optional<SoftSetConstraint> input_set;
    std::optional<SoftSetConstraint> terminal_set;
    VectorXd x_lower, x_upper;
    VectorXd u_lower, u_upper;
    VectorXd xN_lower, xN_upper;
    VectorXd W_hz;          // free-space slack weight (diagonal)
    VectorXd sigma_hz_max;  // free-space slack bound
    bool fix_first_input = false;
    VectorXd x0;
    VectorXd u0;

    int nx() const { return static_cast<int>(A.rows()); }
    int nu() const { return static_cast<int>(B.cols()); }
    int ny() const { return static_cast<int>(H.rows()); }
    /// Throws std::invalid_argument on dimension mismatches, nonfinite or
    /// inverted bounds, or negative cost weights.
    void validate() const;
};

struct Range {
    Index start = 0;
    Index size = 0;
    Index end() const { return start + size; }
};

/// Stage variable ordering [x, u, xi_cx, xi_cu, sigma_cx, sigma_cu, xi_c, xi_b, sigma].
struct StageLayout {
    Range x, u, xi_cx, xi_cu, sig_cx, sig_cu, xi_c, xi_b, sig;
    Index size = 0;
};

enum class Formulation { convex, hz, bigm };

struct RowRef {
    Index coupling = 0;
    Index row = 0;
};

struct MultiStageMiqp {
    QpProblem qp;
    std::vector<StageLayout> layout;
    Formulation formulation = Formulation::convex;
    int num_regions = 0;
    VectorXd region_costs;
    /// Choice row 1'xi_b = 1 of every stage.
    std::vector<RowRef> choice_rows;
    RowRef x0_rows;
    std::optional<RowRef> u0_rows;
    bool fix_first_input = false;
    MatrixXd H;
    int nx = 0;
    int nu = 0;

    int horizon() const { return static_cast<int>(qp.stages.size()) - 1; }
};

MultiStageMiqp build_convex_problem(const MpcConfig& cfg);

/// Appends per-stage [xi_c, xi_b, sigma] with the free-space rows
/// [H 0]x - Gc xi_c - Gb xi_b + sigma = c and Ac xi_c + Ab xi_b = b.
MultiStageMiqp attach_hybzono(const MpcConfig& cfg, const MultiStageMiqp& base, const HybridZonotoped& hz,
                              const VectorXd& region_costs);

/// Appends per-stage [xi_b, sigma] with the choice row and disjunctive
/// general rows a'(H x + sigma) + M xi_b,i <= h + M.
MultiStageMiqp attach_bigm(const MpcConfig& cfg, const MultiStageMiqp& base, const BigMEncoding& enc,
                           const VectorXd& region_costs);

/// Rewrites the right-hand sides of the initial-condition rows only.
void update_initial_state(MultiStageMiqp& miqp, const VectorXd& x0, const std::optional<VectorXd>& u0 = std::nullopt);

/// Dense G_k, w_k of a stage: [-I; I; Gg] and [-lower; upper; wg].
std::pair<MatrixXd, VectorXd> stage_inequalities(const QpStage& stage);

struct Trajectory {
    std::vector<VectorXd> x;  // N+1 states
    std::vector<VectorXd> u;  // N inputs
};

/// Extracts states and inputs from a stacked primal vector.
Trajectory extract_trajectory(const MultiStageMiqp& miqp, const VectorXd& z);

/// Positions y_k = H x_k.
std::vector<VectorXd> extract_positions(const MultiStageMiqp& miqp, const VectorXd& z);

/// Relaxed binaries of stage k.
VectorXd extract_binaries(const MultiStageMiqp& miqp, const VectorXd& z, int k);

/// Objective of the MPC problem evaluated from its ingredients:
/// sum_k 1/2 (x_k - x_r)'Q(x_k - x_r) + 1/2 u_k'R u_k + 1/2 slack'W slack + q^r(region_k),
/// with Q_N at k = N. Slacks are read from z through the layout.
double mpc_objective(const MpcConfig& cfg, const MultiStageMiqp& miqp, const VectorXd& z,
                     const std::vector<int>& regions);

}  // namespace zonomip
