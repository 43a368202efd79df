#pragma once

#include "zonomip/map_ingest.hpp"
#include "zonomip/mpc_formulation.hpp"
#include "zonomip/qp_ipm.hpp"
#include "zonomip/reachability.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace zonomip {

struct SolverSettings {
    double eps_a = 0.1;  // absolute
    double eps_r = 0.01; // relative
    int max_iter = 100000;
    double max_time_s = std::numeric_limits<double>::infinity();
    int threads = 1;
    bool warm_start = true;
    /// Keep searching past max_time_s until the first incumbent exists.
    bool require_incumbent = false;
    QpSettings qp;

    void validate() const;
};

enum class MiqpStatus { optimal, tol_reached, time_limit, iter_limit, infeasible };

std::string to_string(MiqpStatus s);

/// |j+ - j-| < eps_a or |j+ - j-| < eps_r |j+|; false without an incumbent.
bool converged(double j_plus, double j_minus, double eps_a, double eps_r);

/// |j+ - j-| / |j+|, +inf when undefined.
double optimality_gap(double j_plus, double j_minus);

/// Candidate region sets r_0..r_N (sorted) with the bound inherited from the
/// parent.
struct Node {
    std::vector<std::vector<int>> regions;
    double bound = -std::numeric_limits<double>::infinity();
    std::uint64_t seq = 0;
    /// Built by warm_start_nodes.
    bool warm = false;

    /// Number of stages with a single candidate region.
    int depth() const;
    bool any_empty() const;
};

/// Best-bound store with a last-in first-out priority lane. Equal bounds pop
/// in insertion order.
class NodeStore {
public:
    void push(Node n);
    void push_top(Node n);
    std::optional<Node> pop();
    /// Drops queued nodes with bound > j_plus; returns how many.
    std::size_t prune(double j_plus);
    std::size_t size() const { return ordered_.size() + lane_.size(); }
    bool empty() const { return size() == 0; }
    /// Smallest bound over both lanes, +inf when empty.
    double min_bound() const;

private:
    std::map<std::pair<double, std::uint64_t>, Node> ordered_;
    std::vector<Node> lane_;
    std::uint64_t next_seq_ = 0;
};

/// Node-specific QP: template columns outside the node's region sets and the
/// continuous factors they force to zero are removed.
struct NodeProblem {
    QpProblem qp;
    /// Template column indices kept in each stage.
    std::vector<std::vector<Index>> kept;
    std::vector<Index> template_offset;
    Index template_size = 0;
    /// A choice row lost all of its variables, or an emptied row kept a
    /// nonzero right-hand side.
    bool infeasible = false;

    /// Full template-sized vector with removed columns at zero.
    VectorXd scatter(const VectorXd& z) const;
};

struct Violation {
    bool violated = false;
    /// Chosen region per stage, filled for k < k_v (all stages when not violated).
    std::vector<int> regions;
    int k = -1;
};

struct NodeStats {
    int depth = 0;
    int qp_iterations = 0;
    double qp_seconds = 0.0;
    double objective = 0.0;
    QpStatus status = QpStatus::numerical;
};

struct MiqpResult {
    MiqpStatus status = MiqpStatus::infeasible;
    VectorXd z;  // template layout
    double j_plus = std::numeric_limits<double>::infinity();
    double j_minus = -std::numeric_limits<double>::infinity();
    std::vector<int> regions;  // incumbent region per stage
    int iterations = 0;
    double gap = std::numeric_limits<double>::infinity();
    double seconds = 0.0;
    /// Node QPs that ended neither optimal nor infeasible; those nodes are pruned.
    int qp_failures = 0;
    std::vector<NodeStats> nodes;
    /// (j+, j-) after each iteration.
    std::vector<std::pair<double, double>> bound_history;

    double average_qp_seconds() const;
};

class MiqpSolver {
public:
    /// regions are the H-representations of the map's free regions in binary
    /// factor order. The tables must match the map; without a point table the
    /// root starts from all regions.
    MiqpSolver(const MultiStageMiqp& miqp, std::vector<RegionHrep> regions, const ReachTables& tables);

    const MultiStageMiqp& problem() const { return *miqp_; }
    int horizon() const { return miqp_->horizon(); }
    int num_regions() const { return miqp_->num_regions; }

    /// r_k = R_p(k), made consistent.
    Node root() const;

    /// r_k <- r_k and (and over k_o of the union of R_r(|k - k_o|, r), r in
    /// r_{k_o}), repeated to a fixed point. Returns false when some r_k empties.
    bool make_consistent(Node& n) const;

    NodeProblem apply_binvars(const Node& n) const;

    /// Scans stages with more than one candidate; singleton stages keep their
    /// region. Membership uses the H-representations at tol 1e-6 with the
    /// lowest containing index chosen.
    Violation first_cons_violation(const Node& n, const VectorXd& z_full) const;

    /// Template objective of z with xi_b set to the indicator of regions and
    /// the continuous factors that selection eliminates set to zero.
    double approx_cost(const VectorXd& z_full, const std::vector<int>& regions) const;

    /// Children fixing r_k to its largest relaxed binary and removing it;
    /// inconsistent children are dropped.
    std::vector<Node> branch_at_k(const Node& n, const VectorXd& z_full, int k) const;

    /// branch_at_k at the stage (with more than one candidate) whose binaries
    /// are most fractional. Requires such a stage.
    std::vector<Node> branch_mf(const Node& n, const VectorXd& z_full) const;

    /// One node [r_1 .. r_N, r_i] per r_i in R_r(1, r_N), intersected with the
    /// point table and made consistent. The node with r_i = r_N comes first.
    std::vector<Node> warm_start_nodes(const std::vector<int>& previous) const;

    /// With a warm sequence, warm nodes are evaluated in order ahead of the
    /// root until one gives an incumbent; the remaining ones are dropped.
    MiqpResult solve(const SolverSettings& settings, const std::optional<std::vector<int>>& warm = std::nullopt) const;

private:
    using Mask = std::vector<std::uint64_t>;
    const Mask& reach_mask(int steps, int r) const;
    std::vector<std::vector<char>> eliminate(std::vector<std::vector<char>> removed) const;
    std::vector<std::vector<char>> removed_binaries(const std::vector<std::vector<int>>& regions) const;

    const MultiStageMiqp* miqp_;
    std::vector<RegionHrep> regions_;
    const ReachTables* tables_;
    std::vector<std::vector<Mask>> masks_;  // [steps][region]
    std::vector<std::vector<char>> nonneg_;
};

MiqpResult solve_miqp(const MultiStageMiqp& miqp, const std::vector<RegionHrep>& regions, const ReachTables& tables,
                      const SolverSettings& settings, const std::optional<std::vector<int>>& warm = std::nullopt);

}  // namespace zonomip
