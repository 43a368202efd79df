#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace zonomip {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Variables of one stage with box bounds lower <= z <= upper (the -I/+I rows
/// of G_k) and optional general rows Gg z <= wg.
struct QpStage {
    VectorXd P;  // diagonal of P_k
    VectorXd q;
    VectorXd lower;
    VectorXd upper;
    MatrixXd Gg;
    VectorXd wg;

    Index size() const { return q.size(); }
    Index num_general() const { return wg.size(); }
    Index num_inequalities() const { return 2 * q.size() + wg.size(); }
};

/// C z_k + D z_{k+1} + c = 0.
struct QpCoupling {
    MatrixXd C;
    MatrixXd D;
    VectorXd c;

    Index rows() const { return c.size(); }
};

/// min sum_k 0.5 z_k' P_k z_k + q_k' z_k + constant, couplings[k] linking
/// stages k and k+1.
struct QpProblem {
    std::vector<QpStage> stages;
    std::vector<QpCoupling> couplings;
    double constant = 0.0;

    Index num_variables() const;
    Index num_equalities() const;
    Index num_inequalities() const;
    /// Checks dimensions and finiteness; throws std::invalid_argument.
    void validate() const;
};

/// Wraps a single-block problem min 0.5 z'Pz + q'z s.t. E z = e, bounds, into
/// the staged form (one stage plus an empty terminal stage).
QpProblem single_stage_problem(const VectorXd& P, const VectorXd& q, const MatrixXd& E, const VectorXd& e,
                               const VectorXd& lower, const VectorXd& upper);

/// Objective of a stacked primal vector.
double qp_objective(const QpProblem& qp, const VectorXd& z);

struct QpSettings {
    double tol_feas = 1e-8;
    double tol_gap = 1e-8;
    int max_iter = 100;
    double step_fraction = 0.995;
    double centering_exponent = 3.0;
    double warm_shift = 1e-2;
    bool force_cholesky = false;
    double regularization = 1e-8;
    int refinement_steps = 3;
    /// When the iteration stalls or a factorization fails, the best iterate
    /// seen is still reported optimal if its residuals and mu are within
    /// this multiple of the tolerances.
    double stall_accept_factor = 100.0;
};

enum class QpStatus { optimal, max_iter, infeasible, numerical };

std::string to_string(QpStatus s);

struct IpmIterate {
    VectorXd z;
    VectorXd nu;
    VectorXd lambda;
    VectorXd s;

    double mu() const { return s.size() == 0 ? 0.0 : s.dot(lambda) / static_cast<double>(s.size()); }
};

struct QpStats {
    int iterations = 0;
    double flops = 0.0;
    double factor_seconds = 0.0;
    double total_seconds = 0.0;
};

struct QpResult {
    QpStatus status = QpStatus::numerical;
    double objective = 0.0;
    IpmIterate iterate;
    double residual_c = 0.0;
    double residual_e = 0.0;
    double residual_i = 0.0;
    QpStats stats;
};

struct Residuals {
    VectorXd rC;
    VectorXd rE;
    VectorXd rI;
    VectorXd rS;
};

struct NewtonStep {
    VectorXd dz;
    VectorXd dnu;
    VectorXd dlambda;
    VectorXd ds;
};

/// Per-stage factored Phi_k: a diagonal vector when the stage is pure box
/// form, a dense Cholesky factor otherwise.
struct PhiFactor {
    bool diagonal = true;
    VectorXd diag;
    Eigen::LLT<MatrixXd> llt;
    MatrixXd dense;  // Phi_k itself on the dense path

    MatrixXd solve(const MatrixXd& rhs) const;
    VectorXd solve(const VectorXd& rhs) const;
};

class NewtonWorkspace {
public:
    explicit NewtonWorkspace(const QpProblem& qp, bool force_cholesky = false);

    const QpProblem& problem() const { return *qp_; }
    Index z_offset(Index k) const { return z_off_[k]; }
    Index nu_offset(Index j) const { return nu_off_[j]; }
    Index ineq_offset(Index k) const { return in_off_[k]; }

    /// Phi_k = P_k + G_k' S_k^-1 Lambda_k G_k. Throws std::domain_error for a
    /// nonpositive diagonal entry that regularization cannot repair.
    PhiFactor factor_phi(Index k, const VectorXd& s, const VectorXd& lambda);

    /// Factors all Phi_k and the block-tridiagonal Y. Returns false when Y is
    /// not positive definite even after regularization.
    bool factor(const IpmIterate& it);

    /// Dense diagonal and super-diagonal blocks of Y from the current Phi_k.
    void assemble_Y();

    const std::vector<MatrixXd>& Y_diag() const { return y_diag_; }
    const std::vector<MatrixXd>& Y_upper() const { return y_upper_; }
    const PhiFactor& phi(Index k) const { return phi_[k]; }

    NewtonStep solve(const IpmIterate& it, const Residuals& r) const;

    /// solve() followed by iterative refinement against the unregularized
    /// Newton system, stopping once the error no longer decreases.
    NewtonStep solve_refined(const IpmIterate& it, const Residuals& r, int max_steps = 3) const;

    /// Proximal term added to every Phi_k diagonal entry.
    void set_regularization(double delta) { regularization_ = delta; }

    Residuals residuals(const IpmIterate& it) const;

    double flops() const { return flops_; }

    /// G z for a stacked primal vector.
    VectorXd inequality_values(const VectorXd& z) const;

private:
    VectorXd apply_C(const VectorXd& z) const;
    VectorXd apply_Ct(const VectorXd& nu) const;
    VectorXd apply_G(const VectorXd& z) const;
    VectorXd apply_Gt(const VectorXd& lambda) const;
    bool factor_Y();

    const QpProblem* qp_;
    bool force_cholesky_;
    std::vector<Index> z_off_, nu_off_, in_off_;
    std::vector<PhiFactor> phi_;
    std::vector<MatrixXd> y_diag_, y_upper_;
    std::vector<MatrixXd> l_diag_, l_sub_;  // block Cholesky: L_j, B_j = L_{j-1}^-1 Y_{j-1,j}
    double flops_ = 0.0;
    double regularization_ = 0.0;
};

/// Interior-point solve of qp. A warm iterate must match the problem sizes;
/// its s and lambda are shifted to at least settings.warm_shift.
QpResult solve_qp(const QpProblem& qp, const QpSettings& settings = {},
                  const std::optional<IpmIterate>& warm = std::nullopt);

}  // namespace zonomip
