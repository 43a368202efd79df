#include "zonomip/set_queries.hpp"

#include "zonomip/qp_ipm.hpp"

#include <Eigen/QR>

#include <cmath>
#include <string>

namespace zonomip {

namespace {

constexpr double kLpRegularization = 1e-9;

double factor_lower(FactorDomain d) { return d == FactorDomain::unit ? 0.0 : -1.0; }

QpSettings query_settings() {
    QpSettings s;
    s.tol_feas = 1e-10;
    s.tol_gap = 1e-10;
    s.max_iter = 200;
    return s;
}

// Moves a nearly feasible factor vector onto A xi = b with the box respected,
// correcting only the coordinates that are not at a bound.
VectorXd polish(const MatrixXd& E, const VectorXd& e, VectorXd xi, double lo) {
    xi = xi.cwiseMax(lo).cwiseMin(1.0);
    for (int pass = 0; pass < 3; ++pass) {
        const VectorXd r = e - E * xi;
        if (r.size() == 0 || r.cwiseAbs().maxCoeff() < 1e-15) break;
        std::vector<Index> free;
        for (Index i = 0; i < xi.size(); ++i)
            if (xi[i] > lo + 1e-9 && xi[i] < 1.0 - 1e-9) free.push_back(i);
        if (free.empty()) break;
        MatrixXd Ef(E.rows(), static_cast<Index>(free.size()));
        for (std::size_t j = 0; j < free.size(); ++j) Ef.col(j) = E.col(free[j]);
        const VectorXd d = Ef.completeOrthogonalDecomposition().solve(r);
        for (std::size_t j = 0; j < free.size(); ++j) xi[free[j]] += d[j];
        xi = xi.cwiseMax(lo).cwiseMin(1.0);
    }
    return xi;
}

}  // namespace

double support(const ConstrainedZonotoped& s, const VectorXd& direction) {
    if (direction.size() != s.dim()) throw std::invalid_argument("support: direction dimension mismatch");
    if (direction.size() == 0 || direction.cwiseAbs().maxCoeff() == 0.0)
        throw std::domain_error("support: zero direction");
    const auto ng = s.num_generators();
    if (ng == 0) {
        if (s.b.size() > 0 && s.b.cwiseAbs().maxCoeff() > 1e-8) throw EmptySetError("support: set is empty");
        return direction.dot(s.c);
    }
    const double lo = factor_lower(s.domain);
    const auto qp = single_stage_problem(VectorXd::Constant(ng, kLpRegularization), -(s.G.transpose() * direction),
                                         s.A, s.b, VectorXd::Constant(ng, lo), VectorXd::Ones(ng));
    const auto res = solve_qp(qp, query_settings());
    if (res.status == QpStatus::infeasible) throw EmptySetError("support: set is empty");
    if (res.status != QpStatus::optimal && std::max(res.residual_e, res.residual_i) > 1e-7)
        throw std::runtime_error("support: LP did not converge (" + to_string(res.status) + ")");
    const VectorXd xi = res.iterate.z.head(ng);
    return direction.dot(s.G * xi + s.c);
}

bool contains(const ConstrainedZonotope<double>& s, const VectorXd& point, double tol) {
    if (point.size() != s.dim()) throw std::invalid_argument("contains: point dimension mismatch");
    const auto ng = s.num_generators();
    const auto nc = s.num_constraints();
    const auto n = s.dim();
    MatrixXd E(nc + n, ng);
    E << s.A, s.G;
    VectorXd e(nc + n);
    e << s.b, point - s.c;
    const double lo = factor_lower(s.domain);
    if (ng == 0) return e.size() == 0 || e.cwiseAbs().maxCoeff() <= tol;

    const auto m = nc + n;
    MatrixXd Ed(m, ng + m);
    Ed << E, MatrixXd::Identity(m, m);
    VectorXd P(ng + m), lower(ng + m), upper(ng + m);
    P << VectorXd::Constant(ng, kLpRegularization), VectorXd::Ones(m);
    const double big = 10.0 * (1.0 + (e.size() ? e.cwiseAbs().maxCoeff() : 0.0) +
                               (E.size() ? E.cwiseAbs().rowwise().sum().maxCoeff() : 0.0));
    lower << VectorXd::Constant(ng, lo), VectorXd::Constant(m, -big);
    upper << VectorXd::Ones(ng), VectorXd::Constant(m, big);
    const auto qp = single_stage_problem(P, VectorXd::Zero(ng + m), Ed, e, lower, upper);
    const auto res = solve_qp(qp, query_settings());
    const VectorXd xi = polish(E, e, res.iterate.z.head(ng), lo);
    return (E * xi - e).cwiseAbs().maxCoeff() <= tol;
}

bool contains(const HybridZonotoped& s, const VectorXd& point, double tol) {
    const auto nb = s.num_binary();
    if (nb > 20) throw std::invalid_argument("contains: too many binary factors to enumerate");
    const double lo = factor_lower(s.domain);
    for (long mask = 0; mask < (1L << nb); ++mask) {
        VectorXd xb(nb);
        for (Index i = 0; i < nb; ++i) xb[i] = (mask >> i) & 1 ? 1.0 : lo;
        const ConstrainedZonotoped cz(s.Gc, s.Gb * xb + s.c, s.Ac, s.b - s.Ab * xb, s.domain);
        if (contains(cz, point, tol)) return true;
    }
    return false;
}

}  // namespace zonomip
