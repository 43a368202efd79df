#include "zonomip/qp_ipm.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zonomip {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double max_step(const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
}

constexpr double kPhiFloor = 1e-300;
constexpr double kPhiRegularization = 1e-9;

}  // namespace

Index QpProblem::num_variables() const {
    Index n = 0;
    for (const auto& s : stages) n += s.size();
    return n;
}

Index QpProblem::num_equalities() const {
    Index n = 0;
    for (const auto& c : couplings) n += c.rows();
    return n;
}

Index QpProblem::num_inequalities() const {
    Index n = 0;
    for (const auto& s : stages) n += s.num_inequalities();
    return n;
}

void QpProblem::validate() const {
    if (stages.empty()) throw std::invalid_argument("QpProblem: no stages");
    if (couplings.size() + 1 != stages.size())
        throw std::invalid_argument("QpProblem: need exactly one coupling between consecutive stages");
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const auto& s = stages[k];
        const auto n = s.size();
        if (s.P.size() != n || s.lower.size() != n || s.upper.size() != n)
            throw std::invalid_argument("QpProblem: stage " + std::to_string(k) + " vector sizes differ");
        if (s.Gg.rows() != s.wg.size() || (s.wg.size() > 0 && s.Gg.cols() != n))
            throw std::invalid_argument("QpProblem: stage " + std::to_string(k) + " general rows malformed");
        if (!s.P.allFinite() || !s.q.allFinite() || !s.lower.allFinite() || !s.upper.allFinite() ||
            !s.Gg.allFinite() || !s.wg.allFinite())
            throw std::invalid_argument("QpProblem: stage " + std::to_string(k) + " has non-finite data");
        if ((s.P.array() < 0.0).any())
            throw std::invalid_argument("QpProblem: stage " + std::to_string(k) + " has negative P entries");
    }
    for (std::size_t j = 0; j < couplings.size(); ++j) {
        const auto& c = couplings[j];
        if (c.C.rows() != c.rows() || c.D.rows() != c.rows() || c.C.cols() != stages[j].size() ||
            c.D.cols() != stages[j + 1].size())
            throw std::invalid_argument("QpProblem: coupling " + std::to_string(j) + " dimension mismatch");
        if (!c.C.allFinite() || !c.D.allFinite() || !c.c.allFinite())
            throw std::invalid_argument("QpProblem: coupling " + std::to_string(j) + " has non-finite data");
    }
}

QpProblem single_stage_problem(const VectorXd& P, const VectorXd& q, const MatrixXd& E, const VectorXd& e,
                               const VectorXd& lower, const VectorXd& upper) {
    QpProblem qp;
    QpStage s0;
    s0.P = P;
    s0.q = q;
    s0.lower = lower;
    s0.upper = upper;
    s0.Gg.resize(0, q.size());
    s0.wg.resize(0);
    QpStage s1;
    s1.P.resize(0);
    s1.q.resize(0);
    s1.lower.resize(0);
    s1.upper.resize(0);
    s1.Gg.resize(0, 0);
    s1.wg.resize(0);
    QpCoupling c;
    c.C = E;
    c.D.resize(E.rows(), 0);
    c.c = -e;
    qp.stages = {s0, s1};
    qp.couplings = {c};
    return qp;
}

double qp_objective(const QpProblem& qp, const VectorXd& z) {
    double j = qp.constant;
    Index off = 0;
    for (const auto& s : qp.stages) {
        const auto zk = z.segment(off, s.size());
        j += 0.5 * zk.dot(s.P.cwiseProduct(zk)) + s.q.dot(zk);
        off += s.size();
    }
    return j;
}

std::string to_string(QpStatus s) {
    switch (s) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::max_iter: return "max_iter";
        case QpStatus::infeasible: return "infeasible";
        case QpStatus::numerical: return "numerical";
    }
    return "unknown";
}

MatrixXd PhiFactor::solve(const MatrixXd& rhs) const {
    if (diagonal) return diag.cwiseInverse().asDiagonal() * rhs;
    return llt.solve(rhs);
}

VectorXd PhiFactor::solve(const VectorXd& rhs) const {
    if (diagonal) return rhs.cwiseQuotient(diag);
    return llt.solve(rhs);
}

NewtonWorkspace::NewtonWorkspace(const QpProblem& qp, bool force_cholesky)
    : qp_(&qp), force_cholesky_(force_cholesky) {
    qp.validate();
    const auto K = qp.stages.size();
    z_off_.resize(K + 1, 0);
    in_off_.resize(K + 1, 0);
    for (std::size_t k = 0; k < K; ++k) {
        z_off_[k + 1] = z_off_[k] + qp.stages[k].size();
        in_off_[k + 1] = in_off_[k] + qp.stages[k].num_inequalities();
    }
    nu_off_.resize(qp.couplings.size() + 1, 0);
    for (std::size_t j = 0; j < qp.couplings.size(); ++j) nu_off_[j + 1] = nu_off_[j] + qp.couplings[j].rows();
    phi_.resize(K);
}

PhiFactor NewtonWorkspace::factor_phi(Index k, const VectorXd& s, const VectorXd& lambda) {
    const auto& st = qp_->stages[k];
    const auto n = st.size();
    const auto g = st.num_general();
    PhiFactor f;
    VectorXd d = st.P;
    d.array() += regularization_;
    d += lambda.head(n).cwiseQuotient(s.head(n));
    d += lambda.segment(n, n).cwiseQuotient(s.segment(n, n));
    for (Index i = 0; i < n; ++i) {
        if (!(d[i] > kPhiFloor)) {
            if (!(d[i] >= 0.0) || !std::isfinite(d[i]))
                throw std::domain_error("factor_phi: nonpositive diagonal entry in stage " + std::to_string(k));
            d[i] += kPhiRegularization;
        }
    }
    if (g == 0 && !force_cholesky_) {
        f.diagonal = true;
        f.diag = std::move(d);
        flops_ += static_cast<double>(n);
        return f;
    }
    f.diagonal = false;
    f.dense = d.asDiagonal();
    if (g > 0) {
        const VectorXd w = lambda.tail(g).cwiseQuotient(s.tail(g));
        f.dense.noalias() += st.Gg.transpose() * w.asDiagonal() * st.Gg;
        flops_ += 2.0 * static_cast<double>(g) * n * n;
    }
    f.llt.compute(f.dense);
    flops_ += static_cast<double>(n) * n * n / 3.0;
    if (f.llt.info() != Eigen::Success)
        throw std::domain_error("factor_phi: Phi not positive definite in stage " + std::to_string(k));
    return f;
}

void NewtonWorkspace::assemble_Y() {
    const auto J = qp_->couplings.size();
    y_diag_.assign(J, MatrixXd());
    y_upper_.assign(J > 0 ? J - 1 : 0, MatrixXd());
    auto sandwich = [this](const MatrixXd& A, const PhiFactor& f, const MatrixXd& B) -> MatrixXd {
        flops_ += 2.0 * static_cast<double>(A.rows()) * A.cols() * B.rows();
        if (f.diagonal) return A * f.diag.cwiseInverse().asDiagonal() * B.transpose();
        flops_ += 2.0 * static_cast<double>(A.cols()) * A.cols() * B.rows();
        return A * f.llt.solve(B.transpose());
    };
    for (std::size_t j = 0; j < J; ++j) {
        const auto& cj = qp_->couplings[j];
        y_diag_[j] = sandwich(cj.C, phi_[j], cj.C) + sandwich(cj.D, phi_[j + 1], cj.D);
        if (j + 1 < J) y_upper_[j] = sandwich(cj.D, phi_[j + 1], qp_->couplings[j + 1].C);
    }
}

bool NewtonWorkspace::factor_Y() {
    const auto J = y_diag_.size();
    double scale = 1.0;
    for (const auto& y : y_diag_)
        if (y.size() > 0) scale = std::max(scale, y.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 4; ++attempt) {
        const double delta = attempt == 0 ? 0.0 : scale * std::pow(10.0, -14 + 2 * attempt);
        l_diag_.assign(J, MatrixXd());
        l_sub_.assign(J, MatrixXd());
        bool ok = true;
        for (std::size_t j = 0; j < J && ok; ++j) {
            MatrixXd block = y_diag_[j];
            if (delta > 0.0) block.diagonal().array() += delta;
            if (j > 0) {
                l_sub_[j] = l_diag_[j - 1].triangularView<Eigen::Lower>().solve(y_upper_[j - 1]);
                block.noalias() -= l_sub_[j].transpose() * l_sub_[j];
                flops_ += static_cast<double>(block.rows()) * block.rows() * (l_sub_[j].rows() + block.rows());
            }
            Eigen::LLT<MatrixXd> llt(block);
            flops_ += static_cast<double>(block.rows()) * block.rows() * block.rows() / 3.0;
            if (llt.info() != Eigen::Success) {
                ok = false;
                break;
            }
            l_diag_[j] = llt.matrixL();
        }
        if (ok) return true;
    }
    return false;
}

bool NewtonWorkspace::factor(const IpmIterate& it) {
    const auto K = qp_->stages.size();
    for (std::size_t k = 0; k < K; ++k) {
        const auto m = qp_->stages[k].num_inequalities();
        phi_[k] = factor_phi(static_cast<Index>(k), it.s.segment(in_off_[k], m), it.lambda.segment(in_off_[k], m));
    }
    assemble_Y();
    return factor_Y();
}

VectorXd NewtonWorkspace::apply_C(const VectorXd& z) const {
    VectorXd out(nu_off_.back());
    for (std::size_t j = 0; j < qp_->couplings.size(); ++j) {
        const auto& cj = qp_->couplings[j];
        out.segment(nu_off_[j], cj.rows()) =
            cj.C * z.segment(z_off_[j], cj.C.cols()) + cj.D * z.segment(z_off_[j + 1], cj.D.cols());
    }
    return out;
}

VectorXd NewtonWorkspace::apply_Ct(const VectorXd& nu) const {
    VectorXd out = VectorXd::Zero(z_off_.back());
    for (std::size_t j = 0; j < qp_->couplings.size(); ++j) {
        const auto& cj = qp_->couplings[j];
        const auto v = nu.segment(nu_off_[j], cj.rows());
        out.segment(z_off_[j], cj.C.cols()) += cj.C.transpose() * v;
        out.segment(z_off_[j + 1], cj.D.cols()) += cj.D.transpose() * v;
    }
    return out;
}

VectorXd NewtonWorkspace::apply_G(const VectorXd& z) const {
    VectorXd out(in_off_.back());
    for (std::size_t k = 0; k < qp_->stages.size(); ++k) {
        const auto& st = qp_->stages[k];
        const auto n = st.size();
        const auto zk = z.segment(z_off_[k], n);
        auto o = out.segment(in_off_[k], st.num_inequalities());
        o.head(n) = -zk;
        o.segment(n, n) = zk;
        if (st.num_general() > 0) o.tail(st.num_general()) = st.Gg * zk;
    }
    return out;
}

VectorXd NewtonWorkspace::inequality_values(const VectorXd& z) const { return apply_G(z); }

VectorXd NewtonWorkspace::apply_Gt(const VectorXd& lambda) const {
    VectorXd out(z_off_.back());
    for (std::size_t k = 0; k < qp_->stages.size(); ++k) {
        const auto& st = qp_->stages[k];
        const auto n = st.size();
        const auto l = lambda.segment(in_off_[k], st.num_inequalities());
        auto o = out.segment(z_off_[k], n);
        o = l.segment(n, n) - l.head(n);
        if (st.num_general() > 0) o += st.Gg.transpose() * l.tail(st.num_general());
    }
    return out;
}

Residuals NewtonWorkspace::residuals(const IpmIterate& it) const {
    Residuals r;
    VectorXd Pz(z_off_.back()), q(z_off_.back()), w(in_off_.back()), c(nu_off_.back());
    for (std::size_t k = 0; k < qp_->stages.size(); ++k) {
        const auto& st = qp_->stages[k];
        const auto n = st.size();
        Pz.segment(z_off_[k], n) = st.P.cwiseProduct(it.z.segment(z_off_[k], n));
        q.segment(z_off_[k], n) = st.q;
        auto wk = w.segment(in_off_[k], st.num_inequalities());
        wk.head(n) = -st.lower;
        wk.segment(n, n) = st.upper;
        if (st.num_general() > 0) wk.tail(st.num_general()) = st.wg;
    }
    for (std::size_t j = 0; j < qp_->couplings.size(); ++j)
        c.segment(nu_off_[j], qp_->couplings[j].rows()) = qp_->couplings[j].c;
    r.rC = Pz + q + apply_Ct(it.nu) + apply_Gt(it.lambda);
    r.rE = apply_C(it.z) + c;
    r.rI = apply_G(it.z) - w + it.s;
    r.rS = it.s.cwiseProduct(it.lambda);
    return r;
}

NewtonStep NewtonWorkspace::solve(const IpmIterate& it, const Residuals& r) const {
    const VectorXd rt = r.rC + apply_Gt((it.lambda.cwiseProduct(r.rI) - r.rS).cwiseQuotient(it.s));
    VectorXd phi_inv_rt(z_off_.back());
    for (std::size_t k = 0; k < qp_->stages.size(); ++k) {
        const auto n = qp_->stages[k].size();
        phi_inv_rt.segment(z_off_[k], n) = phi_[k].solve(VectorXd(rt.segment(z_off_[k], n)));
    }
    const VectorXd beta = r.rE - apply_C(phi_inv_rt);

    // Y dnu = beta by block forward and back substitution.
    const auto J = qp_->couplings.size();
    std::vector<VectorXd> y(J);
    for (std::size_t j = 0; j < J; ++j) {
        VectorXd rhs = beta.segment(nu_off_[j], qp_->couplings[j].rows());
        if (j > 0) rhs.noalias() -= l_sub_[j].transpose() * y[j - 1];
        y[j] = l_diag_[j].triangularView<Eigen::Lower>().solve(rhs);
    }
    NewtonStep d;
    d.dnu.resize(nu_off_.back());
    for (std::size_t jj = J; jj-- > 0;) {
        VectorXd rhs = y[jj];
        if (jj + 1 < J) rhs.noalias() -= l_sub_[jj + 1] * d.dnu.segment(nu_off_[jj + 1], qp_->couplings[jj + 1].rows());
        d.dnu.segment(nu_off_[jj], rhs.size()) = l_diag_[jj].transpose().triangularView<Eigen::Upper>().solve(rhs);
    }

    const VectorXd t = rt + apply_Ct(d.dnu);
    d.dz.resize(z_off_.back());
    for (std::size_t k = 0; k < qp_->stages.size(); ++k) {
        const auto n = qp_->stages[k].size();
        d.dz.segment(z_off_[k], n) = -phi_[k].solve(VectorXd(t.segment(z_off_[k], n)));
    }
    d.ds = -r.rI - apply_G(d.dz);
    d.dlambda = (-r.rS - it.lambda.cwiseProduct(d.ds)).cwiseQuotient(it.s);
    return d;
}

NewtonStep NewtonWorkspace::solve_refined(const IpmIterate& it, const Residuals& r, int max_steps) const {
    NewtonStep d = solve(it, r);
    auto kkt_error = [&](const NewtonStep& x) {
        Residuals e;
        VectorXd Pdz(z_off_.back());
        for (std::size_t k = 0; k < qp_->stages.size(); ++k) {
            const auto n = qp_->stages[k].size();
            Pdz.segment(z_off_[k], n) = qp_->stages[k].P.cwiseProduct(x.dz.segment(z_off_[k], n));
        }
        e.rC = Pdz + apply_Ct(x.dnu) + apply_Gt(x.dlambda) + r.rC;
        e.rE = apply_C(x.dz) + r.rE;
        e.rI = apply_G(x.dz) + x.ds + r.rI;
        e.rS = it.s.cwiseProduct(x.dlambda) + it.lambda.cwiseProduct(x.ds) + r.rS;
        return e;
    };
    auto size = [](const Residuals& e) {
        return std::max({inf_norm(e.rC), inf_norm(e.rE), inf_norm(e.rI), inf_norm(e.rS)});
    };
    Residuals e = kkt_error(d);
    double err = size(e);
    for (int step = 0; step < max_steps && err > 0.0; ++step) {
        const NewtonStep c = solve(it, e);
        NewtonStep t = d;
        t.dz += c.dz;
        t.dnu += c.dnu;
        t.dlambda += c.dlambda;
        t.ds += c.ds;
        Residuals et = kkt_error(t);
        const double err_t = size(et);
        if (!(err_t < err)) break;
        d = std::move(t);
        e = std::move(et);
        err = err_t;
    }
    return d;
}

namespace {

bool bounds_contradictory(const QpProblem& qp) {
    for (const auto& s : qp.stages)
        if ((s.lower.array() > s.upper.array()).any()) return true;
    return false;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpSettings& settings, const std::optional<IpmIterate>& warm) {
    const auto t0 = Clock::now();
    QpResult res;
    NewtonWorkspace ws(qp, settings.force_cholesky);
    ws.set_regularization(settings.regularization);
    const Index nz = qp.num_variables();
    const Index ne = qp.num_equalities();
    const Index ni = qp.num_inequalities();

    if (bounds_contradictory(qp)) {
        res.status = QpStatus::infeasible;
        res.iterate.z = VectorXd::Zero(nz);
        res.stats.total_seconds = seconds_since(t0);
        return res;
    }

    VectorXd w(ni);
    for (std::size_t k = 0; k < qp.stages.size(); ++k) {
        const auto& st = qp.stages[k];
        const auto n = st.size();
        auto wk = w.segment(ws.ineq_offset(k), st.num_inequalities());
        wk.head(n) = -st.lower;
        wk.segment(n, n) = st.upper;
        if (st.num_general() > 0) wk.tail(st.num_general()) = st.wg;
    }

    IpmIterate it;
    double factor_time = 0.0;
    auto timed_factor = [&](const IpmIterate& x) {
        const auto tf = Clock::now();
        bool ok = false;
        try {
            ok = ws.factor(x);
        } catch (const std::domain_error&) {
            ok = false;
        }
        factor_time += seconds_since(tf);
        return ok;
    };

    if (warm) {
        if (warm->z.size() != nz || warm->nu.size() != ne || warm->lambda.size() != ni || warm->s.size() != ni)
            throw std::invalid_argument("solve_qp: warm iterate sizes do not match the problem");
        it = *warm;
        it.s = it.s.cwiseMax(settings.warm_shift);
        it.lambda = it.lambda.cwiseMax(settings.warm_shift);
    } else {
        it.z.resize(nz);
        for (std::size_t k = 0; k < qp.stages.size(); ++k) {
            const auto& st = qp.stages[k];
            it.z.segment(ws.z_offset(k), st.size()) = VectorXd::Zero(st.size()).cwiseMax(st.lower).cwiseMin(st.upper);
        }
        it.nu = VectorXd::Zero(ne);
        it.s = (w - ws.inequality_values(it.z)).cwiseMax(1.0);
        it.lambda = VectorXd::Ones(ni);
        if (timed_factor(it)) {
            const auto r = ws.residuals(it);
            const auto d = ws.solve(it, r);
            if (d.dz.allFinite() && d.dnu.allFinite() && d.ds.allFinite() && d.dlambda.allFinite()) {
                it.z += d.dz;
                it.nu += d.dnu;
                it.s = (it.s + d.ds).cwiseAbs().cwiseMax(1.0);
                it.lambda = (it.lambda + d.dlambda).cwiseAbs().cwiseMax(1.0);
            }
        }
    }

    VectorXd qv(nz), cv(ne);
    for (std::size_t k = 0; k < qp.stages.size(); ++k) qv.segment(ws.z_offset(k), qp.stages[k].size()) = qp.stages[k].q;
    for (std::size_t j = 0; j < qp.couplings.size(); ++j) cv.segment(ws.nu_offset(j), qp.couplings[j].rows()) = qp.couplings[j].c;
    const double qscale = inf_norm(qv);
    const double cscale = inf_norm(cv);

    std::vector<double> mu_hist;
    std::vector<double> primal_hist;
    std::vector<double> merit_hist;
    res.status = QpStatus::max_iter;
    IpmIterate best;
    double best_merit = std::numeric_limits<double>::infinity();
    std::array<double, 3> best_res{};
    int iter = 0;
    for (;; ++iter) {
        const auto r = ws.residuals(it);
        const double mu = it.mu();
        // Residuals are measured relative to the magnitude of the terms they sum.
        const double dual_scale = 1.0 + std::max(qscale, inf_norm(r.rC - qv));
        const double eq_scale = 1.0 + std::max(cscale, inf_norm(r.rE - cv));
        const double rc = inf_norm(r.rC) / dual_scale;
        const double re = inf_norm(r.rE) / eq_scale;
        double ri = 0.0;
        for (Index i = 0; i < ni; ++i) ri = std::max(ri, std::abs(r.rI[i]) / (1.0 + std::abs(w[i])));
        res.residual_c = rc;
        res.residual_e = re;
        res.residual_i = ri;
        const double primal = std::max(re, ri);
        const double merit = std::max({rc / settings.tol_feas, primal / settings.tol_feas, mu / settings.tol_gap});
        if (merit < best_merit) {
            best_merit = merit;
            best = it;
            best_res = {rc, re, ri};
        }
        if (rc <= settings.tol_feas && primal <= settings.tol_feas && mu <= settings.tol_gap) {
            res.status = QpStatus::optimal;
            break;
        }
        if (iter >= settings.max_iter) {
            res.status = QpStatus::max_iter;
            break;
        }
        mu_hist.push_back(mu);
        primal_hist.push_back(primal);
        merit_hist.push_back(std::max(rc, primal));
        const auto h = mu_hist.size();
        if (h > 5) {
            // mu may rise while an infeasible start is repaired; only a
            // joint stall of mu and the residuals counts.
            const bool mu_stalled = mu > settings.tol_gap && mu > 0.99 * mu_hist[h - 6] &&
                                    merit_hist[h - 1] > 0.99 * merit_hist[h - 6];
            const bool res_stalled = mu <= settings.tol_gap && merit_hist[h - 1] > 0.99 * merit_hist[h - 6];
            if (mu_stalled || res_stalled) {
                res.status = primal > settings.tol_feas * settings.stall_accept_factor ? QpStatus::infeasible
                                                                                       : QpStatus::numerical;
                break;
            }
        }
        if (inf_norm(it.lambda) > 1e14 * (1.0 + qscale) && primal > settings.tol_feas) {
            res.status = QpStatus::infeasible;
            break;
        }
        if (!timed_factor(it)) {
            res.status = QpStatus::numerical;
            break;
        }

        // Predictor.
        const auto aff = ws.solve_refined(it, r, settings.refinement_steps);
        const double a_aff = std::min(max_step(it.s, aff.ds), max_step(it.lambda, aff.dlambda));
        const double mu_aff = ni == 0 ? 0.0
                                      : (it.s + a_aff * aff.ds).dot(it.lambda + a_aff * aff.dlambda) /
                                            static_cast<double>(ni);
        const double sigma = mu > 0.0 ? std::pow(std::max(0.0, mu_aff / mu), settings.centering_exponent) : 0.0;

        // Corrector.
        Residuals rc_rhs = r;
        rc_rhs.rS = r.rS + aff.ds.cwiseProduct(aff.dlambda) - VectorXd::Constant(ni, sigma * mu);
        const auto d = ws.solve_refined(it, rc_rhs, settings.refinement_steps);
        if (!d.dz.allFinite() || !d.dnu.allFinite() || !d.ds.allFinite() || !d.dlambda.allFinite()) {
            res.status = QpStatus::numerical;
            break;
        }
        const double a_max = std::min(max_step(it.s, d.ds), max_step(it.lambda, d.dlambda));
        const double alpha = std::min(1.0, settings.step_fraction * a_max);
        it.z += alpha * d.dz;
        it.nu += alpha * d.dnu;
        it.s += alpha * d.ds;
        it.lambda += alpha * d.dlambda;
        // Keep strict interiority against rounding.
        it.s = it.s.cwiseMax(std::numeric_limits<double>::min());
        it.lambda = it.lambda.cwiseMax(std::numeric_limits<double>::min());
    }
    if (res.status != QpStatus::optimal && res.status != QpStatus::infeasible && best_merit <= settings.stall_accept_factor) {
        it = std::move(best);
        res.residual_c = best_res[0];
        res.residual_e = best_res[1];
        res.residual_i = best_res[2];
        res.status = QpStatus::optimal;
    }
    res.iterate = std::move(it);
    res.objective = qp_objective(qp, res.iterate.z);
    res.stats.iterations = iter;
    res.stats.flops = ws.flops();
    res.stats.factor_seconds = factor_time;
    res.stats.total_seconds = seconds_since(t0);
    return res;
}

}  // namespace zonomip
