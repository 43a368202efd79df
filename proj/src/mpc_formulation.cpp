#include "zonomip/mpc_formulation.hpp"

#include <stdexcept>
#include <string>

namespace zonomip {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::vector<Index> positive_entries(const VectorXd& v) {
    std::vector<Index> idx;
    for (Index i = 0; i < v.size(); ++i)
        if (v[i] > 0.0) idx.push_back(i);
    return idx;
}

VectorXd select(const VectorXd& v, const std::vector<Index>& idx) {
    VectorXd out(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
    return out;
}

void check_set(const std::optional<SoftSetConstraint>& s, Index cols, const std::string& what) {
    if (!s) return;
    if (s->set.domain != FactorDomain::unit) fail(what + ": set must be in unit form");
    if (s->map.cols() != cols) fail(what + ": map has wrong column count");
    if (s->map.rows() != s->set.dim()) fail(what + ": map rows must equal set dimension");
    if (s->W.size() != s->set.dim() || s->sigma_max.size() != s->set.dim())
        fail(what + ": slack weight/bound length must equal set dimension");
    if ((s->W.array() < 0.0).any() || (s->sigma_max.array() < 0.0).any() || !s->W.allFinite() ||
        !s->sigma_max.allFinite())
        fail(what + ": slack weights and bounds must be finite and nonnegative");
}

void check_box(const VectorXd& lo, const VectorXd& hi, Index n, const std::string& what) {
    if (lo.size() != n || hi.size() != n) fail(what + ": bound length mismatch");
    if (!lo.allFinite() || !hi.allFinite()) fail(what + ": bounds must be finite");
    if ((lo.array() > hi.array()).any()) fail(what + ": lower bound exceeds upper bound");
}

void append_vars(QpStage& st, const VectorXd& P, const VectorXd& q, const VectorXd& lo, const VectorXd& hi) {
    const auto n0 = st.size();
    const auto add = q.size();
    st.P.conservativeResize(n0 + add);
    st.q.conservativeResize(n0 + add);
    st.lower.conservativeResize(n0 + add);
    st.upper.conservativeResize(n0 + add);
    st.P.tail(add) = P;
    st.q.tail(add) = q;
    st.lower.tail(add) = lo;
    st.upper.tail(add) = hi;
    MatrixXd g = MatrixXd::Zero(st.Gg.rows(), n0 + add);
    if (st.Gg.rows() > 0) g.leftCols(n0) = st.Gg;
    st.Gg = std::move(g);
}

// Grows a coupling by rows and by trailing columns on both sides.
void widen(QpCoupling& cp, Index add_rows, Index add_c, Index add_d) {
    MatrixXd C = MatrixXd::Zero(cp.rows() + add_rows, cp.C.cols() + add_c);
    MatrixXd D = MatrixXd::Zero(cp.rows() + add_rows, cp.D.cols() + add_d);
    C.topLeftCorner(cp.C.rows(), cp.C.cols()) = cp.C;
    D.topLeftCorner(cp.D.rows(), cp.D.cols()) = cp.D;
    VectorXd c = VectorXd::Zero(cp.rows() + add_rows);
    c.head(cp.rows()) = cp.c;
    cp.C = std::move(C);
    cp.D = std::move(D);
    cp.c = std::move(c);
}

struct StageSets {
    const SoftSetConstraint* state = nullptr;
    const SoftSetConstraint* input = nullptr;
};

StageSets sets_at(const MpcConfig& cfg, int k) {
    StageSets s;
    if (k < cfg.N) {
        if (cfg.state_set) s.state = &*cfg.state_set;
        if (cfg.input_set) s.input = &*cfg.input_set;
    } else if (cfg.terminal_set) {
        s.state = &*cfg.terminal_set;
    }
    return s;
}

// Rows of a softened set constraint on one stage's variables, written into
// the given block (C for the stage's own coupling, D for the terminal stage).
Index set_rows(const SoftSetConstraint& s, Range v, Range xi, Range sig, MatrixXd& M, VectorXd& c, Index row) {
    const auto n = s.set.dim();
    const auto nc = s.set.num_constraints();
    M.block(row, v.start, n, v.size) = s.map;
    M.block(row, xi.start, n, xi.size) = -s.set.G;
    const auto sel = positive_entries(s.sigma_max);
    for (std::size_t i = 0; i < sel.size(); ++i) M(row + sel[i], sig.start + static_cast<Index>(i)) = 1.0;
    c.segment(row, n) = -s.set.c;
    row += n;
    M.block(row, xi.start, nc, xi.size) = s.set.A;
    c.segment(row, nc) = -s.set.b;
    return row + nc;
}

Index set_row_count(const SoftSetConstraint* s) { return s ? s->set.dim() + s->set.num_constraints() : 0; }

}  // namespace

void MpcConfig::validate() const {
    const Index n = A.rows();
    if (A.cols() != n || n == 0) fail("mpc config: A must be square and nonempty");
    if (B.rows() != n || B.cols() == 0) fail("mpc config: B must have A's row count");
    if (H.cols() != n || H.rows() == 0) fail("mpc config: H must have A's column count");
    if (N < 1) fail("mpc config: horizon must be at least 1");
    if (!(dt > 0.0)) fail("mpc config: dt must be positive");
    if (Q.size() != n || QN.size() != n || R.size() != B.cols()) fail("mpc config: cost diagonal length mismatch");
    if ((Q.array() < 0.0).any() || (QN.array() < 0.0).any() || (R.array() < 0.0).any())
        fail("mpc config: cost diagonals must be nonnegative");
    if (x_ref.size() != n) fail("mpc config: reference length mismatch");
    if (!A.allFinite() || !B.allFinite() || !H.allFinite() || !x_ref.allFinite() || !Q.allFinite() ||
        !QN.allFinite() || !R.allFinite())
        fail("mpc config: non-finite entries");
    check_box(x_lower, x_upper, n, "state bounds");
    check_box(u_lower, u_upper, B.cols(), "input bounds");
    check_box(xN_lower, xN_upper, n, "terminal state bounds");
    check_set(state_set, n, "state set");
    check_set(input_set, B.cols(), "input set");
    check_set(terminal_set, n, "terminal set");
    if (W_hz.size() != H.rows() || sigma_hz_max.size() != H.rows())
        fail("mpc config: free-space slack weight/bound length must equal output dimension");
    if ((W_hz.array() < 0.0).any() || (sigma_hz_max.array() < 0.0).any())
        fail("mpc config: free-space slack weights and bounds must be nonnegative");
    if (x0.size() != 0 && x0.size() != n) fail("mpc config: x0 length mismatch");
    if (u0.size() != 0 && u0.size() != B.cols()) fail("mpc config: u0 length mismatch");
}

MultiStageMiqp build_convex_problem(const MpcConfig& cfg) {
    cfg.validate();
    const int N = cfg.N;
    const Index nx = cfg.nx(), nu = cfg.nu();
    MultiStageMiqp out;
    out.formulation = Formulation::convex;
    out.fix_first_input = cfg.fix_first_input;
    out.H = cfg.H;
    out.nx = static_cast<int>(nx);
    out.nu = static_cast<int>(nu);
    out.layout.resize(N + 1);
    out.qp.stages.resize(N + 1);

    for (int k = 0; k <= N; ++k) {
        auto& L = out.layout[k];
        const auto sets = sets_at(cfg, k);
        Index pos = 0;
        auto take = [&pos](Index n) {
            Range r{pos, n};
            pos += n;
            return r;
        };
        L.x = take(nx);
        L.u = take(k < N ? nu : 0);
        L.xi_cx = take(sets.state ? sets.state->set.num_generators() : 0);
        L.xi_cu = take(sets.input ? sets.input->set.num_generators() : 0);
        L.sig_cx = take(sets.state ? static_cast<Index>(positive_entries(sets.state->sigma_max).size()) : 0);
        L.sig_cu = take(sets.input ? static_cast<Index>(positive_entries(sets.input->sigma_max).size()) : 0);
        L.xi_c = take(0);
        L.xi_b = take(0);
        L.sig = take(0);
        L.size = pos;

        auto& st = out.qp.stages[k];
        st.P = VectorXd::Zero(pos);
        st.q = VectorXd::Zero(pos);
        st.lower = VectorXd::Zero(pos);
        st.upper = VectorXd::Ones(pos);
        st.Gg.resize(0, pos);
        st.wg.resize(0);
        const VectorXd& Qk = k < N ? cfg.Q : cfg.QN;
        st.P.segment(L.x.start, nx) = Qk;
        st.q.segment(L.x.start, nx) = -Qk.cwiseProduct(cfg.x_ref);
        out.qp.constant += 0.5 * cfg.x_ref.dot(Qk.cwiseProduct(cfg.x_ref));
        st.lower.segment(L.x.start, nx) = k < N ? cfg.x_lower : cfg.xN_lower;
        st.upper.segment(L.x.start, nx) = k < N ? cfg.x_upper : cfg.xN_upper;
        if (k < N) {
            st.P.segment(L.u.start, nu) = cfg.R;
            st.lower.segment(L.u.start, nu) = cfg.u_lower;
            st.upper.segment(L.u.start, nu) = cfg.u_upper;
        }
        auto slack = [&st](const SoftSetConstraint* s, Range r) {
            if (!s || r.size == 0) return;
            const auto sel = positive_entries(s->sigma_max);
            st.P.segment(r.start, r.size) = select(s->W, sel);
            st.lower.segment(r.start, r.size) = -select(s->sigma_max, sel);
            st.upper.segment(r.start, r.size) = select(s->sigma_max, sel);
        };
        slack(sets.state, L.sig_cx);
        slack(sets.input, L.sig_cu);
    }

    const VectorXd x0 = cfg.x0.size() ? cfg.x0 : VectorXd::Zero(nx);
    const VectorXd u0 = cfg.u0.size() ? cfg.u0 : VectorXd::Zero(nu);
    out.qp.couplings.resize(N);
    for (int k = 0; k < N; ++k) {
        const auto& L = out.layout[k];
        const auto& Ln = out.layout[k + 1];
        const auto sets = sets_at(cfg, k);
        const auto term = k == N - 1 ? sets_at(cfg, N).state : nullptr;
        Index rows = nx + set_row_count(sets.state) + set_row_count(sets.input) + set_row_count(term);
        if (k == 0) rows += nx + (cfg.fix_first_input ? nu : 0);
        auto& cp = out.qp.couplings[k];
        cp.C = MatrixXd::Zero(rows, L.size);
        cp.D = MatrixXd::Zero(rows, Ln.size);
        cp.c = VectorXd::Zero(rows);
        Index row = 0;
        if (k == 0) {
            out.x0_rows = {0, row};
            cp.C.block(row, L.x.start, nx, nx) = -MatrixXd::Identity(nx, nx);
            cp.c.segment(row, nx) = x0;
            row += nx;
            if (cfg.fix_first_input) {
                out.u0_rows = RowRef{0, row};
                cp.C.block(row, L.u.start, nu, nu) = -MatrixXd::Identity(nu, nu);
                cp.c.segment(row, nu) = u0;
                row += nu;
            }
        }
        cp.C.block(row, L.x.start, nx, nx) = cfg.A;
        cp.C.block(row, L.u.start, nx, nu) = cfg.B;
        cp.D.block(row, Ln.x.start, nx, nx) = -MatrixXd::Identity(nx, nx);
        row += nx;
        if (sets.state) row = set_rows(*sets.state, L.x, L.xi_cx, L.sig_cx, cp.C, cp.c, row);
        if (sets.input) row = set_rows(*sets.input, L.u, L.xi_cu, L.sig_cu, cp.C, cp.c, row);
        if (term) row = set_rows(*term, Ln.x, Ln.xi_cx, Ln.sig_cx, cp.D, cp.c, row);
    }
    return out;
}

namespace {

// Appends the per-stage map variables and returns the number added per stage.
std::vector<Index> append_stage_vars(MultiStageMiqp& m, Index n_cont, Index n_bin, const VectorXd& region_costs,
                                     const VectorXd& W, const VectorXd& sigma_max) {
    const auto sel = positive_entries(sigma_max);
    const Index ns = static_cast<Index>(sel.size());
    std::vector<Index> added;
    for (std::size_t k = 0; k < m.qp.stages.size(); ++k) {
        auto& L = m.layout[k];
        auto& st = m.qp.stages[k];
        L.xi_c = {L.size, n_cont};
        L.xi_b = {L.xi_c.end(), n_bin};
        L.sig = {L.xi_b.end(), ns};
        const Index add = n_cont + n_bin + ns;
        VectorXd P = VectorXd::Zero(add), q = VectorXd::Zero(add), lo = VectorXd::Zero(add), hi = VectorXd::Ones(add);
        q.segment(n_cont, n_bin) = region_costs;
        P.tail(ns) = select(W, sel);
        lo.tail(ns) = -select(sigma_max, sel);
        hi.tail(ns) = select(sigma_max, sel);
        append_vars(st, P, q, lo, hi);
        L.size += add;
        added.push_back(add);
    }
    return added;
}

void check_attach(const MpcConfig& cfg, const MultiStageMiqp& base, Index dim, Index nf, const VectorXd& qr) {
    if (base.formulation != Formulation::convex) fail("attach: base problem already has a map attached");
    if (dim != cfg.ny()) fail("attach: map dimension must equal the rows of H");
    if (qr.size() != nf) fail("attach: region cost length must equal the region count");
    if ((qr.array() < 0.0).any() || !qr.allFinite()) fail("attach: region costs must be finite and nonnegative");
    if (base.horizon() != cfg.N) fail("attach: base problem horizon differs from the configuration");
}

}  // namespace

MultiStageMiqp attach_hybzono(const MpcConfig& cfg, const MultiStageMiqp& base, const HybridZonotoped& hz,
                              const VectorXd& region_costs) {
    check_attach(cfg, base, hz.dim(), hz.num_binary(), region_costs);
    if (hz.domain != FactorDomain::unit) fail("attach_hybzono: set must be in unit form");
    Index choice = -1;
    for (Index r = 0; r < hz.num_constraints() && choice < 0; ++r)
        if ((hz.num_continuous() == 0 || hz.Ac.row(r).cwiseAbs().maxCoeff() == 0.0) &&
            (hz.Ab.row(r).array() == 1.0).all() && hz.b[r] == 1.0)
            choice = r;
    if (choice < 0) fail("attach_hybzono: set has no choice constraint 1'xi_b = 1");

    MultiStageMiqp out = base;
    out.formulation = Formulation::hz;
    out.num_regions = static_cast<int>(hz.num_binary());
    out.region_costs = region_costs;
    const auto added = append_stage_vars(out, hz.num_continuous(), hz.num_binary(), region_costs, cfg.W_hz,
                                         cfg.sigma_hz_max);
    const Index n = hz.dim(), nc = hz.num_constraints();
    const int N = cfg.N;
    out.choice_rows.assign(N + 1, RowRef{});
    auto rows_for = [&](MatrixXd& M, VectorXd& c, const StageLayout& L, Index row) {
        M.block(row, L.x.start, n, cfg.nx()) = cfg.H;
        M.block(row, L.xi_c.start, n, L.xi_c.size) = -hz.Gc;
        M.block(row, L.xi_b.start, n, L.xi_b.size) = -hz.Gb;
        const auto sel = positive_entries(cfg.sigma_hz_max);
        for (std::size_t i = 0; i < sel.size(); ++i) M(row + sel[i], L.sig.start + static_cast<Index>(i)) = 1.0;
        c.segment(row, n) = -hz.c;
        M.block(row + n, L.xi_c.start, nc, L.xi_c.size) = hz.Ac;
        M.block(row + n, L.xi_b.start, nc, L.xi_b.size) = hz.Ab;
        c.segment(row + n, nc) = -hz.b;
    };
    for (int k = 0; k < N; ++k) {
        auto& cp = out.qp.couplings[k];
        const Index base_rows = cp.rows();
        const Index extra = (n + nc) * (k == N - 1 ? 2 : 1);
        widen(cp, extra, added[k], added[k + 1]);
        rows_for(cp.C, cp.c, out.layout[k], base_rows);
        out.choice_rows[k] = {k, base_rows + n + choice};
        if (k == N - 1) {
            rows_for(cp.D, cp.c, out.layout[N], base_rows + n + nc);
            out.choice_rows[N] = {k, base_rows + 2 * n + nc + choice};
        }
    }
    return out;
}

MultiStageMiqp attach_bigm(const MpcConfig& cfg, const MultiStageMiqp& base, const BigMEncoding& enc,
                           const VectorXd& region_costs) {
    const Index nf = static_cast<Index>(enc.regions.size());
    const Index n = enc.box_lower.size();
    check_attach(cfg, base, n, nf, region_costs);
    MultiStageMiqp out = base;
    out.formulation = Formulation::bigm;
    out.num_regions = static_cast<int>(nf);
    out.region_costs = region_costs;
    const auto added = append_stage_vars(out, 0, nf, region_costs, cfg.W_hz, cfg.sigma_hz_max);
    const int N = cfg.N;
    const auto sel = positive_entries(cfg.sigma_hz_max);
    out.choice_rows.assign(N + 1, RowRef{});
    for (int k = 0; k < N; ++k) {
        auto& cp = out.qp.couplings[k];
        const Index base_rows = cp.rows();
        widen(cp, k == N - 1 ? 2 : 1, added[k], added[k + 1]);
        const auto& L = out.layout[k];
        cp.C.block(base_rows, L.xi_b.start, 1, nf).setOnes();
        cp.c[base_rows] = -1.0;
        out.choice_rows[k] = {k, base_rows};
        if (k == N - 1) {
            const auto& LN = out.layout[N];
            cp.D.block(base_rows + 1, LN.xi_b.start, 1, nf).setOnes();
            cp.c[base_rows + 1] = -1.0;
            out.choice_rows[N] = {k, base_rows + 1};
        }
    }
    Index total_rows = 0;
    for (const auto& r : enc.regions) total_rows += r.H.rows();
    for (int k = 0; k <= N; ++k) {
        auto& st = out.qp.stages[k];
        const auto& L = out.layout[k];
        const Index g0 = st.Gg.rows();
        MatrixXd G = MatrixXd::Zero(g0 + total_rows, st.size());
        VectorXd w(g0 + total_rows);
        if (g0 > 0) {
            G.topRows(g0) = st.Gg;
            w.head(g0) = st.wg;
        }
        Index row = g0;
        for (Index i = 0; i < nf; ++i) {
            const auto& reg = enc.regions[i];
            for (Index h = 0; h < reg.H.rows(); ++h, ++row) {
                const VectorXd a = reg.H.row(h).transpose();
                G.block(row, L.x.start, 1, cfg.nx()) = a.transpose() * cfg.H;
                for (std::size_t s = 0; s < sel.size(); ++s) G(row, L.sig.start + static_cast<Index>(s)) = a[sel[s]];
                G(row, L.xi_b.start + i) = enc.big_m[i][h];
                w[row] = reg.h[h] + enc.big_m[i][h];
            }
        }
        st.Gg = std::move(G);
        st.wg = std::move(w);
    }
    return out;
}

void update_initial_state(MultiStageMiqp& miqp, const VectorXd& x0, const std::optional<VectorXd>& u0) {
    if (x0.size() != miqp.nx) fail("update_initial_state: x0 length mismatch");
    if (!x0.allFinite()) fail("update_initial_state: non-finite x0");
    auto& cp = miqp.qp.couplings[miqp.x0_rows.coupling];
    cp.c.segment(miqp.x0_rows.row, miqp.nx) = x0;
    if (u0) {
        if (!miqp.fix_first_input || !miqp.u0_rows) fail("update_initial_state: u0 given but the first input is not fixed");
        if (u0->size() != miqp.nu) fail("update_initial_state: u0 length mismatch");
        miqp.qp.couplings[miqp.u0_rows->coupling].c.segment(miqp.u0_rows->row, miqp.nu) = *u0;
    }
}

std::pair<MatrixXd, VectorXd> stage_inequalities(const QpStage& stage) {
    const Index n = stage.size(), g = stage.num_general();
    MatrixXd G = MatrixXd::Zero(2 * n + g, n);
    VectorXd w(2 * n + g);
    G.topRows(n) = -MatrixXd::Identity(n, n);
    G.middleRows(n, n) = MatrixXd::Identity(n, n);
    if (g > 0) G.bottomRows(g) = stage.Gg;
    w << -stage.lower, stage.upper, stage.wg;
    return {G, w};
}

Trajectory extract_trajectory(const MultiStageMiqp& miqp, const VectorXd& z) {
    Trajectory t;
    Index off = 0;
    for (std::size_t k = 0; k < miqp.layout.size(); ++k) {
        const auto& L = miqp.layout[k];
        t.x.push_back(z.segment(off + L.x.start, L.x.size));
        if (L.u.size > 0) t.u.push_back(z.segment(off + L.u.start, L.u.size));
        off += L.size;
    }
    return t;
}

std::vector<VectorXd> extract_positions(const MultiStageMiqp& miqp, const VectorXd& z) {
    std::vector<VectorXd> y;
    for (const auto& x : extract_trajectory(miqp, z).x) y.push_back(miqp.H * x);
    return y;
}

VectorXd extract_binaries(const MultiStageMiqp& miqp, const VectorXd& z, int k) {
    Index off = 0;
    for (int j = 0; j < k; ++j) off += miqp.layout[j].size;
    const auto& L = miqp.layout[k];
    return z.segment(off + L.xi_b.start, L.xi_b.size);
}

double mpc_objective(const MpcConfig& cfg, const MultiStageMiqp& miqp, const VectorXd& z,
                     const std::vector<int>& regions) {
    const int N = cfg.N;
    double j = 0.0;
    Index off = 0;
    auto slack_cost = [&](const SoftSetConstraint* s, Range r) {
        if (!s || r.size == 0) return 0.0;
        const VectorXd w = select(s->W, positive_entries(s->sigma_max));
        const VectorXd sig = z.segment(off + r.start, r.size);
        return 0.5 * sig.dot(w.cwiseProduct(sig));
    };
    for (int k = 0; k <= N; ++k) {
        const auto& L = miqp.layout[k];
        const VectorXd dx = z.segment(off + L.x.start, L.x.size) - cfg.x_ref;
        j += 0.5 * dx.dot((k < N ? cfg.Q : cfg.QN).cwiseProduct(dx));
        if (k < N) {
            const VectorXd u = z.segment(off + L.u.start, L.u.size);
            j += 0.5 * u.dot(cfg.R.cwiseProduct(u));
        }
        const auto sets = sets_at(cfg, k);
        j += slack_cost(sets.state, L.sig_cx) + slack_cost(sets.input, L.sig_cu);
        if (L.sig.size > 0) {
            const VectorXd w = select(cfg.W_hz, positive_entries(cfg.sigma_hz_max));
            const VectorXd sig = z.segment(off + L.sig.start, L.sig.size);
            j += 0.5 * sig.dot(w.cwiseProduct(sig));
        }
        if (!regions.empty() && miqp.region_costs.size() > 0) j += miqp.region_costs[regions[k]];
        off += L.size;
    }
    return j;
}

}  // namespace zonomip
