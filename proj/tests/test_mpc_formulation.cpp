#include "oracles.hpp"

#include "zonomip/map_ingest.hpp"
#include "zonomip/mpc_formulation.hpp"
#include "zonomip/sim_harness.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace zonomip;

namespace {

OgmMap one_cell(double half) {
    OgmMap g;
    g.cell_size = VectorXd::Constant(2, 2.0 * half);
    g.origin = VectorXd::Constant(2, -half);
    g.grid = {1, 1};
    g.occupancy = {0.0};
    return g;
}

MpcConfig small_config(int N) {
    MpcConfig cfg = default_benchmark_config(2);
    cfg.N = N;
    cfg.x0 = (VectorXd(4) << 0.0, 0.5, 0.0, -0.2).finished();
    cfg.x_ref = (VectorXd(4) << 4.0, 0.0, 3.0, 0.0).finished();
    return cfg;
}

double solve_cost(const QpProblem& qp) {
    const auto res = solve_qp(qp);
    EXPECT_EQ(res.status, QpStatus::optimal);
    return res.objective;
}

// Counts nonzeros of a row or column of a dense matrix with the given value.
int count_value(const Eigen::Ref<const Eigen::RowVectorXd>& v, double value) {
    int n = 0;
    for (Index i = 0; i < v.size(); ++i) n += v[i] == value;
    return n;
}

}  // namespace

TEST(DoubleIntegrator, MatricesForUnitStep) {
    const auto cfg = double_integrator(2, 1.0);
    MatrixXd A(4, 4), B(4, 2);
    A << 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 1;
    B << 0.5, 0, 1, 0, 0, 0.5, 0, 1;
    EXPECT_EQ(cfg.A, A);
    EXPECT_EQ(cfg.B, B);
    EXPECT_EQ(cfg.H, (MatrixXd(2, 4) << 1, 0, 0, 0, 0, 0, 1, 0).finished());
}

TEST(DoubleIntegrator, ConstantVelocityStep) {
    const auto cfg = double_integrator(2, 1.0);
    const VectorXd x = (VectorXd(4) << 0, 1, 0, 0).finished();
    EXPECT_EQ(cfg.A * x, (VectorXd(4) << 1, 1, 0, 0).finished());
}

TEST(DoubleIntegrator, Controllable) {
    for (int dim : {2, 3}) {
        const auto cfg = double_integrator(dim, 0.2);
        const Index n = cfg.A.rows();
        MatrixXd ctrb(n, n * cfg.B.cols());
        MatrixXd Ak = MatrixXd::Identity(n, n);
        for (Index i = 0; i < n; ++i) {
            ctrb.middleCols(i * cfg.B.cols(), cfg.B.cols()) = Ak * cfg.B;
            Ak = cfg.A * Ak;
        }
        EXPECT_EQ(Eigen::FullPivLU<MatrixXd>(ctrb).rank(), n);
    }
    EXPECT_THROW(double_integrator(1, 1.0), std::invalid_argument);
    EXPECT_THROW(double_integrator(2, 0.0), std::invalid_argument);
}

TEST(BenchmarkConfig, Values) {
    const auto cfg = default_benchmark_config(2);
    EXPECT_EQ(cfg.N, 15);
    EXPECT_EQ(cfg.Q, (VectorXd(4) << 0.1, 0, 0.1, 0).finished());
    EXPECT_EQ(cfg.QN, (VectorXd(4) << 10, 0, 10, 0).finished());
    EXPECT_EQ(cfg.R, VectorXd::Constant(2, 10.0));
    EXPECT_EQ(cfg.x_upper, VectorXd::Constant(4, 1e4));
    EXPECT_EQ(cfg.u_lower, VectorXd::Constant(2, -1e4));
    EXPECT_EQ(cfg.W_hz, VectorXd::Constant(2, 1e6));
    EXPECT_EQ(cfg.sigma_hz_max, VectorXd::Constant(2, 1e4));
    ASSERT_TRUE(cfg.state_set && cfg.input_set && cfg.terminal_set);
    EXPECT_EQ(cfg.state_set->W, VectorXd::Constant(2, 1e6));
    // Velocity limit |v| <= 1 in unit form: 2 xi - 1.
    EXPECT_EQ(cfg.state_set->set.G, 2.0 * MatrixXd::Identity(2, 2));
    EXPECT_EQ(cfg.state_set->set.c, VectorXd::Constant(2, -1.0));
    EXPECT_EQ(cfg.terminal_set->set.num_generators(), 0);
    EXPECT_EQ(cfg.terminal_set->map, (MatrixXd(2, 4) << 0, 1, 0, 0, 0, 0, 0, 1).finished());
    const auto cfg3 = default_benchmark_config(3);
    EXPECT_EQ(cfg3.nx(), 6);
    EXPECT_EQ(cfg3.nu(), 3);
}

TEST(BenchmarkConfig, TerminalSetForcesRest) {
    auto cfg = small_config(6);
    const auto miqp = build_convex_problem(cfg);
    const auto res = solve_qp(miqp.qp);
    ASSERT_EQ(res.status, QpStatus::optimal);
    const auto t = extract_trajectory(miqp, res.iterate.z);
    EXPECT_LT(std::abs(t.x.back()[1]), 1e-4);
    EXPECT_LT(std::abs(t.x.back()[3]), 1e-4);
}

TEST(ConvexProblem, OneStepHandAssembled) {
    MpcConfig cfg = double_integrator(2, 1.0);
    cfg.N = 1;
    cfg.Q = VectorXd::Constant(4, 1.0);
    cfg.QN = VectorXd::Constant(4, 2.0);
    cfg.R = VectorXd::Constant(2, 3.0);
    cfg.x_ref = VectorXd::Zero(4);
    cfg.x_lower = VectorXd::Constant(4, -5.0);
    cfg.x_upper = VectorXd::Constant(4, 6.0);
    cfg.xN_lower = VectorXd::Constant(4, -7.0);
    cfg.xN_upper = VectorXd::Constant(4, 8.0);
    cfg.u_lower = VectorXd::Constant(2, -1.0);
    cfg.u_upper = VectorXd::Constant(2, 2.0);
    cfg.W_hz = VectorXd::Zero(2);
    cfg.sigma_hz_max = VectorXd::Zero(2);
    cfg.x0 = (VectorXd(4) << 0.1, 0.2, 0.3, 0.4).finished();
    const auto m = build_convex_problem(cfg);

    ASSERT_EQ(m.qp.stages.size(), 2u);
    ASSERT_EQ(m.qp.couplings.size(), 1u);
    MatrixXd C = MatrixXd::Zero(8, 6), D = MatrixXd::Zero(8, 4);
    C.topLeftCorner(4, 4) = -MatrixXd::Identity(4, 4);
    C.bottomLeftCorner(4, 4) = cfg.A;
    C.bottomRightCorner(4, 2) = cfg.B;
    D.bottomRows(4) = -MatrixXd::Identity(4, 4);
    VectorXd c = VectorXd::Zero(8);
    c.head(4) = cfg.x0;
    EXPECT_EQ(m.qp.couplings[0].C, C);
    EXPECT_EQ(m.qp.couplings[0].D, D);
    EXPECT_EQ(m.qp.couplings[0].c, c);

    const auto [G0, w0] = stage_inequalities(m.qp.stages[0]);
    VectorXd w0_expected(12);
    w0_expected << VectorXd::Constant(4, 5.0), VectorXd::Constant(2, 1.0), VectorXd::Constant(4, 6.0),
        VectorXd::Constant(2, 2.0);
    EXPECT_EQ(w0, w0_expected);
    const auto [G1, w1] = stage_inequalities(m.qp.stages[1]);
    VectorXd w1_expected(8);
    w1_expected << VectorXd::Constant(4, 7.0), VectorXd::Constant(4, 8.0);
    EXPECT_EQ(w1, w1_expected);
    EXPECT_EQ(m.qp.stages[0].P, (VectorXd(6) << 1, 1, 1, 1, 3, 3).finished());
    EXPECT_EQ(m.qp.stages[1].P, VectorXd::Constant(4, 2.0));

    // Against the closed-form unconstrained optimum u = -(B'Q_N B + R)^-1 B'Q_N A x0.
    const MatrixXd QN = cfg.QN.asDiagonal();
    const MatrixXd Hm = cfg.B.transpose() * QN * cfg.B + MatrixXd(cfg.R.asDiagonal());
    const VectorXd u_star = -Hm.ldlt().solve(cfg.B.transpose() * QN * cfg.A * cfg.x0);
    ASSERT_TRUE((u_star.array() > -1.0).all() && (u_star.array() < 2.0).all());
    const auto res = solve_qp(m.qp);
    ASSERT_EQ(res.status, QpStatus::optimal);
    EXPECT_LT(oracle::rel_err(extract_trajectory(m, res.iterate.z).u[0], u_star), 1e-7);
}

TEST(ConvexProblem, BoxFormAndFullColumnRank) {
    auto cfg = small_config(15);
    const auto base = build_convex_problem(cfg);
    const auto hz = to_hybrid_zonotope(Map{one_cell(3.0), "cell"});
    const auto m = attach_hybzono(cfg, base, hz, VectorXd::Zero(1));
    for (const auto* p : {&base, &m}) {
        for (const auto& st : p->qp.stages) {
            EXPECT_EQ(st.num_general(), 0);
            const auto [G, w] = stage_inequalities(st);
            for (Index r = 0; r < G.rows(); ++r) {
                EXPECT_EQ(count_value(G.row(r), 0.0), G.cols() - 1);
                EXPECT_EQ(count_value(G.row(r), 1.0) + count_value(G.row(r), -1.0), 1);
            }
            for (Index j = 0; j < G.cols(); ++j) {
                EXPECT_EQ(count_value(G.col(j).transpose(), -1.0), 1);
                EXPECT_EQ(count_value(G.col(j).transpose(), 1.0), 1);
            }
            EXPECT_EQ(Eigen::FullPivLU<MatrixXd>(G).rank(), st.size());
            EXPECT_TRUE((st.P.array() >= 0.0).all());
        }
    }
}

TEST(ConvexProblem, ZeroSlackBoundEqualsHardConstraint) {
    auto cfg = small_config(6);
    cfg.x0 = (VectorXd(4) << 0.0, 0.9, 0.0, -0.9).finished();
    cfg.terminal_set.reset();
    cfg.input_set.reset();
    cfg.state_set->sigma_max.setZero();
    cfg.state_set->W.setZero();
    const double soft = solve_cost(build_convex_problem(cfg).qp);

    // Same problem with the velocity limit written directly as state bounds.
    auto hard = cfg;
    hard.state_set.reset();
    for (int i : {1, 3}) {
        hard.x_lower[i] = -1.0;
        hard.x_upper[i] = 1.0;
    }
    const double ref = solve_cost(build_convex_problem(hard).qp);
    EXPECT_NEAR(soft, ref, 1e-6 * (1.0 + std::abs(ref)));
    // The limit binds: without it the cost drops.
    auto loose = hard;
    loose.x_lower.setConstant(-1e4);
    loose.x_upper.setConstant(1e4);
    EXPECT_LT(solve_cost(build_convex_problem(loose).qp), ref - 1e-3);
}

TEST(ConvexProblem, ValidationErrors) {
    auto cfg = small_config(3);
    auto bad = cfg;
    bad.Q[0] = -1.0;
    EXPECT_THROW(build_convex_problem(bad), std::invalid_argument);
    bad = cfg;
    bad.x_lower[0] = 1e5;
    EXPECT_THROW(build_convex_problem(bad), std::invalid_argument);
    bad = cfg;
    bad.u_upper[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(build_convex_problem(bad), std::invalid_argument);
    bad = cfg;
    bad.N = 0;
    EXPECT_THROW(build_convex_problem(bad), std::invalid_argument);
    bad = cfg;
    bad.state_set->map = MatrixXd::Identity(3, 3);
    EXPECT_THROW(build_convex_problem(bad), std::invalid_argument);
}

TEST(HybzonoAttach, LayoutGrowthAndRegionCosts) {
    auto cfg = small_config(4);
    const auto base = build_convex_problem(cfg);
    OgmMap g;
    g.cell_size = VectorXd::Constant(2, 1.0);
    g.origin = VectorXd::Zero(2);
    g.grid = {3, 1};
    g.occupancy = {0.1, 0.5, 0.9};
    const Map map{g, "row"};
    const auto hz = to_hybrid_zonotope(map);
    const VectorXd qr = region_costs_vector(map, 2.0);
    const auto m = attach_hybzono(cfg, base, hz, qr);
    ASSERT_EQ(m.qp.stages.size(), 5u);
    for (std::size_t k = 0; k < m.qp.stages.size(); ++k) {
        const auto& L = m.layout[k];
        EXPECT_EQ(L.size - base.layout[k].size, hz.num_continuous() + hz.num_binary() + hz.dim());
        EXPECT_EQ(m.qp.stages[k].q.segment(L.xi_b.start, L.xi_b.size), qr);
        EXPECT_EQ(m.qp.stages[k].P.segment(L.sig.start, L.sig.size), cfg.W_hz);
        EXPECT_EQ(m.qp.stages[k].lower.segment(L.sig.start, L.sig.size), -cfg.sigma_hz_max);
    }
    EXPECT_EQ(m.num_regions, 3);
    ASSERT_EQ(m.choice_rows.size(), 5u);
    for (int k = 0; k <= 4; ++k) {
        const auto& cp = m.qp.couplings[m.choice_rows[k].coupling];
        const auto& blk = k < 4 ? cp.C : cp.D;
        const auto& L = m.layout[k];
        EXPECT_EQ(blk.row(m.choice_rows[k].row).segment(L.xi_b.start, 3), Eigen::RowVector3d::Ones());
        EXPECT_EQ(blk.row(m.choice_rows[k].row).sum(), 3.0);
        EXPECT_EQ(cp.c[m.choice_rows[k].row], -1.0);
    }
    const auto zero = attach_hybzono(cfg, base, hz, VectorXd::Zero(3));
    for (std::size_t k = 0; k < zero.qp.stages.size(); ++k)
        EXPECT_TRUE(zero.qp.stages[k].q.segment(zero.layout[k].xi_b.start, 3).isZero());

    EXPECT_THROW(attach_hybzono(cfg, base, hz, VectorXd::Zero(2)), std::invalid_argument);
    EXPECT_THROW(attach_hybzono(cfg, m, hz, qr), std::invalid_argument);
    auto hz3 = to_hybrid_zonotope(Map{one_cell(1.0), "c"});
    hz3.c = VectorXd::Zero(3);
    hz3.Gc = MatrixXd::Zero(3, hz3.Gc.cols());
    hz3.Gb = MatrixXd::Zero(3, hz3.Gb.cols());
    EXPECT_THROW(attach_hybzono(cfg, base, hz3, VectorXd::Zero(1)), std::invalid_argument);
}

TEST(HybzonoAttach, ObjectiveEquivalence) {
    std::mt19937 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    auto cfg = small_config(5);
    OgmMap grid;
    grid.cell_size = VectorXd::Constant(2, 1.5);
    grid.origin = VectorXd::Constant(2, -1.0);
    grid.grid = {2, 2};
    grid.occupancy = {0.0, 0.3, std::nullopt, 0.8};
    const Map map{grid, "g"};
    const VectorXd qr = region_costs_vector(map, 4.0);
    const auto m = attach_hybzono(cfg, build_convex_problem(cfg), to_hybrid_zonotope(map), qr);
    const auto e = attach_bigm(cfg, build_convex_problem(cfg), bigm_encoding(map), qr);
    for (int trial = 0; trial < 20; ++trial) {
        for (const auto* p : {&m, &e}) {
            VectorXd z = VectorXd::NullaryExpr(p->qp.num_variables(), [&] { return g(rng); });
            std::vector<int> regions;
            Index off = 0;
            for (std::size_t k = 0; k < p->layout.size(); ++k) {
                const int r = static_cast<int>(rng() % 3);
                regions.push_back(r);
                const auto& L = p->layout[k];
                z.segment(off + L.xi_b.start, L.xi_b.size).setZero();
                z[off + L.xi_b.start + r] = 1.0;
                off += L.size;
            }
            const double a = qp_objective(p->qp, z);
            const double b = mpc_objective(cfg, *p, z, regions);
            EXPECT_NEAR(a, b, 1e-9 * (1.0 + std::abs(b)));
        }
    }
}

TEST(HybzonoAttach, OneCellMatchesRestrictedConvexProblem) {
    auto cfg = small_config(8);
    cfg.sigma_hz_max.setZero();
    const Map map{one_cell(1.5), "cell"};
    const auto m = attach_hybzono(cfg, build_convex_problem(cfg), to_hybrid_zonotope(map), VectorXd::Zero(1));
    const double relaxed = solve_cost(m.qp);

    auto boxed = cfg;
    for (int i : {0, 2}) {
        boxed.x_lower[i] = boxed.xN_lower[i] = -1.5;
        boxed.x_upper[i] = boxed.xN_upper[i] = 1.5;
    }
    const double ref = solve_cost(build_convex_problem(boxed).qp);
    EXPECT_NEAR(relaxed, ref, 1e-6 * (1.0 + std::abs(ref)));
}

TEST(BigmAttach, SingleRegionMatchesHybzono) {
    auto cfg = small_config(8);
    const Map map{one_cell(1.5), "cell"};
    for (double smax : {0.0, 1e4}) {
        cfg.sigma_hz_max.setConstant(smax);
        const auto base = build_convex_problem(cfg);
        const auto h = attach_hybzono(cfg, base, to_hybrid_zonotope(map), VectorXd::Zero(1));
        const auto b = attach_bigm(cfg, base, bigm_encoding(map), VectorXd::Zero(1));
        EXPECT_TRUE(b.qp.stages[0].num_general() > 0);
        const double jh = solve_cost(h.qp), jb = solve_cost(b.qp);
        EXPECT_NEAR(jh, jb, 1e-6 * (1.0 + std::abs(jh)));
    }
}

TEST(BigmAttach, RelaxationIsWeaker) {
    // Two triangles touching the corners of [0,4]^2; the reference sits
    // beyond their hull.
    PolytopicMap pm;
    pm.vertices.resize(2, 6);
    pm.vertices << 0, 2, 0, 4, 4, 2, 0, 0, 2, 2, 4, 4;
    pm.incidence = MatrixXi::Zero(6, 2);
    pm.incidence.block(0, 0, 3, 1).setOnes();
    pm.incidence.block(3, 1, 3, 1).setOnes();
    pm.region_costs = VectorXd::Zero(2);
    const Map map{pm, "triangles"};
    auto cfg = small_config(5);
    cfg.x0 = (VectorXd(4) << 0.5, 0, 0.5, 0).finished();
    cfg.x_ref = (VectorXd(4) << 0.0, 0, 4.0, 0).finished();
    const auto base = build_convex_problem(cfg);
    const double jh = solve_cost(attach_hybzono(cfg, base, to_hybrid_zonotope(map), VectorXd::Zero(2)).qp);
    const double jb = solve_cost(attach_bigm(cfg, base, bigm_encoding(map), VectorXd::Zero(2)).qp);
    EXPECT_LT(jb, jh - 1e-3);

    // Two collinear segments: the relaxations coincide with the hull [0, 2].
    PolytopicMap seg;
    seg.vertices = (MatrixXd(1, 3) << 0.0, 1.0, 2.0).finished();
    seg.incidence = (MatrixXi(3, 2) << 1, 0, 1, 1, 0, 1).finished();
    seg.region_costs = VectorXd::Zero(2);
    MpcConfig c1;
    c1.A = (MatrixXd(2, 2) << 1, 1, 0, 1).finished();
    c1.B = (MatrixXd(2, 1) << 0.5, 1).finished();
    c1.H = (MatrixXd(1, 2) << 1, 0).finished();
    c1.N = 4;
    c1.Q = (VectorXd(2) << 0.1, 0).finished();
    c1.QN = (VectorXd(2) << 10, 0).finished();
    c1.R = VectorXd::Constant(1, 10.0);
    c1.x_ref = (VectorXd(2) << 5, 0).finished();
    c1.x_lower = c1.xN_lower = VectorXd::Constant(2, -1e4);
    c1.x_upper = c1.xN_upper = VectorXd::Constant(2, 1e4);
    c1.u_lower = VectorXd::Constant(1, -1e4);
    c1.u_upper = VectorXd::Constant(1, 1e4);
    c1.W_hz = VectorXd::Constant(1, 1e6);
    c1.sigma_hz_max = VectorXd::Zero(1);
    c1.x0 = (VectorXd(2) << 0.5, 0).finished();
    const Map sm{seg, "seg"};
    const auto b1 = build_convex_problem(c1);
    const double sh = solve_cost(attach_hybzono(c1, b1, to_hybrid_zonotope(sm), VectorXd::Zero(2)).qp);
    const double sb = solve_cost(attach_bigm(c1, b1, bigm_encoding(sm), VectorXd::Zero(2)).qp);
    EXPECT_LE(sb, sh + 1e-6 * (1.0 + std::abs(sh)));
}

TEST(UpdateInitialState, RewritesOnlyInitialRows) {
    auto cfg = small_config(4);
    cfg.fix_first_input = true;
    const auto hz = to_hybrid_zonotope(Map{one_cell(5.0), "c"});
    const auto m0 = attach_hybzono(cfg, build_convex_problem(cfg), hz, VectorXd::Zero(1));
    auto m = m0;
    const VectorXd x0 = (VectorXd(4) << 1, 2, 3, 4).finished();
    const VectorXd u0 = (VectorXd(2) << -0.5, 0.25).finished();
    update_initial_state(m, x0, u0);
    const auto& c_new = m.qp.couplings[0].c;
    const auto& c_old = m0.qp.couplings[0].c;
    EXPECT_EQ(c_new.segment(m.x0_rows.row, 4), x0);
    ASSERT_TRUE(m.u0_rows);
    EXPECT_EQ(c_new.segment(m.u0_rows->row, 2), u0);
    Index changed = 0;
    for (Index i = 0; i < c_new.size(); ++i) changed += c_new[i] != c_old[i];
    EXPECT_LE(changed, 6);
    for (std::size_t k = 1; k < m.qp.couplings.size(); ++k) EXPECT_EQ(m.qp.couplings[k].c, m0.qp.couplings[k].c);

    auto twice = m;
    update_initial_state(twice, x0, u0);
    EXPECT_EQ(twice.qp.couplings[0].c, m.qp.couplings[0].c);

    auto zero = m;
    update_initial_state(zero, VectorXd::Zero(4));
    EXPECT_TRUE(zero.qp.couplings[0].c.segment(zero.x0_rows.row, 4).isZero());

    // The solved plan starts at x0 and applies u0.
    const auto res = solve_qp(m.qp);
    ASSERT_EQ(res.status, QpStatus::optimal);
    const auto t = extract_trajectory(m, res.iterate.z);
    EXPECT_LT((t.x[0] - x0).norm(), 1e-7);
    EXPECT_LT((t.u[0] - u0).norm(), 1e-7);

    auto free_cfg = small_config(4);
    auto free = build_convex_problem(free_cfg);
    EXPECT_THROW(update_initial_state(free, x0, u0), std::invalid_argument);
    EXPECT_THROW(update_initial_state(free, VectorXd::Zero(3)), std::invalid_argument);
}
