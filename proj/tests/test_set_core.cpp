#include "oracles.hpp"

#include "zonomip/set_core.hpp"
#include "zonomip/set_queries.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace zonomip;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

HybridZonotoped one_cell(double dx, double dy, const VectorXd& center) {
    MatrixXd gc = Eigen::Vector2d(dx, dy).asDiagonal();
    MatrixXd gb = center;
    return HybridZonotoped(gc, gb, -0.5 * Eigen::Vector2d(dx, dy), MatrixXd::Zero(1, 2), MatrixXd::Ones(1, 1),
                           VectorXd::Ones(1));
}

HybridZonotoped random_symmetric(std::mt19937& rng, int n, int ng, int nb, int nc) {
    std::normal_distribution<double> g(0.0, 1.0);
    auto mat = [&](int r, int c) { return MatrixXd(MatrixXd::NullaryExpr(r, c, [&] { return g(rng); })); };
    auto vec = [&](int r) { return VectorXd(VectorXd::NullaryExpr(r, [&] { return g(rng); })); };
    return HybridZonotoped(mat(n, ng), mat(n, nb), vec(n), mat(nc, ng), mat(nc, nb), vec(nc), FactorDomain::symmetric);
}

// Convex hull of the columns of V as a unit-form constrained zonotope.
ConstrainedZonotoped hull_set(const MatrixXd& V) {
    return ConstrainedZonotoped(V, VectorXd::Zero(V.rows()), MatrixXd::Ones(1, V.cols()), VectorXd::Ones(1),
                                FactorDomain::unit);
}

}  // namespace

TEST(SetCore, ConstructorsValidate) {
    EXPECT_THROW(Zonotoped(MatrixXd::Ones(2, 3), VectorXd::Zero(3)), std::invalid_argument);
    EXPECT_THROW(ConstrainedZonotoped(MatrixXd::Ones(2, 3), VectorXd::Zero(2), MatrixXd::Ones(1, 2), VectorXd::Ones(1)),
                 std::invalid_argument);
    EXPECT_THROW(HybridZonotoped(MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1), VectorXd::Zero(2), MatrixXd::Ones(1, 1),
                                 MatrixXd::Ones(1, 2), VectorXd::Ones(1)),
                 std::invalid_argument);
    MatrixXd bad = MatrixXd::Ones(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(Zonotoped(bad, VectorXd::Zero(2)), std::invalid_argument);
}

TEST(SetCore, UnitFormScalarExample) {
    HybridZonotoped z(MatrixXd::Ones(1, 1), MatrixXd(1, 0), VectorXd::Zero(1), MatrixXd(0, 1), MatrixXd(0, 0),
                      VectorXd(0), FactorDomain::symmetric);
    const auto u = to_unit_form(z);
    EXPECT_EQ(u.Gc(0, 0), 2.0);
    EXPECT_EQ(u.c[0], -1.0);
    EXPECT_EQ(u.domain, FactorDomain::unit);
    EXPECT_THROW(to_unit_form(u), std::invalid_argument);
}

TEST(SetCore, UnitFormOfPointIsUnchanged) {
    HybridZonotoped z(MatrixXd(1, 0), MatrixXd(1, 0), VectorXd::Constant(1, 3.0), MatrixXd(0, 0), MatrixXd(0, 0),
                      VectorXd(0), FactorDomain::symmetric);
    EXPECT_EQ(to_unit_form(z).c[0], 3.0);
}

TEST(SetCore, UnitFormRoundTripSampling) {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto z = random_symmetric(rng, 2, 4, 3, 2);
    const auto zu = to_unit_form(z);
    for (int i = 0; i < 1000; ++i) {
        FactorAssignmentd fu{VectorXd::NullaryExpr(4, [&] { return u(rng); }),
                             VectorXd::NullaryExpr(3, [&] { return u(rng) < 0.5 ? 0.0 : 1.0; })};
        FactorAssignmentd fs{2.0 * fu.xi_c.array() - 1.0, 2.0 * fu.xi_b.array() - 1.0};
        const auto a = evaluate(z, fs);
        const auto b = evaluate(zu, fu);
        EXPECT_LE((a.point - b.point).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((a.residual - b.residual).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(SetCore, UnitFormConstrainedZonotope) {
    ConstrainedZonotoped z(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Ones(1, 2), VectorXd::Zero(1));
    const auto u = to_unit_form(z);
    EXPECT_EQ(u.G, 2.0 * MatrixXd::Identity(2, 2));
    EXPECT_EQ(u.c, -VectorXd::Ones(2));
    EXPECT_EQ(u.b[0], 2.0);
}

TEST(SetCore, EvaluateOneCell) {
    const auto cell = one_cell(1.0, 1.0, VectorXd::Zero(2));
    auto e = evaluate(cell, FactorAssignmentd{Eigen::Vector2d(0.5, 0.5), VectorXd::Ones(1)});
    EXPECT_LE(e.point.norm(), 1e-15);
    EXPECT_EQ(e.residual[0], 0.0);
    e = evaluate(cell, FactorAssignmentd{Eigen::Vector2d(0.0, 0.0), VectorXd::Ones(1)});
    EXPECT_EQ(e.point, Eigen::Vector2d(-0.5, -0.5));
    FactorAssignmentd off{Eigen::Vector2d(0.5, 0.5), VectorXd::Zero(1)};
    e = evaluate(cell, off);
    EXPECT_EQ(e.residual[0], -1.0);
    EXPECT_FALSE(is_feasible_assignment(cell, off, 1e-8));
    EXPECT_THROW(evaluate(cell, FactorAssignmentd{VectorXd::Zero(3), VectorXd::Ones(1)}), std::invalid_argument);
}

TEST(SetCore, MinkowskiSumOfPoints) {
    HybridZonotoped p(MatrixXd(2, 0), MatrixXd(2, 0), Eigen::Vector2d(1, 2), MatrixXd(0, 0), MatrixXd(0, 0), VectorXd(0));
    HybridZonotoped q(MatrixXd(2, 0), MatrixXd(2, 0), Eigen::Vector2d(-3, 5), MatrixXd(0, 0), MatrixXd(0, 0), VectorXd(0));
    const auto s = minkowski_sum(p, q);
    EXPECT_EQ(s.c, Eigen::Vector2d(-2, 7));
    EXPECT_EQ(s.num_continuous(), 0);
}

TEST(SetCore, MinkowskiSumSquareAndTwoPoints) {
    // Unit square [0,1]^2 plus the point set {(0,0),(5,0)} (one binary factor).
    HybridZonotoped square(MatrixXd::Identity(2, 2), MatrixXd(2, 0), VectorXd::Zero(2), MatrixXd(0, 2),
                           MatrixXd(0, 0), VectorXd(0));
    HybridZonotoped points(MatrixXd(2, 0), (MatrixXd(2, 1) << 5, 0).finished(), VectorXd::Zero(2), MatrixXd(0, 0),
                           MatrixXd(0, 1), VectorXd(0));
    const auto s = minkowski_sum(square, points);
    EXPECT_EQ(s.num_continuous(), 2);
    EXPECT_EQ(s.num_binary(), 1);
    EXPECT_EQ(s.num_constraints(), 0);
    EXPECT_TRUE(contains(s, Eigen::Vector2d(5.5, 0.5)));
    EXPECT_TRUE(contains(s, Eigen::Vector2d(0.5, 0.5)));
    EXPECT_FALSE(contains(s, Eigen::Vector2d(2.5, 0.5)));
}

TEST(SetCore, MinkowskiSumDimensions) {
    std::mt19937 rng(2);
    const auto a = to_unit_form(random_symmetric(rng, 3, 2, 1, 1));
    const auto b = to_unit_form(random_symmetric(rng, 3, 4, 2, 3));
    const auto s = minkowski_sum(a, b);
    EXPECT_EQ(s.num_continuous(), 6);
    EXPECT_EQ(s.num_binary(), 3);
    EXPECT_EQ(s.num_constraints(), 4);
    EXPECT_THROW(minkowski_sum(a, to_unit_form(random_symmetric(rng, 2, 1, 1, 1))), std::invalid_argument);
}

TEST(SetCore, ConvexRelaxationOfConvexSetIsItself) {
    ConstrainedZonotoped cz(MatrixXd::Identity(2, 3), VectorXd::Ones(2), MatrixXd::Ones(1, 3), VectorXd::Ones(1),
                            FactorDomain::unit);
    const auto r = convex_relaxation(HybridZonotoped(cz));
    EXPECT_EQ(r.G, cz.G);
    EXPECT_EQ(r.A, cz.A);
    EXPECT_EQ(r.b, cz.b);
    EXPECT_EQ(r.c, cz.c);
}

TEST(SetCore, SupportOfUnitCell) {
    const auto cell = fix_binary(one_cell(1.0, 1.0, VectorXd::Zero(2)), 0);
    EXPECT_NEAR(support(cell, Eigen::Vector2d(1, 0)), 0.5, 1e-8);
    EXPECT_NEAR(support(cell, Eigen::Vector2d(1, 1)), 1.0, 1e-8);
    EXPECT_THROW(support(cell, Eigen::Vector2d(0, 0)), std::domain_error);
}

TEST(SetCore, SupportOfEmptySetIsDistinct) {
    // xi1 + xi2 = 3 with xi in [0,1]^2 is empty.
    ConstrainedZonotoped empty(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd::Ones(1, 2),
                               VectorXd::Constant(1, 3.0), FactorDomain::unit);
    EXPECT_THROW(support(empty, Eigen::Vector2d(1, 0)), EmptySetError);
}

TEST(SetCore, SupportOfHullMatchesVertexMax) {
    std::mt19937 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        const MatrixXd V = MatrixXd::NullaryExpr(2, 6, [&] { return 3.0 * g(rng); });
        const auto s = hull_set(V);
        for (int d = 0; d < 16; ++d) {
            const VectorXd dir = VectorXd::NullaryExpr(2, [&] { return g(rng); });
            EXPECT_NEAR(support(s, dir), oracle::vertex_max(V, dir), 1e-6);
        }
    }
}

TEST(SetCore, ContainsCellBasics) {
    const auto cell = fix_binary(one_cell(1.0, 1.0, VectorXd::Zero(2)), 0);
    EXPECT_TRUE(contains(cell, Eigen::Vector2d(0, 0)));
    EXPECT_FALSE(contains(cell, Eigen::Vector2d(1.5, 0)));
    EXPECT_TRUE(contains(cell, Eigen::Vector2d(0.49, -0.49)));
    EXPECT_FALSE(contains(cell, Eigen::Vector2d(0.51, 0)));
}

TEST(SetCore, ContainsMatchesHalfspaceOracle) {
    std::mt19937 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    int agree = 0, total = 0;
    for (int t = 0; t < 4; ++t) {
        const MatrixXd V = MatrixXd::NullaryExpr(2, 7, [&] { return 2.0 * g(rng); });
        std::vector<Eigen::Vector2d> pts;
        for (int i = 0; i < V.cols(); ++i) pts.emplace_back(V.col(i));
        const auto h = oracle::hull2d(pts);
        const auto s = hull_set(V);
        for (int i = 0; i < 50; ++i) {
            const Eigen::Vector2d p(u(rng), u(rng));
            ++total;
            agree += contains(s, p, 1e-8) == oracle::in_convex_polygon(h, p, 0.0);
        }
    }
    EXPECT_EQ(agree, total);
}

TEST(SetCore, FeasibleEvaluationIsContained) {
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    const MatrixXd V = MatrixXd::NullaryExpr(2, 5, [&] { return g(rng); });
    const auto s = hull_set(V);
    const HybridZonotoped hz(s);
    for (int i = 0; i < 20; ++i) {
        VectorXd w = VectorXd::NullaryExpr(5, [&] { return u(rng); });
        w /= w.sum();
        const FactorAssignmentd f{w, VectorXd(0)};
        ASSERT_TRUE(is_feasible_assignment(hz, f, 1e-12));
        EXPECT_TRUE(contains(s, evaluate(hz, f).point, 1e-8));
    }
}

TEST(SetCore, RelaxationCommutesWithMinkowskiSum) {
    std::mt19937 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    const auto a = to_unit_form(random_symmetric(rng, 2, 3, 2, 0));
    const auto b = to_unit_form(random_symmetric(rng, 2, 2, 1, 0));
    const auto lhs = convex_relaxation(minkowski_sum(a, b));
    const auto rhs = minkowski_sum(convex_relaxation(a), convex_relaxation(b));
    for (int d = 0; d < 16; ++d) {
        const VectorXd dir = VectorXd::NullaryExpr(2, [&] { return g(rng); });
        EXPECT_NEAR(support(lhs, dir), support(rhs, dir), 1e-6);
    }
}

TEST(SetCore, EliminateForcedZerosCascades) {
    MatrixXd E(3, 4);
    E << 1, 1, 0, 0,
         0, 1, 1, 0,
         0, 0, 1, 1;
    VectorXd f(3);
    f << 0, 0, 1;
    const auto r = eliminate_forced_zeros<double>(E, f, std::vector<bool>(4, true), std::vector<bool>(4, false));
    // Row 0 removes x0 and x1, which leaves x2 = 0 in row 1.
    EXPECT_EQ(r.kept_columns, (std::vector<Eigen::Index>{3}));
    EXPECT_EQ(r.kept_rows, (std::vector<Eigen::Index>{2}));
    EXPECT_FALSE(r.infeasible);
}

TEST(SetCore, EliminateForcedZerosDetectsEmptyRow) {
    MatrixXd E(2, 2);
    E << 1, 0,
         1, 1;
    VectorXd f(2);
    f << 0, 1;
    std::vector<bool> removed{false, true};
    const auto r = eliminate_forced_zeros<double>(E, f, std::vector<bool>(2, true), removed);
    EXPECT_TRUE(r.infeasible);
}
