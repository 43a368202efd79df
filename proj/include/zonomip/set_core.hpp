#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace zonomip {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Range of the continuous factors: symmetric is [-1,1], unit is [0,1]
/// (binary factors are then {-1,1} and {0,1} respectively).
enum class FactorDomain { symmetric, unit };

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 || m.allFinite();
}

template <typename Scalar>
MatrixX<Scalar> hcat(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
    MatrixX<Scalar> out(std::max(a.rows(), b.rows()), a.cols() + b.cols());
    if (a.cols() > 0 && b.cols() > 0) require(a.rows() == b.rows(), "hcat: row mismatch");
    if (a.cols() > 0) out.leftCols(a.cols()) = a;
    if (b.cols() > 0) out.rightCols(b.cols()) = b;
    return out;
}

template <typename Scalar>
MatrixX<Scalar> blkdiag(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

template <typename Scalar>
VectorX<Scalar> vcat(const VectorX<Scalar>& a, const VectorX<Scalar>& b) {
    VectorX<Scalar> out(a.size() + b.size());
    out << a, b;
    return out;
}

}  // namespace detail

/// Z = { G xi + c : xi in [-1,1]^ng }.
template <typename Scalar = double>
struct Zonotope {
    MatrixX<Scalar> generators;
    VectorX<Scalar> center;

    Zonotope() = default;
    Zonotope(MatrixX<Scalar> g, VectorX<Scalar> c) : generators(std::move(g)), center(std::move(c)) {
        detail::require(generators.rows() == center.size() || generators.cols() == 0,
                        "Zonotope: generator rows must equal center dimension");
        if (generators.cols() == 0) generators.resize(center.size(), 0);
        detail::require(detail::all_finite(generators) && detail::all_finite(center),
                        "Zonotope: non-finite entries");
    }

    Eigen::Index dim() const { return center.size(); }
    Eigen::Index num_generators() const { return generators.cols(); }
};

/// Z = { G xi + c : xi in domain^ng, A xi = b }.
template <typename Scalar = double>
struct ConstrainedZonotope {
    MatrixX<Scalar> G;
    VectorX<Scalar> c;
    MatrixX<Scalar> A;
    VectorX<Scalar> b;
    FactorDomain domain = FactorDomain::symmetric;

    ConstrainedZonotope() = default;
    ConstrainedZonotope(MatrixX<Scalar> g, VectorX<Scalar> c_, MatrixX<Scalar> a, VectorX<Scalar> b_,
                        FactorDomain d = FactorDomain::symmetric)
        : G(std::move(g)), c(std::move(c_)), A(std::move(a)), b(std::move(b_)), domain(d) {
        if (G.cols() == 0) G.resize(c.size(), 0);
        if (A.size() == 0) A.resize(b.size(), G.cols());
        detail::require(G.rows() == c.size(), "ConstrainedZonotope: G rows must equal dimension");
        detail::require(A.cols() == G.cols(), "ConstrainedZonotope: A columns must equal n_g");
        detail::require(A.rows() == b.size(), "ConstrainedZonotope: A rows must equal length of b");
        detail::require(detail::all_finite(G) && detail::all_finite(c) && detail::all_finite(A) &&
                            detail::all_finite(b),
                        "ConstrainedZonotope: non-finite entries");
    }

    explicit ConstrainedZonotope(const Zonotope<Scalar>& z)
        : ConstrainedZonotope(z.generators, z.center, MatrixX<Scalar>(0, z.num_generators()),
                              VectorX<Scalar>(0), FactorDomain::symmetric) {}

    Eigen::Index dim() const { return c.size(); }
    Eigen::Index num_generators() const { return G.cols(); }
    Eigen::Index num_constraints() const { return A.rows(); }
};

/// Z = { Gc xc + Gb xb + c : xc in domain^ng, xb binary^nb, Ac xc + Ab xb = b }.
template <typename Scalar = double>
struct HybridZonotope {
    MatrixX<Scalar> Gc;
    MatrixX<Scalar> Gb;
    VectorX<Scalar> c;
    MatrixX<Scalar> Ac;
    MatrixX<Scalar> Ab;
    VectorX<Scalar> b;
    FactorDomain domain = FactorDomain::unit;

    HybridZonotope() = default;
    HybridZonotope(MatrixX<Scalar> gc, MatrixX<Scalar> gb, VectorX<Scalar> c_, MatrixX<Scalar> ac,
                   MatrixX<Scalar> ab, VectorX<Scalar> b_, FactorDomain d = FactorDomain::unit)
        : Gc(std::move(gc)), Gb(std::move(gb)), c(std::move(c_)), Ac(std::move(ac)), Ab(std::move(ab)),
          b(std::move(b_)), domain(d) {
        const auto n = c.size();
        if (Gc.cols() == 0) Gc.resize(n, 0);
        if (Gb.cols() == 0) Gb.resize(n, 0);
        if (Ac.size() == 0) Ac.resize(b.size(), Gc.cols());
        if (Ab.size() == 0) Ab.resize(b.size(), Gb.cols());
        detail::require(Gc.rows() == n && Gb.rows() == n, "HybridZonotope: generator rows must equal dimension");
        detail::require(Ac.cols() == Gc.cols(), "HybridZonotope: Ac columns must equal n_g");
        detail::require(Ab.cols() == Gb.cols(), "HybridZonotope: Ab columns must equal n_b");
        detail::require(Ac.rows() == b.size() && Ab.rows() == b.size(),
                        "HybridZonotope: constraint rows must equal length of b");
        detail::require(detail::all_finite(Gc) && detail::all_finite(Gb) && detail::all_finite(c) &&
                            detail::all_finite(Ac) && detail::all_finite(Ab) && detail::all_finite(b),
                        "HybridZonotope: non-finite entries");
    }

    explicit HybridZonotope(const ConstrainedZonotope<Scalar>& z)
        : HybridZonotope(z.G, MatrixX<Scalar>(z.dim(), 0), z.c, z.A, MatrixX<Scalar>(z.num_constraints(), 0),
                         z.b, z.domain) {}

    Eigen::Index dim() const { return c.size(); }
    Eigen::Index num_continuous() const { return Gc.cols(); }
    Eigen::Index num_binary() const { return Gb.cols(); }
    Eigen::Index num_constraints() const { return b.size(); }
};

template <typename Scalar = double>
struct FactorAssignment {
    VectorX<Scalar> xi_c;
    VectorX<Scalar> xi_b;
};

template <typename Scalar = double>
struct Evaluation {
    VectorX<Scalar> point;
    VectorX<Scalar> residual;
};

/// Rewrites a symmetric-form set over [0,1] factors: G' = 2G, c' = c - G 1,
/// A' = 2A, b' = b + A 1.
template <typename Scalar>
HybridZonotope<Scalar> to_unit_form(const HybridZonotope<Scalar>& z) {
    if (z.domain != FactorDomain::symmetric)
        throw std::invalid_argument("to_unit_form: set is already in unit form");
    const auto ones_c = VectorX<Scalar>::Ones(z.num_continuous());
    const auto ones_b = VectorX<Scalar>::Ones(z.num_binary());
    VectorX<Scalar> c = z.c - z.Gc * ones_c - z.Gb * ones_b;
    VectorX<Scalar> b = z.b + z.Ac * ones_c + z.Ab * ones_b;
    return HybridZonotope<Scalar>(Scalar(2) * z.Gc, Scalar(2) * z.Gb, std::move(c), Scalar(2) * z.Ac,
                                  Scalar(2) * z.Ab, std::move(b), FactorDomain::unit);
}

template <typename Scalar>
ConstrainedZonotope<Scalar> to_unit_form(const ConstrainedZonotope<Scalar>& z) {
    if (z.domain != FactorDomain::symmetric)
        throw std::invalid_argument("to_unit_form: set is already in unit form");
    const auto ones = VectorX<Scalar>::Ones(z.num_generators());
    return ConstrainedZonotope<Scalar>(Scalar(2) * z.G, z.c - z.G * ones, Scalar(2) * z.A, z.b + z.A * ones,
                                       FactorDomain::unit);
}

template <typename Scalar>
Evaluation<Scalar> evaluate(const HybridZonotope<Scalar>& z, const FactorAssignment<Scalar>& f) {
    if (f.xi_c.size() != z.num_continuous() || f.xi_b.size() != z.num_binary())
        throw std::invalid_argument("evaluate: factor dimensions do not match the set");
    return {z.Gc * f.xi_c + z.Gb * f.xi_b + z.c, z.Ac * f.xi_c + z.Ab * f.xi_b - z.b};
}

/// True when the factors lie in the set's factor domain (binary entries exactly
/// at the endpoints) and the constraint residual is within tol.
template <typename Scalar>
bool is_feasible_assignment(const HybridZonotope<Scalar>& z, const FactorAssignment<Scalar>& f, Scalar tol) {
    const Scalar lo = z.domain == FactorDomain::unit ? Scalar(0) : Scalar(-1);
    for (Eigen::Index i = 0; i < f.xi_c.size(); ++i)
        if (f.xi_c[i] < lo - tol || f.xi_c[i] > Scalar(1) + tol) return false;
    for (Eigen::Index i = 0; i < f.xi_b.size(); ++i)
        if (f.xi_b[i] != lo && f.xi_b[i] != Scalar(1)) return false;
    const auto r = evaluate(z, f).residual;
    return r.size() == 0 || r.cwiseAbs().maxCoeff() <= tol;
}

template <typename Scalar>
HybridZonotope<Scalar> minkowski_sum(const HybridZonotope<Scalar>& a, const HybridZonotope<Scalar>& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("minkowski_sum: dimension mismatch");
    if (a.domain != b.domain) throw std::invalid_argument("minkowski_sum: factor domains differ");
    return HybridZonotope<Scalar>(detail::hcat(a.Gc, b.Gc), detail::hcat(a.Gb, b.Gb), a.c + b.c,
                                  detail::blkdiag(a.Ac, b.Ac), detail::blkdiag(a.Ab, b.Ab),
                                  detail::vcat(a.b, b.b), a.domain);
}

template <typename Scalar>
ConstrainedZonotope<Scalar> minkowski_sum(const ConstrainedZonotope<Scalar>& a,
                                          const ConstrainedZonotope<Scalar>& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("minkowski_sum: dimension mismatch");
    if (a.domain != b.domain) throw std::invalid_argument("minkowski_sum: factor domains differ");
    return ConstrainedZonotope<Scalar>(detail::hcat(a.G, b.G), a.c + b.c, detail::blkdiag(a.A, b.A),
                                       detail::vcat(a.b, b.b), a.domain);
}

/// Binary factors relaxed onto the continuous domain: generators [Gc Gb],
/// constraints [Ac Ab].
template <typename Scalar>
ConstrainedZonotope<Scalar> convex_relaxation(const HybridZonotope<Scalar>& z) {
    return ConstrainedZonotope<Scalar>(detail::hcat(z.Gc, z.Gb), z.c, detail::hcat(z.Ac, z.Ab), z.b, z.domain);
}

/// Convex region selected by a single binary factor (unit form):
/// < Gc, Gb e_i + c, Ac, b - Ab e_i >.
template <typename Scalar>
ConstrainedZonotope<Scalar> fix_binary(const HybridZonotope<Scalar>& z, Eigen::Index region) {
    if (z.domain != FactorDomain::unit) throw std::invalid_argument("fix_binary: set must be in unit form");
    if (region < 0 || region >= z.num_binary()) throw std::out_of_range("fix_binary: region index out of range");
    return ConstrainedZonotope<Scalar>(z.Gc, z.Gb.col(region) + z.c, z.Ac, z.b - z.Ab.col(region),
                                       FactorDomain::unit);
}

/// Result of eliminating variables forced to zero from an equality system
/// E x = f with x >= 0 on the flagged columns.
struct ZeroElimination {
    std::vector<Eigen::Index> kept_columns;
    std::vector<Eigen::Index> kept_rows;
    bool infeasible = false;
};

/// Removes the columns in `removed`, then repeatedly finds rows
/// sum_i gamma_i x_i = 0 whose remaining coefficients share one sign and whose
/// variables are all nonnegative, and removes those variables too. Rows left
/// with no coefficients are dropped; an emptied row with nonzero right-hand
/// side marks the system infeasible.
template <typename Scalar>
ZeroElimination eliminate_forced_zeros(const MatrixX<Scalar>& E, const VectorX<Scalar>& f,
                                       const std::vector<bool>& nonnegative, std::vector<bool> removed) {
    const auto rows = E.rows();
    const auto cols = E.cols();
    detail::require(static_cast<Eigen::Index>(nonnegative.size()) == cols &&
                        static_cast<Eigen::Index>(removed.size()) == cols,
                    "eliminate_forced_zeros: flag length mismatch");
    bool changed = true;
    while (changed) {
        changed = false;
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (f[r] != Scalar(0)) continue;
            int sign = 0;
            bool candidate = true;
            bool any = false;
            for (Eigen::Index j = 0; j < cols && candidate; ++j) {
                if (removed[j] || E(r, j) == Scalar(0)) continue;
                any = true;
                const int s = E(r, j) > Scalar(0) ? 1 : -1;
                if (sign == 0) sign = s;
                if (s != sign || !nonnegative[j]) candidate = false;
            }
            if (!candidate || !any) continue;
            for (Eigen::Index j = 0; j < cols; ++j) {
                if (!removed[j] && E(r, j) != Scalar(0)) {
                    removed[j] = true;
                    changed = true;
                }
            }
        }
    }
    ZeroElimination out;
    for (Eigen::Index j = 0; j < cols; ++j)
        if (!removed[j]) out.kept_columns.push_back(j);
    for (Eigen::Index r = 0; r < rows; ++r) {
        bool empty = true;
        for (auto j : out.kept_columns)
            if (E(r, j) != Scalar(0)) {
                empty = false;
                break;
            }
        if (!empty)
            out.kept_rows.push_back(r);
        else if (f[r] != Scalar(0))
            out.infeasible = true;
    }
    return out;
}

/// Unit-form hybrid zonotope restricted to the listed regions (binary factor
/// indices): other binaries are fixed to zero and continuous factors forced to
/// zero by the remaining equalities are removed.
template <typename Scalar>
HybridZonotope<Scalar> restrict_regions(const HybridZonotope<Scalar>& z, const std::vector<Eigen::Index>& regions) {
    if (z.domain != FactorDomain::unit) throw std::invalid_argument("restrict_regions: set must be in unit form");
    const auto ng = z.num_continuous();
    const auto nb = z.num_binary();
    std::vector<bool> removed(ng + nb, false);
    for (Eigen::Index j = 0; j < nb; ++j) removed[ng + j] = true;
    for (auto r : regions) {
        if (r < 0 || r >= nb) throw std::out_of_range("restrict_regions: region index out of range");
        removed[ng + r] = false;
    }
    const MatrixX<Scalar> E = detail::hcat(z.Ac, z.Ab);
    const auto elim = eliminate_forced_zeros<Scalar>(E, z.b, std::vector<bool>(ng + nb, true), removed);
    if (elim.infeasible) throw std::invalid_argument("restrict_regions: restriction is empty");
    std::vector<Eigen::Index> kc, kb;
    for (auto j : elim.kept_columns) (j < ng ? kc : kb).push_back(j < ng ? j : j - ng);
    const Eigen::Index nr = static_cast<Eigen::Index>(elim.kept_rows.size());
    MatrixX<Scalar> gc(z.dim(), kc.size()), gb(z.dim(), kb.size());
    MatrixX<Scalar> ac(nr, kc.size()), ab(nr, kb.size());
    VectorX<Scalar> b(nr);
    for (std::size_t j = 0; j < kc.size(); ++j) gc.col(j) = z.Gc.col(kc[j]);
    for (std::size_t j = 0; j < kb.size(); ++j) gb.col(j) = z.Gb.col(kb[j]);
    for (Eigen::Index r = 0; r < nr; ++r) {
        const auto src = elim.kept_rows[r];
        for (std::size_t j = 0; j < kc.size(); ++j) ac(r, j) = z.Ac(src, kc[j]);
        for (std::size_t j = 0; j < kb.size(); ++j) ab(r, j) = z.Ab(src, kb[j]);
        b[r] = z.b[src];
    }
    return HybridZonotope<Scalar>(std::move(gc), std::move(gb), z.c, std::move(ac), std::move(ab), std::move(b),
                                  FactorDomain::unit);
}

/// Convex region i of a choice-constrained unit-form set, with factors the
/// other regions force to zero removed.
template <typename Scalar>
ConstrainedZonotope<Scalar> region_set(const HybridZonotope<Scalar>& z, Eigen::Index region) {
    const auto reduced = restrict_regions(z, {region});
    auto cz = fix_binary(reduced, 0);
    // Rows that only involved the fixed binary are now 0 = 0.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < cz.A.rows(); ++r)
        if (cz.A.row(r).cwiseAbs().sum() > Scalar(0) || cz.b[r] != Scalar(0)) keep.push_back(r);
    MatrixX<Scalar> a(keep.size(), cz.G.cols());
    VectorX<Scalar> b(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        a.row(i) = cz.A.row(keep[i]);
        b[i] = cz.b[keep[i]];
    }
    return ConstrainedZonotope<Scalar>(cz.G, cz.c, std::move(a), std::move(b), FactorDomain::unit);
}

using Zonotoped = Zonotope<double>;
using ConstrainedZonotoped = ConstrainedZonotope<double>;
using HybridZonotoped = HybridZonotope<double>;
using FactorAssignmentd = FactorAssignment<double>;

}  // namespace zonomip
