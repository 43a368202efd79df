#pragma once

// Small MIQP instances shared by the solver tests and the acceptance run.

#include "zonomip/miqp_bnb.hpp"
#include "zonomip/sim_harness.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>

namespace zonomip::fixtures {

inline OgmMap grid(int nx, int ny, double d, std::vector<std::optional<double>> occ = {}) {
    OgmMap g;
    g.cell_size = VectorXd::Constant(2, d);
    g.origin = VectorXd::Zero(2);
    g.grid = {nx, ny};
    g.occupancy = occ.empty() ? std::vector<std::optional<double>>(nx * ny, 0.0) : occ;
    return g;
}

// L-shaped corridor of four 2 m cells: (0,0), (1,0), (2,0), (2,1) of a 3x3 grid.
inline OgmMap corridor() {
    const std::optional<double> x;
    return grid(3, 3, 2.0, {0.0, 0.0, 0.0, x, x, 0.0, x, x, x});
}

// Hard free-space and velocity limits so reachability with d_max = sqrt(2)
// per step is a provable outer bound.
inline MpcConfig oracle_config(int N, Eigen::Vector2d start, Eigen::Vector2d ref) {
    MpcConfig cfg = default_benchmark_config(2);
    cfg.N = N;
    cfg.W_hz = VectorXd::Zero(2);
    cfg.sigma_hz_max = VectorXd::Zero(2);
    cfg.state_set->sigma_max.setZero();
    cfg.x0 = (VectorXd(4) << start[0], 0.0, start[1], 0.0).finished();
    cfg.x_ref = (VectorXd(4) << ref[0], 0.0, ref[1], 0.0).finished();
    return cfg;
}

struct Instance {
    Map map;
    MpcConfig cfg;
    VectorXd costs;
    MultiStageMiqp miqp;
    ReachTables tables;
    std::vector<RegionHrep> hreps;

    MiqpSolver solver() const { return MiqpSolver(miqp, hreps, tables); }
};

inline std::unique_ptr<Instance> make_instance(Map map, MpcConfig cfg, VectorXd costs = {},
                                        Formulation f = Formulation::hz, double d_max = std::sqrt(2.0)) {
    auto in = std::make_unique<Instance>();
    in->map = std::move(map);
    in->cfg = std::move(cfg);
    in->costs = costs.size() ? costs : VectorXd::Zero(in->map.num_regions());
    const auto base = build_convex_problem(in->cfg);
    in->miqp = f == Formulation::hz ? attach_hybzono(in->cfg, base, to_hybrid_zonotope(in->map), in->costs)
                                    : attach_bigm(in->cfg, base, bigm_encoding(in->map), in->costs);
    in->tables = build_tables(in->map, {d_max, in->cfg.N, 1}, VectorXd(in->cfg.H * in->cfg.x0));
    in->hreps = region_hreps(in->map);
    return in;
}

inline SolverSettings exact() {
    SolverSettings s;
    s.eps_a = 1e-6;
    s.eps_r = 1e-6;
    return s;
}

// Random n x n grid of 2 m cells with obstacles, start and reference cell centers free.
inline std::unique_ptr<Instance> random_grid(std::mt19937& rng, int N, int n = 3) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::optional<double>> occ(n * n);
    for (auto& o : occ)
        if (u(rng) < 0.7) o = 0.0;
    const int s = static_cast<int>(u(rng) * n * n) % (n * n);
    const int t = static_cast<int>(u(rng) * n * n) % (n * n);
    occ[s] = 0.0;
    occ[t] = 0.0;
    auto center = [n](int i) { return Eigen::Vector2d(1.0 + 2.0 * (i % n), 1.0 + 2.0 * (i / n)); };
    return make_instance(Map{grid(n, n, 2.0, occ), "rand"}, oracle_config(N, center(s), center(t)));
}

// Random union of at most six jittered quads on a 3x2 lattice.
inline std::unique_ptr<Instance> random_quads(std::mt19937& rng, int N) {
    std::uniform_real_distribution<double> jit(-0.3, 0.3), u(0.0, 1.0);
    PolytopicMap m;
    m.vertices.resize(2, 12);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 4; ++i) m.vertices.col(i + 4 * j) = Eigen::Vector2d(2.0 * i + jit(rng), 2.0 * j + jit(rng));
    std::vector<std::array<int, 4>> quads;
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 3; ++i)
            if (quads.empty() || u(rng) < 0.7) quads.push_back({i + 4 * j, i + 1 + 4 * j, i + 1 + 4 * (j + 1), i + 4 * (j + 1)});
    m.incidence = MatrixXi::Zero(12, static_cast<Index>(quads.size()));
    for (std::size_t r = 0; r < quads.size(); ++r)
        for (int v : quads[r]) m.incidence(v, static_cast<Index>(r)) = 1;
    std::vector<Index> used;
    for (Index v = 0; v < 12; ++v)
        if (m.incidence.row(v).sum() > 0) used.push_back(v);
    PolytopicMap out;
    out.vertices.resize(2, static_cast<Index>(used.size()));
    out.incidence.resize(static_cast<Index>(used.size()), m.incidence.cols());
    for (std::size_t i = 0; i < used.size(); ++i) {
        out.vertices.col(static_cast<Index>(i)) = m.vertices.col(used[i]);
        out.incidence.row(static_cast<Index>(i)) = m.incidence.row(used[i]);
    }
    out.region_costs = VectorXd::Zero(out.incidence.cols());
    const Map map{out, "quads"};
    auto centroid = [&](int r) { return Eigen::Vector2d(region_vertices(map, r).rowwise().mean()); };
    const int nf = map.num_regions();
    const int s = static_cast<int>(u(rng) * nf) % nf, t = static_cast<int>(u(rng) * nf) % nf;
    return make_instance(map, oracle_config(N, centroid(s), centroid(t)));
}

inline Node all_regions_node(int N, int nf) {
    Node n;
    std::vector<int> all(nf);
    for (int r = 0; r < nf; ++r) all[r] = r;
    n.regions.assign(N + 1, all);
    return n;
}

// Random union of quads on a jittered lattice; adjacent quads share vertices.
inline PolytopicMap random_quad_union(std::mt19937& rng, int nx, int ny, double keep = 1.0) {
    std::uniform_real_distribution<double> jit(-0.2, 0.2), u(0.0, 1.0);
    const int vx = nx + 1, vy = ny + 1;
    PolytopicMap m;
    m.vertices.resize(2, vx * vy);
    for (int j = 0; j < vy; ++j)
        for (int i = 0; i < vx; ++i) m.vertices.col(i + vx * j) = Eigen::Vector2d(2.0 * i + jit(rng), 2.0 * j + jit(rng));
    std::vector<std::array<int, 4>> quads;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (quads.empty() || u(rng) < keep)
                quads.push_back({i + vx * j, i + 1 + vx * j, i + vx * (j + 1), i + 1 + vx * (j + 1)});
    std::vector<int> used(vx * vy, 0);
    for (const auto& q : quads)
        for (int v : q) used[v] = 1;
    std::vector<int> remap(vx * vy, -1);
    int nv = 0;
    for (int v = 0; v < vx * vy; ++v)
        if (used[v]) remap[v] = nv++;
    MatrixXd V(2, nv);
    for (int v = 0; v < vx * vy; ++v)
        if (used[v]) V.col(remap[v]) = m.vertices.col(v);
    m.vertices = V;
    m.incidence = MatrixXi::Zero(nv, static_cast<int>(quads.size()));
    for (std::size_t r = 0; r < quads.size(); ++r)
        for (int v : quads[r]) m.incidence(remap[v], static_cast<int>(r)) = 1;
    m.region_costs = VectorXd::Zero(static_cast<int>(quads.size()));
    return m;
}

}  // namespace zonomip::fixtures
