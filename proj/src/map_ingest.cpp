#include "zonomip/map_ingest.hpp"

#include "zonomip/set_queries.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace zonomip {

using nlohmann::json;

namespace {

constexpr double kHullTol = 1e-9;

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

RegionHrep hull_hrep_2d(const MatrixXd& V) {
    std::vector<Eigen::Vector2d> pts;
    for (Index i = 0; i < V.cols(); ++i) pts.emplace_back(V.col(i));
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return (a - b).norm() == 0.0; }),
              pts.end());
    if (pts.size() < 3) fail("hull: fewer than three distinct vertices");
    const double scale = 1.0 + V.cwiseAbs().maxCoeff();
    auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
    };
    std::vector<Eigen::Vector2d> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= kHullTol * scale * scale) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= kHullTol * scale * scale) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    if (h.size() < 3) fail("hull: vertices are collinear");
    RegionHrep r;
    r.H.resize(static_cast<Index>(h.size()), 2);
    r.h.resize(static_cast<Index>(h.size()));
    for (std::size_t i = 0; i < h.size(); ++i) {
        const Eigen::Vector2d e = h[(i + 1) % h.size()] - h[i];
        const Eigen::Vector2d n = Eigen::Vector2d(e.y(), -e.x()).normalized();
        r.H.row(static_cast<Index>(i)) = n.transpose();
        r.h[static_cast<Index>(i)] = n.dot(h[i]);
    }
    return r;
}

RegionHrep hull_hrep_3d(const MatrixXd& V) {
    const auto nv = V.cols();
    if (nv < 4) fail("hull: fewer than four vertices");
    const VectorXd mean = V.rowwise().mean();
    const MatrixXd centered = V.colwise() - mean;
    const double scale = 1.0 + V.cwiseAbs().maxCoeff();
    Eigen::JacobiSVD<MatrixXd> svd(centered);
    if (svd.singularValues()[2] <= kHullTol * scale) fail("hull: vertices are coplanar");
    std::vector<Eigen::Vector3d> normals;
    std::vector<double> offsets;
    for (Index a = 0; a < nv; ++a)
        for (Index b = a + 1; b < nv; ++b)
            for (Index c = b + 1; c < nv; ++c) {
                const Eigen::Vector3d pa = V.col(a), pb = V.col(b), pc = V.col(c);
                Eigen::Vector3d n = (pb - pa).cross(pc - pa);
                if (n.norm() <= kHullTol * scale * scale) continue;
                n.normalize();
                const VectorXd side = V.transpose() * n - VectorXd::Constant(nv, n.dot(pa));
                double sign = 0.0;
                if (side.maxCoeff() <= kHullTol * scale)
                    sign = 1.0;
                else if (side.minCoeff() >= -kHullTol * scale)
                    sign = -1.0;
                else
                    continue;
                const Eigen::Vector3d nn = sign * n;
                const double off = nn.dot(pa);
                bool dup = false;
                for (std::size_t i = 0; i < normals.size() && !dup; ++i)
                    dup = (normals[i] - nn).norm() < 1e-9 && std::abs(offsets[i] - off) < 1e-9 * scale;
                if (!dup) {
                    normals.push_back(nn);
                    offsets.push_back(off);
                }
            }
    RegionHrep r;
    r.H.resize(static_cast<Index>(normals.size()), 3);
    r.h.resize(static_cast<Index>(normals.size()));
    for (std::size_t i = 0; i < normals.size(); ++i) {
        r.H.row(static_cast<Index>(i)) = normals[i].transpose();
        r.h[static_cast<Index>(i)] = offsets[i];
    }
    return r;
}

VectorXd json_vector(const json& j, const std::string& what) {
    if (!j.is_array()) fail("map: '" + what + "' must be an array");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail("map: '" + what + "' must hold numbers");
        v[static_cast<Index>(i)] = j[i].get<double>();
    }
    return v;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

MatrixXd OgmMap::free_centers() const {
    const auto idx = free_cell_indices();
    const int n = dim();
    MatrixXd c(n, static_cast<Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        int rem = idx[r];
        for (int a = 0; a < n; ++a) {
            const int ia = rem % grid[a];
            rem /= grid[a];
            c(a, static_cast<Index>(r)) = origin[a] + (ia + 0.5) * cell_size[a];
        }
    }
    return c;
}

VectorXd OgmMap::free_probabilities() const {
    const auto idx = free_cell_indices();
    VectorXd p(static_cast<Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) p[static_cast<Index>(r)] = *occupancy[idx[r]];
    return p;
}

std::vector<int> OgmMap::free_cell_indices() const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < occupancy.size(); ++i)
        if (occupancy[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

int OgmMap::num_regions() const { return static_cast<int>(free_cell_indices().size()); }

int Map::dim() const {
    return std::visit([](const auto& m) { return m.dim(); }, data);
}

int Map::num_regions() const {
    return std::visit([](const auto& m) { return m.num_regions(); }, data);
}

bool RegionHrep::contains(const VectorXd& y, double tol) const {
    return H.rows() == 0 || (H * y - h).maxCoeff() <= tol;
}

bool BigMEncoding::satisfied(const VectorXd& y, const VectorXd& xi_b, double tol) const {
    if (std::abs(xi_b.sum() - 1.0) > tol) return false;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& reg = regions[r];
        const VectorXd lhs = reg.H * y - reg.h - big_m[r] * (1.0 - xi_b[static_cast<Index>(r)]);
        if (lhs.size() > 0 && lhs.maxCoeff() > tol) return false;
    }
    return true;
}

RegionHrep hull_hrep(const MatrixXd& V) {
    if (V.rows() == 1) {
        const double lo = V.minCoeff(), hi = V.maxCoeff();
        if (!(hi - lo > kHullTol * (1.0 + std::abs(lo) + std::abs(hi)))) fail("hull: interval has zero length");
        RegionHrep r;
        r.H = (MatrixXd(2, 1) << 1.0, -1.0).finished();
        r.h = (VectorXd(2) << hi, -lo).finished();
        return r;
    }
    if (V.rows() == 2) return hull_hrep_2d(V);
    if (V.rows() == 3) return hull_hrep_3d(V);
    fail("hull: only 1-D, 2-D and 3-D regions are supported");
    return {};
}

void validate(const PolytopicMap& m) {
    const int n = m.dim();
    if (n < 1 || n > 3) fail("vrep map: dimension must be 1, 2 or 3");
    if (m.incidence.rows() != m.vertices.cols()) fail("vrep map: incidence needs one row per vertex");
    if (m.num_regions() < 1) fail("vrep map: no regions");
    if (!m.vertices.allFinite()) fail("vrep map: non-finite vertex coordinates");
    if (m.region_costs.size() != m.num_regions()) fail("vrep map: region_costs length must equal region count");
    if (!m.region_costs.allFinite() || (m.region_costs.array() < 0.0).any())
        fail("vrep map: region costs must be finite and nonnegative");
    for (Index i = 0; i < m.incidence.rows(); ++i)
        for (Index r = 0; r < m.incidence.cols(); ++r)
            if (m.incidence(i, r) != 0 && m.incidence(i, r) != 1) fail("vrep map: incidence entries must be 0 or 1");
    for (int r = 0; r < m.num_regions(); ++r) {
        if (m.incidence.col(r).sum() < n + 1)
            fail("vrep map: degenerate region " + std::to_string(r) + " (fewer than " + std::to_string(n + 1) +
                 " vertices)");
        MatrixXd V(n, m.incidence.col(r).sum());
        Index c = 0;
        for (Index i = 0; i < m.incidence.rows(); ++i)
            if (m.incidence(i, r)) V.col(c++) = m.vertices.col(i);
        try {
            hull_hrep(V);
        } catch (const std::invalid_argument& e) {
            fail("vrep map: degenerate region " + std::to_string(r) + ": " + e.what());
        }
    }
    for (Index i = 0; i < m.incidence.rows(); ++i)
        if (m.incidence.row(i).sum() == 0) fail("vrep map: vertex " + std::to_string(i) + " is not in any region");
}

void validate(const OgmMap& m) {
    const int n = m.dim();
    if (n != 2 && n != 3) fail("ogm map: dimension must be 2 or 3");
    if (m.origin.size() != n || static_cast<int>(m.grid.size()) != n)
        fail("ogm map: origin and grid must match the dimension");
    if (!(m.cell_size.array() > 0.0).all() || !m.cell_size.allFinite()) fail("ogm map: cell sizes must be positive");
    if (!m.origin.allFinite()) fail("ogm map: non-finite origin");
    std::size_t cells = 1;
    for (int g : m.grid) {
        if (g < 1) fail("ogm map: grid extents must be positive");
        cells *= static_cast<std::size_t>(g);
    }
    if (m.occupancy.size() != cells) fail("ogm map: occupancy length must equal the number of cells");
    for (std::size_t i = 0; i < cells; ++i)
        if (m.occupancy[i] && !(*m.occupancy[i] >= 0.0 && *m.occupancy[i] <= 1.0))
            fail("ogm map: occupancy of cell " + std::to_string(i) + " outside [0,1]");
    if (m.num_regions() == 0) fail("ogm map: zero free cells");
}

HybridZonotoped from_vrep_union(const PolytopicMap& m) {
    validate(m);
    const int n = m.dim();
    const Index nv = m.vertices.cols();
    const Index nf = m.num_regions();
    MatrixXd gc = MatrixXd::Zero(n, 2 * nv);
    gc.leftCols(nv) = m.vertices;
    MatrixXd ac = MatrixXd::Zero(nv + 2, 2 * nv);
    MatrixXd ab = MatrixXd::Zero(nv + 2, nf);
    VectorXd b = VectorXd::Zero(nv + 2);
    ac.row(0).head(nv).setOnes();
    ab.row(1).setOnes();
    b[0] = 1.0;
    b[1] = 1.0;
    const MatrixXd M = m.incidence.cast<double>();
    ac.bottomLeftCorner(nv, nv).setIdentity();
    ac.bottomRightCorner(nv, nv) = M.rowwise().sum().asDiagonal();
    ab.bottomRows(nv) = -M;
    return HybridZonotoped(gc, MatrixXd::Zero(n, nf), VectorXd::Zero(n), ac, ab, b, FactorDomain::unit);
}

HybridZonotoped from_ogm(const OgmMap& m) {
    validate(m);
    const int n = m.dim();
    const MatrixXd centers = m.free_centers();
    return HybridZonotoped(MatrixXd(m.cell_size.asDiagonal()), centers, -0.5 * m.cell_size, MatrixXd::Zero(1, n),
                           MatrixXd::Ones(1, centers.cols()), VectorXd::Ones(1), FactorDomain::unit);
}

HybridZonotoped to_hybrid_zonotope(const Map& m) {
    return m.is_ogm() ? from_ogm(m.ogm()) : from_vrep_union(m.vrep());
}

MatrixXd region_vertices(const Map& m, int r) {
    if (r < 0 || r >= m.num_regions()) throw std::out_of_range("region_vertices: region index out of range");
    if (m.is_ogm()) {
        const auto& g = m.ogm();
        const int n = g.dim();
        const VectorXd c = g.free_centers().col(r);
        MatrixXd V(n, 1 << n);
        for (int mask = 0; mask < (1 << n); ++mask)
            for (int a = 0; a < n; ++a) V(a, mask) = c[a] + ((mask >> a) & 1 ? 0.5 : -0.5) * g.cell_size[a];
        return V;
    }
    const auto& p = m.vrep();
    MatrixXd V(p.dim(), p.incidence.col(r).sum());
    Index c = 0;
    for (Index i = 0; i < p.incidence.rows(); ++i)
        if (p.incidence(i, r)) V.col(c++) = p.vertices.col(i);
    return V;
}

std::vector<RegionHrep> region_hreps(const PolytopicMap& m) {
    Map wrapped{m, ""};
    std::vector<RegionHrep> out;
    for (int r = 0; r < m.num_regions(); ++r) {
        try {
            out.push_back(hull_hrep(region_vertices(wrapped, r)));
        } catch (const std::invalid_argument& e) {
            fail("region " + std::to_string(r) + ": " + e.what());
        }
    }
    return out;
}

std::vector<RegionHrep> region_hreps(const OgmMap& m) {
    const int n = m.dim();
    const MatrixXd centers = m.free_centers();
    std::vector<RegionHrep> out;
    for (Index r = 0; r < centers.cols(); ++r) {
        RegionHrep h;
        h.H.resize(2 * n, n);
        h.H << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
        h.h.resize(2 * n);
        h.h << centers.col(r) + 0.5 * m.cell_size, -(centers.col(r) - 0.5 * m.cell_size);
        out.push_back(std::move(h));
    }
    return out;
}

std::vector<RegionHrep> region_hreps(const Map& m) {
    return std::visit([](const auto& x) { return region_hreps(x); }, m.data);
}

std::pair<VectorXd, VectorXd> bounding_box(const Map& m) {
    if (m.is_ogm()) {
        const auto& g = m.ogm();
        const MatrixXd c = g.free_centers();
        return {c.rowwise().minCoeff() - 0.5 * g.cell_size, c.rowwise().maxCoeff() + 0.5 * g.cell_size};
    }
    const auto& p = m.vrep();
    return {p.vertices.rowwise().minCoeff(), p.vertices.rowwise().maxCoeff()};
}

BigMEncoding bigm_encoding(const Map& m) {
    BigMEncoding enc;
    enc.regions = region_hreps(m);
    std::tie(enc.box_lower, enc.box_upper) = bounding_box(m);
    if (!enc.box_lower.allFinite() || !enc.box_upper.allFinite()) fail("bigm: map has no bounding box");
    for (const auto& reg : enc.regions) {
        VectorXd M(reg.H.rows());
        for (Index i = 0; i < reg.H.rows(); ++i) {
            double mx = -reg.h[i];
            for (Index a = 0; a < reg.H.cols(); ++a)
                mx += std::max(reg.H(i, a) * enc.box_lower[a], reg.H(i, a) * enc.box_upper[a]);
            M[i] = std::max(0.0, mx);
        }
        enc.big_m.push_back(std::move(M));
    }
    return enc;
}

VectorXd region_costs_vector(const Map& m, double kappa) {
    if (m.is_ogm()) {
        if (kappa < 0.0) fail("region costs: kappa must be nonnegative");
        return kappa * m.ogm().free_probabilities();
    }
    return m.vrep().region_costs;
}

Map parse_map(const std::string& json_text, const std::string& name) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("map: invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type")) fail("map: missing 'type'");
    const auto type = j.at("type").get<std::string>();
    const int dim = j.value("dim", 2);
    Map out;
    out.name = j.value("name", name);
    if (type == "vrep") {
        PolytopicMap p;
        const auto& verts = j.at("vertices");
        if (!verts.is_array() || verts.empty()) fail("map: 'vertices' must be a non-empty array");
        p.vertices.resize(dim, static_cast<Index>(verts.size()));
        for (std::size_t i = 0; i < verts.size(); ++i) {
            const VectorXd v = json_vector(verts[i], "vertices");
            if (v.size() != dim) fail("map: vertex " + std::to_string(i) + " has wrong dimension");
            p.vertices.col(static_cast<Index>(i)) = v;
        }
        const auto& inc = j.at("incidence");
        if (!inc.is_array() || inc.size() != verts.size()) fail("map: 'incidence' needs one row per vertex");
        const std::size_t nf = inc[0].size();
        p.incidence.resize(static_cast<Index>(inc.size()), static_cast<Index>(nf));
        for (std::size_t i = 0; i < inc.size(); ++i) {
            if (!inc[i].is_array() || inc[i].size() != nf) fail("map: ragged 'incidence' row " + std::to_string(i));
            for (std::size_t r = 0; r < nf; ++r) p.incidence(static_cast<Index>(i), static_cast<Index>(r)) = inc[i][r].get<int>();
        }
        p.region_costs = j.contains("region_costs") ? json_vector(j.at("region_costs"), "region_costs")
                                                     : VectorXd::Zero(static_cast<Index>(nf));
        validate(p);
        out.data = std::move(p);
    } else if (type == "ogm") {
        OgmMap g;
        g.cell_size = json_vector(j.at("cell_size"), "cell_size");
        g.origin = json_vector(j.at("origin"), "origin");
        g.grid = j.at("grid").get<std::vector<int>>();
        if (g.cell_size.size() != dim) fail("map: 'cell_size' must match 'dim'");
        for (const auto& o : j.at("occupancy")) {
            if (o.is_null())
                g.occupancy.emplace_back(std::nullopt);
            else if (o.is_number())
                g.occupancy.emplace_back(o.get<double>());
            else
                fail("map: occupancy entries must be numbers or null");
        }
        validate(g);
        out.data = std::move(g);
    } else {
        fail("map: unknown type '" + type + "'");
    }
    return out;
}

Map load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("map: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto stem = path.substr(path.find_last_of('/') + 1);
    stem = stem.substr(0, stem.find_last_of('.'));
    return parse_map(ss.str(), stem);
}

std::string map_to_json(const Map& m) {
    json j;
    if (m.is_ogm()) {
        const auto& g = m.ogm();
        j["type"] = "ogm";
        j["dim"] = g.dim();
        j["cell_size"] = std::vector<double>(g.cell_size.data(), g.cell_size.data() + g.cell_size.size());
        j["origin"] = std::vector<double>(g.origin.data(), g.origin.data() + g.origin.size());
        j["grid"] = g.grid;
        json occ = json::array();
        for (const auto& o : g.occupancy) occ.push_back(o ? json(*o) : json(nullptr));
        j["occupancy"] = occ;
    } else {
        const auto& p = m.vrep();
        j["type"] = "vrep";
        j["dim"] = p.dim();
        json verts = json::array();
        for (Index i = 0; i < p.vertices.cols(); ++i) {
            json v = json::array();
            for (Index a = 0; a < p.vertices.rows(); ++a) v.push_back(p.vertices(a, i));
            verts.push_back(v);
        }
        j["vertices"] = verts;
        json inc = json::array();
        for (Index i = 0; i < p.incidence.rows(); ++i) {
            json row = json::array();
            for (Index r = 0; r < p.incidence.cols(); ++r) row.push_back(p.incidence(i, r));
            inc.push_back(row);
        }
        j["incidence"] = inc;
        j["region_costs"] = std::vector<double>(p.region_costs.data(), p.region_costs.data() + p.region_costs.size());
    }
    if (!m.name.empty()) j["name"] = m.name;
    return j.dump();
}

std::uint64_t map_hash(const Map& m) {
    Map unnamed = m;
    unnamed.name.clear();
    return fnv1a(map_to_json(unnamed));
}

MapVerification verify_map(const Map& m, unsigned seed, int directions, int points) {
    MapVerification out;
    auto failure = [&out](const std::string& s) {
        out.ok = false;
        out.failures.push_back(s);
    };
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    const auto hz = to_hybrid_zonotope(m);
    const auto hreps = region_hreps(m);
    const int n = m.dim();
    const int nf = m.num_regions();

    // Feasible factors for a fixed region land inside that region's H-rep.
    for (int r = 0; r < nf; ++r) {
        for (int s = 0; s < 20; ++s) {
            FactorAssignmentd f{VectorXd::Zero(hz.num_continuous()), VectorXd::Zero(nf)};
            f.xi_b[r] = 1.0;
            if (m.is_ogm()) {
                for (Index a = 0; a < f.xi_c.size(); ++a) f.xi_c[a] = u(rng);
            } else {
                const auto& p = m.vrep();
                const Index nv = p.vertices.cols();
                VectorXd w = VectorXd::Zero(nv);
                for (Index i = 0; i < nv; ++i)
                    if (p.incidence(i, r)) w[i] = -std::log(std::max(u(rng), 1e-300));
                w /= w.sum();
                for (Index i = 0; i < nv; ++i) {
                    f.xi_c[i] = w[i];
                    if (p.incidence(i, r)) f.xi_c[nv + i] = (1.0 - w[i]) / p.incidence.row(i).sum();
                }
            }
            if (!is_feasible_assignment(hz, f, 1e-10)) {
                failure("region " + std::to_string(r) + ": sampled factors violate the set constraints");
                break;
            }
            if (!hreps[r].contains(evaluate(hz, f).point, 1e-8)) {
                failure("region " + std::to_string(r) + ": sampled point outside the region half-spaces");
                break;
            }
        }
    }

    // Support of the relaxation equals the convex-hull support.
    const auto relax = convex_relaxation(hz);
    MatrixXd all_vertices;
    if (!m.is_ogm()) all_vertices = m.vrep().vertices;
    for (int d = 0; d < directions; ++d) {
        VectorXd dir(n);
        for (int a = 0; a < n; ++a) dir[a] = g(rng);
        double expect;
        if (m.is_ogm())
            expect = dir.cwiseAbs().dot(0.5 * m.ogm().cell_size) + (m.ogm().free_centers().transpose() * dir).maxCoeff();
        else
            expect = (all_vertices.transpose() * dir).maxCoeff();
        const double got = support(relax, dir);
        if (std::abs(got - expect) > 1e-6 * (1.0 + std::abs(expect)))
            failure("support mismatch in direction " + std::to_string(d) + ": " + std::to_string(got) + " vs " +
                    std::to_string(expect));
    }

    // Big-M and hybrid-zonotope encodings agree on membership.
    const auto enc = bigm_encoding(m);
    auto [lo, hi] = bounding_box(m);
    const VectorXd pad = 0.1 * (hi - lo);
    std::vector<ConstrainedZonotoped> regions;
    for (int r = 0; r < nf; ++r) regions.push_back(region_set(hz, r));
    for (int i = 0; i < points; ++i) {
        VectorXd y(n);
        for (int a = 0; a < n; ++a) y[a] = lo[a] - pad[a] + u(rng) * (hi[a] - lo[a] + 2.0 * pad[a]);
        bool in_hz = false, in_bigm = false;
        for (int r = 0; r < nf && !in_hz; ++r) in_hz = contains(regions[r], y, 1e-8);
        for (int r = 0; r < nf && !in_bigm; ++r) {
            VectorXd xb = VectorXd::Zero(nf);
            xb[r] = 1.0;
            in_bigm = enc.satisfied(y, xb, 1e-8);
        }
        if (in_hz != in_bigm) {
            std::ostringstream os;
            os << "membership disagreement at point (" << y.transpose() << ")";
            failure(os.str());
        }
    }
    return out;
}

}  // namespace zonomip
