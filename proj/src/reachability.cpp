#include "zonomip/reachability.hpp"

#include "zonomip/qp_ipm.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace zonomip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// The squared-distance objective makes the distance error ~sqrt(mu), so the
// gap tolerance is much tighter than the feasibility one.
QpSettings distance_settings() {
    QpSettings s;
    s.tol_feas = 1e-8;
    s.tol_gap = 1e-15;
    s.max_iter = 200;
    return s;
}

double extent(const Map& m) {
    const auto [lo, hi] = bounding_box(m);
    return (hi - lo).norm() + 1.0;
}

// min ||Va ta - Vb tb||^2 over simplex weights; Vb may be a single fixed point.
double hull_distance(const MatrixXd& Va, const MatrixXd& Vb, double bound, bool b_fixed, const std::string& what) {
    const Index n = Va.rows(), na = Va.cols(), nb = b_fixed ? 0 : Vb.cols();
    const Index nz = na + nb + n;
    VectorXd P = VectorXd::Zero(nz);
    P.tail(n).setConstant(2.0);
    MatrixXd E = MatrixXd::Zero(n + 1 + (b_fixed ? 0 : 1), nz);
    VectorXd e = VectorXd::Zero(E.rows());
    E.block(0, 0, n, na) = Va;
    if (b_fixed) {
        e.head(n) = Vb.col(0);
    } else {
        E.block(0, na, n, nb) = -Vb;
        E.block(n + 1, na, 1, nb).setOnes();
        e[n + 1] = 1.0;
    }
    E.block(0, na + nb, n, n) = -MatrixXd::Identity(n, n);
    E.block(n, 0, 1, na).setOnes();
    e[n] = 1.0;
    VectorXd lo = VectorXd::Zero(nz), hi = VectorXd::Ones(nz);
    lo.tail(n).setConstant(-bound);
    hi.tail(n).setConstant(bound);
    const auto res = solve_qp(single_stage_problem(P, VectorXd::Zero(nz), E, e, lo, hi), distance_settings());
    if (res.status != QpStatus::optimal)
        throw std::runtime_error("reachability: distance QP for " + what + " ended with status " + to_string(res.status));
    return res.iterate.z.segment(na + nb, n).norm();
}

void check_region(const Map& m, int r) {
    if (m.num_regions() == 0) throw std::invalid_argument("reachability: empty map");
    if (r < 0 || r >= m.num_regions()) throw std::invalid_argument("reachability: region index out of range");
}

template <typename F>
void parallel_for(int count, int threads, F&& f) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::vector<int> regions_within(const VectorXd& dist, int k_n, double d_max) {
    std::vector<int> out;
    for (Index i = 0; i < dist.size(); ++i)
        if (within_reach(dist[i], k_n, d_max)) out.push_back(static_cast<int>(i));
    return out;
}

void fill_point_distances(ReachTables& t, const Map& m, const VectorXd& point, const std::vector<int>& candidates,
                          int threads) {
    if (point.size() != m.dim()) throw std::invalid_argument("reachability: point dimension mismatch");
    t.point_distance = VectorXd::Constant(m.num_regions(), kInf);
    t.point = point;
    if (std::isinf(t.d_max)) {
        t.point_distance.setZero();
        return;
    }
    const double bound = extent(m) + point.cwiseAbs().maxCoeff();
    parallel_for(static_cast<int>(candidates.size()), threads, [&](int i) {
        const int r = candidates[i];
        t.point_distance[r] = hull_distance(region_vertices(m, r), point, bound, true, "point/region " + std::to_string(r));
    });
    // A point just outside the free space (within one step of it) is measured
    // from the boundary of its nearest regions.
    const double d0 = t.point_distance.minCoeff();
    if (d0 > kReachTolerance && d0 <= t.d_max)
        for (Index r = 0; r < t.point_distance.size(); ++r)
            if (std::isfinite(t.point_distance[r])) t.point_distance[r] -= d0;
}

}  // namespace

bool within_reach(double d, int k_n, double d_max) {
    if (k_n < 0) throw std::invalid_argument("reachability: k_n must be nonnegative");
    if (std::isinf(d_max)) return true;
    return d <= d_max * k_n + kReachTolerance;
}

bool ReachTables::region_reachable(int k_n, int from, int to) const {
    return within_reach(region_distance(from, to), k_n, d_max);
}

bool ReachTables::point_reachable(int k_n, int region) const {
    if (!point) throw std::logic_error("reachability: point table not built");
    return within_reach(point_distance[region], k_n, d_max);
}

std::vector<int> ReachTables::region_set(int k_n, int r) const {
    return regions_within(region_distance.row(r).transpose(), k_n, d_max);
}

std::vector<int> ReachTables::point_set(int k_n) const {
    if (!point) throw std::logic_error("reachability: point table not built");
    return regions_within(point_distance, k_n, d_max);
}

double region_distance(const Map& m, int a, int b) {
    check_region(m, a);
    check_region(m, b);
    if (a == b) return 0.0;
    return hull_distance(region_vertices(m, a), region_vertices(m, b), extent(m), false,
                         "region pair (" + std::to_string(a) + ", " + std::to_string(b) + ")");
}

double point_region_distance(const Map& m, const VectorXd& y, int r) {
    check_region(m, r);
    if (y.size() != m.dim()) throw std::invalid_argument("reachability: point dimension mismatch");
    return hull_distance(region_vertices(m, r), y, extent(m) + y.cwiseAbs().maxCoeff(), true,
                         "point/region " + std::to_string(r));
}

std::vector<int> reachable(const Map& m, const VectorXd& point, int k_n, double d_max) {
    if (m.num_regions() == 0) throw std::invalid_argument("reachability: empty map");
    std::vector<int> out;
    for (int r = 0; r < m.num_regions(); ++r)
        if (within_reach(std::isinf(d_max) ? 0.0 : point_region_distance(m, point, r), k_n, d_max)) out.push_back(r);
    return out;
}

std::vector<int> reachable(const Map& m, int region, int k_n, double d_max) {
    check_region(m, region);
    std::vector<int> out;
    for (int r = 0; r < m.num_regions(); ++r)
        if (within_reach(std::isinf(d_max) ? 0.0 : region_distance(m, region, r), k_n, d_max)) out.push_back(r);
    return out;
}

ReachTables build_tables(const Map& m, const ReachConfig& cfg, const std::optional<VectorXd>& point) {
    if (m.num_regions() == 0) throw std::invalid_argument("reachability: empty map");
    if (!(cfg.d_max > 0.0)) throw std::invalid_argument("reachability: d_max must be positive");
    if (cfg.N < 0) throw std::invalid_argument("reachability: horizon must be nonnegative");
    ReachTables t;
    t.N = cfg.N;
    t.d_max = cfg.d_max;
    t.map_hash = map_hash(m);
    const int nf = m.num_regions();
    t.region_distance = MatrixXd::Zero(nf, nf);
    if (!std::isinf(cfg.d_max)) {
        std::vector<std::pair<int, int>> pairs;
        for (int a = 0; a < nf; ++a)
            for (int b = a + 1; b < nf; ++b) pairs.emplace_back(a, b);
        const double bound = extent(m);
        const auto verts = [&] {
            std::vector<MatrixXd> v;
            for (int r = 0; r < nf; ++r) v.push_back(region_vertices(m, r));
            return v;
        }();
        parallel_for(static_cast<int>(pairs.size()), cfg.threads, [&](int i) {
            const auto [a, b] = pairs[i];
            const double d = hull_distance(verts[a], verts[b], bound, false,
                                           "region pair (" + std::to_string(a) + ", " + std::to_string(b) + ")");
            t.region_distance(a, b) = d;
            t.region_distance(b, a) = d;
        });
    }
    if (point) {
        std::vector<int> all(nf);
        for (int r = 0; r < nf; ++r) all[r] = r;
        fill_point_distances(t, m, *point, all, cfg.threads);
    }
    return t;
}

void refresh_point_table(ReachTables& t, const Map& m, const VectorXd& point, int threads) {
    const int nf = m.num_regions();
    if (t.num_regions() != nf) throw std::invalid_argument("refresh_point_table: tables do not match the map");
    std::vector<int> candidates;
    if (!t.point) {
        for (int r = 0; r < nf; ++r) candidates.push_back(r);
    } else {
        std::vector<char> mark(nf, 0);
        for (int r : t.point_set(t.N)) {
            mark[r] = 1;
            for (int s : t.region_set(1, r)) mark[s] = 1;
        }
        for (int r = 0; r < nf; ++r)
            if (mark[r]) candidates.push_back(r);
    }
    fill_point_distances(t, m, point, candidates, threads);
}

std::string tables_to_json(const ReachTables& t) {
    nlohmann::json j;
    j["map_hash"] = std::to_string(t.map_hash);
    j["d_max"] = std::isinf(t.d_max) ? nlohmann::json("inf") : nlohmann::json(t.d_max);
    j["N"] = t.N;
    j["num_regions"] = t.num_regions();
    auto dist = nlohmann::json::array();
    for (Index i = 0; i < t.region_distance.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Index k = 0; k < t.region_distance.cols(); ++k) row.push_back(t.region_distance(i, k));
        dist.push_back(row);
    }
    j["region_distance"] = dist;
    auto tables = nlohmann::json::array();
    for (int k = 0; k <= t.N; ++k) {
        auto per_region = nlohmann::json::array();
        for (int r = 0; r < t.num_regions(); ++r) per_region.push_back(t.region_set(k, r));
        tables.push_back(per_region);
    }
    j["R_r"] = tables;
    return j.dump(1);
}

void save_tables(const ReachTables& t, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("save_tables: cannot write " + tmp);
        out << tables_to_json(t) << "\n";
        if (!out) throw std::runtime_error("save_tables: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::optional<ReachTables> load_tables(const std::string& path, const Map& m, double d_max, int N) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("map_hash").get<std::string>() != std::to_string(map_hash(m))) return std::nullopt;
        const auto& dj = j.at("d_max");
        const double cached = dj.is_string() ? kInf : dj.get<double>();
        if (!(cached == d_max)) return std::nullopt;
        const int nf = j.at("num_regions").get<int>();
        if (nf != m.num_regions()) return std::nullopt;
        ReachTables t;
        t.N = N;
        t.d_max = d_max;
        t.map_hash = map_hash(m);
        t.region_distance.resize(nf, nf);
        const auto& rows = j.at("region_distance");
        for (int a = 0; a < nf; ++a)
            for (int b = 0; b < nf; ++b) t.region_distance(a, b) = rows.at(a).at(b).get<double>();
        return t;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

}  // namespace zonomip
