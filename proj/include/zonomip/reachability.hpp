#pragma once

#include "zonomip/map_ingest.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace zonomip {

/// d_max is the distance covered in one time step; an infinite d_max turns
/// reachability pruning off.
struct ReachConfig {
    double d_max = 1.0;
    int N = 15;
    int threads = 1;
};

/// Distances below this are treated as touching when thresholding.
inline constexpr double kReachTolerance = 1e-6;

struct ReachTables {
    int N = 0;
    double d_max = 0.0;
    std::uint64_t map_hash = 0;
    /// Minimum distance between regions i and j (symmetric, zero diagonal).
    MatrixXd region_distance;
    /// Minimum distance from the current point to each region; +inf marks a
    /// region that was not a refresh candidate.
    VectorXd point_distance;
    std::optional<VectorXd> point;

    int num_regions() const { return static_cast<int>(region_distance.rows()); }
    bool region_reachable(int k_n, int from, int to) const;
    bool point_reachable(int k_n, int region) const;
    /// R_r(k_n, r), sorted.
    std::vector<int> region_set(int k_n, int r) const;
    /// R_p(k_n), sorted. Throws std::logic_error before a point table exists.
    std::vector<int> point_set(int k_n) const;
};

/// True when distance d is within k_n steps of travel.
bool within_reach(double d, int k_n, double d_max);

/// Minimum Euclidean distance between two regions of the map by a QP over
/// their vertex weights. Throws std::runtime_error naming the pair when the
/// QP does not converge.
double region_distance(const Map& m, int a, int b);
double point_region_distance(const Map& m, const VectorXd& y, int r);

std::vector<int> reachable(const Map& m, const VectorXd& point, int k_n, double d_max);
std::vector<int> reachable(const Map& m, int region, int k_n, double d_max);

/// Region table for all pairs, plus the point table when a point is given.
/// Point distances are shifted down by the distance d0 to the nearest region
/// when the point lies outside the free space with d0 <= d_max.
ReachTables build_tables(const Map& m, const ReachConfig& cfg, const std::optional<VectorXd>& point = std::nullopt);

/// Recomputes point distances for regions in the previous R_p(N) and those
/// one step reachable from them; all other regions become unreachable. With
/// no previous point table this is a full point-table build.
void refresh_point_table(ReachTables& t, const Map& m, const VectorXd& point, int threads = 1);

/// Cache file holding the map hash, d_max and the region distances.
void save_tables(const ReachTables& t, const std::string& path);
/// Returns the cached tables when the file matches the map hash and d_max.
std::optional<ReachTables> load_tables(const std::string& path, const Map& m, double d_max, int N);
std::string tables_to_json(const ReachTables& t);

}  // namespace zonomip
