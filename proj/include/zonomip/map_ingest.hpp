#pragma once

#include "zonomip/set_core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace zonomip {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

/// Union of convex polytopes sharing a vertex list. incidence(i, r) = 1 when
/// vertex i belongs to region r.
struct PolytopicMap {
    MatrixXd vertices;  // n x n_v
    MatrixXi incidence; // n_v x n_F
    VectorXd region_costs;

    int dim() const { return static_cast<int>(vertices.rows()); }
    int num_regions() const { return static_cast<int>(incidence.cols()); }
};

/// Occupancy grid. Cell (i, j[, l]) has lower corner origin + (i, j[, l]) * cell_size;
/// occupancy is stored x-fastest and an empty entry marks an obstacle.
struct OgmMap {
    VectorXd cell_size;
    VectorXd origin;
    std::vector<int> grid;
    std::vector<std::optional<double>> occupancy;

    int dim() const { return static_cast<int>(cell_size.size()); }
    /// Free cells in storage order: centers (n x n_F) and probabilities.
    MatrixXd free_centers() const;
    VectorXd free_probabilities() const;
    std::vector<int> free_cell_indices() const;
    int num_regions() const;
};

struct Map {
    std::variant<PolytopicMap, OgmMap> data;
    std::string name;

    bool is_ogm() const { return std::holds_alternative<OgmMap>(data); }
    const PolytopicMap& vrep() const { return std::get<PolytopicMap>(data); }
    const OgmMap& ogm() const { return std::get<OgmMap>(data); }
    int dim() const;
    int num_regions() const;
};

/// {y : H y <= h}.
struct RegionHrep {
    MatrixXd H;
    VectorXd h;

    bool contains(const VectorXd& y, double tol) const;
};

/// Region i active when xi_b,i = 1: H_i y <= h_i + M_i (1 - xi_b,i).
struct BigMEncoding {
    std::vector<RegionHrep> regions;
    std::vector<VectorXd> big_m;
    VectorXd box_lower;
    VectorXd box_upper;

    /// Evaluates the disjunctive rows at a point for a given binary vector.
    bool satisfied(const VectorXd& y, const VectorXd& xi_b, double tol) const;
};

/// Checks the structural invariants; throws std::invalid_argument naming the
/// offending region or vertex.
void validate(const PolytopicMap& m);
void validate(const OgmMap& m);

HybridZonotoped from_vrep_union(const PolytopicMap& m);
HybridZonotoped from_ogm(const OgmMap& m);
HybridZonotoped to_hybrid_zonotope(const Map& m);

std::vector<RegionHrep> region_hreps(const PolytopicMap& m);
std::vector<RegionHrep> region_hreps(const OgmMap& m);
std::vector<RegionHrep> region_hreps(const Map& m);

/// Facets of the convex hull of the columns of V (1-D to 3-D). Throws
/// std::invalid_argument for a degenerate (collinear/coplanar) vertex set.
RegionHrep hull_hrep(const MatrixXd& V);

/// Axis-aligned box containing all free space.
std::pair<VectorXd, VectorXd> bounding_box(const Map& m);

BigMEncoding bigm_encoding(const Map& m);

/// kappa * occupancy for grids, the stored costs for polytopic maps.
VectorXd region_costs_vector(const Map& m, double kappa);

/// Vertices of region r (columns).
MatrixXd region_vertices(const Map& m, int r);

Map parse_map(const std::string& json_text, const std::string& name = "");
Map load_map(const std::string& path);
std::string map_to_json(const Map& m);

/// FNV-1a hash of the canonical JSON serialization.
std::uint64_t map_hash(const Map& m);

struct MapVerification {
    bool ok = true;
    std::vector<std::string> failures;
};

/// Load-time property checks: region sampling against the H-rep, the
/// support-function identity of the relaxation, and Big-M/HZ membership
/// agreement on random points.
MapVerification verify_map(const Map& m, unsigned seed = 0, int directions = 16, int points = 100);

}  // namespace zonomip
