#pragma once

#include "zonomip/set_core.hpp"

#include <stdexcept>

namespace zonomip {

/// Raised when a query is posed on a set with no feasible factors.
class EmptySetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// max <direction, x> over the set. Throws std::domain_error for a zero
/// direction and EmptySetError when the constraints admit no factors.
double support(const ConstrainedZonotoped& s, const Eigen::VectorXd& direction);

/// True when some factors in the domain satisfy the constraints and map to
/// point, with residuals within tol.
bool contains(const ConstrainedZonotoped& s, const Eigen::VectorXd& point, double tol = 1e-8);

/// Membership by enumerating binary factors; limited to n_b <= 20.
bool contains(const HybridZonotoped& s, const Eigen::VectorXd& point, double tol = 1e-8);

}  // namespace zonomip
