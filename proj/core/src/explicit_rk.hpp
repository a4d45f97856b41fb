#pragma once

#include <functional>

#include "opinf/rom.hpp"

namespace opinf::detail {

using RhsFn = std::function<Vector(const Vector&)>;

// Shared by ROM simulation and the non-stiff FOM path. Neither throws on
// blow-up; the returned trajectory is flagged instead.
Trajectory rk4_fixed(const RhsFn& f, const Vector& x0, const TimeGrid& grid, const IntegrateOptions& opt);
Trajectory dopri5(const RhsFn& f, const Vector& x0, const TimeGrid& grid, const IntegrateOptions& opt);

}  // namespace opinf::detail
