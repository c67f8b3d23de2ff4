#pragma once

#include <span>
#include <vector>

namespace expavg {

/// Weighted least-squares nondecreasing fit by pool-adjacent-violators.
///
/// Cells are given as cumulative-sum-diagram increments: `numer[j]` is
/// w_j * y_j and `denom[j]` is w_j. A cell with zero weight is a vertical
/// step in the diagram; it pools with its neighbours and never forms a block
/// on its own unless every cell of that block has zero weight, in which case
/// the block value is +-infinity by the sign of its numerator (0 if both 0).
/// Returns the slope of the greatest convex minorant per cell.
std::vector<double> pava_cumsum(std::span<const double> numer, std::span<const double> denom);

/// Isotonic regression of y with weights w (w >= 0).
std::vector<double> pava(std::span<const double> y, std::span<const double> w);

}  // namespace expavg
