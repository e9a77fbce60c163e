#pragma once

#include "sqr/common.hpp"
#include "sqr/functional_inference.hpp"

#include <string>
#include <vector>

namespace sqr {

/// Values on a grid with one axis (w_axis empty, values is |u| x 1) or two
/// axes (values is |u| x |w|).
struct GridFunction {
    std::vector<double> u_axis;
    std::vector<double> w_axis;
    Matrix values;

    bool two_dimensional() const { return !w_axis.empty(); }
    void validate() const;

    static GridFunction one_axis(std::vector<double> axis, const Vector& values);
};

enum class OrderMode { AverageOverOrders, SequentialFixedOrder };

enum class MonotoneKind { Rearrangement, Isotonic, Convex };

std::string to_string(MonotoneKind kind);
/// Accepts "rearrange", "isotonic", "convex".
MonotoneKind monotone_kind_from_string(const std::string& name);

struct MonotoneOperator {
    MonotoneKind kind = MonotoneKind::Rearrangement;
    /// Weight on rearrangement in the convex combination.
    double lambda = 0.5;
    OrderMode mode = OrderMode::AverageOverOrders;
    /// For SequentialFixedOrder: rearrange along u first when true.
    bool u_first = true;
    /// Direction per axis; decreasing axes are handled by reflecting the axis.
    bool increasing_u = true;
    bool increasing_w = true;
};

/// Increasing rearrangement (sorted values) of a 1-axis function.
GridFunction rearrange_1d(const GridFunction& gf);

/// Rearranges along both axes, in one order or averaged over both orders.
GridFunction rearrange_multi(const GridFunction& gf, OrderMode mode = OrderMode::AverageOverOrders, bool u_first = true);

/// L2 projection onto nondecreasing sequences (pool adjacent violators).
GridFunction isotonic_project(const GridFunction& gf);

/// Applies the operator, honoring per-axis directions. Isotonic projection
/// and the convex combination are defined for one axis only.
GridFunction apply(const MonotoneOperator& op, const GridFunction& gf);

/// Sorted copy / PAVA fit of a sequence.
Vector rearranged(const Vector& v);
Vector isotonic(const Vector& v);

/// Applies the operator to both envelopes and to the point estimates. With `intersect`, the
/// band is instead narrowed to the monotone functions it contains: the lower
/// envelope becomes its running maximum and the upper its reverse running
/// minimum; this narrowing is not robust when the monotone model is wrong.
/// Throws NumericalError if the intersection is empty.
ConfidenceBand monotonize_band(const ConfidenceBand& band, const MonotoneOperator& op, bool intersect = false);

/// The band's point estimates as a grid function (one axis when the band has a single w).
GridFunction estimate_grid(const ConfidenceBand& band);

}  // namespace sqr
