#include "sqr/monotonization.hpp"

#include <algorithm>
#include <cmath>

namespace sqr {

void GridFunction::validate() const {
    if (u_axis.empty()) throw UserError("grid function: empty axis");
    auto increasing = [](const std::vector<double>& a) {
        for (std::size_t i = 1; i < a.size(); ++i)
            if (!(a[i] > a[i - 1])) return false;
        return true;
    };
    if (!increasing(u_axis) || !increasing(w_axis)) throw UserError("grid function: axes must be strictly increasing");
    const auto cols = static_cast<Eigen::Index>(two_dimensional() ? w_axis.size() : 1);
    if (values.rows() != static_cast<Eigen::Index>(u_axis.size()) || values.cols() != cols)
        throw UserError("grid function: value array does not match the axes");
    if (!values.allFinite()) throw UserError("grid function: non-finite values");
}

GridFunction GridFunction::one_axis(std::vector<double> axis, const Vector& values) {
    GridFunction gf;
    gf.u_axis = std::move(axis);
    gf.values = values;
    return gf;
}

std::string to_string(MonotoneKind kind) {
    switch (kind) {
    case MonotoneKind::Rearrangement: return "rearrange";
    case MonotoneKind::Isotonic: return "isotonic";
    case MonotoneKind::Convex: return "convex";
    }
    return "unknown";
}

MonotoneKind monotone_kind_from_string(const std::string& name) {
    if (name == "rearrange") return MonotoneKind::Rearrangement;
    if (name == "isotonic") return MonotoneKind::Isotonic;
    if (name == "convex") return MonotoneKind::Convex;
    throw UserError("unknown monotonization operator '" + name + "' (expected rearrange, isotonic or convex)");
}

Vector rearranged(const Vector& v) {
    Vector out = v;
    std::stable_sort(out.data(), out.data() + out.size());
    return out;
}

Vector isotonic(const Vector& v) {
    // Blocks of pooled values: mean and length.
    std::vector<double> mean;
    std::vector<Eigen::Index> len;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        mean.push_back(v(i));
        len.push_back(1);
        while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
            const std::size_t j = mean.size() - 2;
            const double total = static_cast<double>(len[j]);
            const double extra = static_cast<double>(len.back());
            mean[j] = (mean[j] * total + mean.back() * extra) / (total + extra);
            len[j] += len.back();
            mean.pop_back();
            len.pop_back();
        }
    }
    Vector out(v.size());
    Eigen::Index pos = 0;
    for (std::size_t b = 0; b < mean.size(); ++b)
        for (Eigen::Index r = 0; r < len[b]; ++r) out(pos++) = mean[b];
    return out;
}

namespace {

bool is_monotone(const Vector& v) {
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) < v(i - 1)) return false;
    return true;
}

Matrix sort_columns(Matrix a) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) = rearranged(a.col(j));
    return a;
}

Matrix sort_rows(Matrix a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) = rearranged(a.row(i).transpose()).transpose();
    return a;
}

Matrix flip(const Matrix& a, bool rows, bool cols) {
    Matrix out = a;
    if (rows) out = out.colwise().reverse().eval();
    if (cols) out = out.rowwise().reverse().eval();
    return out;
}

void require_one_axis(const GridFunction& gf, const char* what) {
    if (gf.two_dimensional()) throw UserError(std::string(what) + " is defined for one axis only");
}

}  // namespace

GridFunction rearrange_1d(const GridFunction& gf) {
    gf.validate();
    require_one_axis(gf, "rearrange_1d");
    GridFunction out = gf;
    out.values.col(0) = rearranged(gf.values.col(0));
    return out;
}

GridFunction rearrange_multi(const GridFunction& gf, OrderMode mode, bool u_first) {
    gf.validate();
    GridFunction out = gf;
    if (!gf.two_dimensional()) {
        out.values.col(0) = rearranged(gf.values.col(0));
        return out;
    }
    if (mode == OrderMode::SequentialFixedOrder) {
        out.values = u_first ? sort_rows(sort_columns(gf.values)) : sort_columns(sort_rows(gf.values));
        return out;
    }
    const Matrix a = sort_rows(sort_columns(gf.values));
    const Matrix b = sort_columns(sort_rows(gf.values));
    out.values = 0.5 * (a + b);
    // Averaging two identical arrays is exact, so monotone input comes back unchanged.
    return out;
}

GridFunction isotonic_project(const GridFunction& gf) {
    gf.validate();
    require_one_axis(gf, "isotonic_project");
    GridFunction out = gf;
    if (!is_monotone(gf.values.col(0))) out.values.col(0) = isotonic(gf.values.col(0));
    return out;
}

GridFunction apply(const MonotoneOperator& op, const GridFunction& gf) {
    gf.validate();
    const bool flip_u = !op.increasing_u;
    const bool flip_w = gf.two_dimensional() && !op.increasing_w;
    GridFunction work = gf;
    work.values = flip(gf.values, flip_u, flip_w);
    GridFunction result;
    switch (op.kind) {
    case MonotoneKind::Rearrangement:
        result = rearrange_multi(work, op.mode, op.u_first);
        break;
    case MonotoneKind::Isotonic:
        result = isotonic_project(work);
        break;
    case MonotoneKind::Convex: {
        require_one_axis(work, "the convex combination operator");
        if (!(op.lambda >= 0.0 && op.lambda <= 1.0)) throw UserError("convex combination: lambda must lie in [0,1]");
        result = work;
        const Vector r = rearranged(work.values.col(0));
        const Vector s = isotonic_project(work).values.col(0);
        if (r == s) result.values.col(0) = r;
        else result.values.col(0) = op.lambda * r + (1.0 - op.lambda) * s;
        break;
    }
    }
    result.values = flip(result.values, flip_u, flip_w);
    return result;
}

namespace {

GridFunction envelope(const ConfidenceBand& band, const Matrix& values) {
    GridFunction gf;
    const bool along_w = values.rows() == 1 && values.cols() > 1;
    if (along_w) {
        gf.u_axis = band.w_labels;
        gf.values = values.transpose();
    } else {
        gf.u_axis = band.u_values;
        if (values.cols() > 1) gf.w_axis = band.w_labels;
        gf.values = values;
    }
    return gf;
}

Matrix restore(const ConfidenceBand& band, const GridFunction& gf) {
    const bool along_w = band.theta_hat.rows() == 1 && band.theta_hat.cols() > 1;
    return along_w ? Matrix(gf.values.transpose()) : gf.values;
}

// Running maximum from the origin corner (lower) or running minimum from the far corner (upper).
Matrix running_extreme(const Matrix& a, bool maximum) {
    Matrix out = a;
    const Eigen::Index r = a.rows(), c = a.cols();
    if (maximum) {
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) {
                if (i > 0) out(i, j) = std::max(out(i, j), out(i - 1, j));
                if (j > 0) out(i, j) = std::max(out(i, j), out(i, j - 1));
            }
    } else {
        for (Eigen::Index i = r - 1; i >= 0; --i)
            for (Eigen::Index j = c - 1; j >= 0; --j) {
                if (i + 1 < r) out(i, j) = std::min(out(i, j), out(i + 1, j));
                if (j + 1 < c) out(i, j) = std::min(out(i, j), out(i, j + 1));
            }
    }
    return out;
}

}  // namespace

GridFunction estimate_grid(const ConfidenceBand& band) { return envelope(band, band.theta_hat); }

ConfidenceBand monotonize_band(const ConfidenceBand& band, const MonotoneOperator& op, bool intersect) {
    ConfidenceBand out = band;
    const GridFunction lo = envelope(band, band.lower);
    const GridFunction hi = envelope(band, band.upper);
    lo.validate();
    hi.validate();
    if (intersect) {
        const bool along_w = band.theta_hat.rows() == 1 && band.theta_hat.cols() > 1;
        const bool flip_u = along_w ? !op.increasing_w : !op.increasing_u;
        const bool flip_w = lo.two_dimensional() && !op.increasing_w;
        GridFunction l2 = lo, h2 = hi;
        l2.values = flip(running_extreme(flip(lo.values, flip_u, flip_w), true), flip_u, flip_w);
        h2.values = flip(running_extreme(flip(hi.values, flip_u, flip_w), false), flip_u, flip_w);
        if ((l2.values.array() > h2.values.array()).any())
            throw NumericalError("monotone intersection of the band is empty");
        out.lower = restore(band, l2);
        out.upper = restore(band, h2);
        return out;
    }
    MonotoneOperator eff = op;
    if (band.theta_hat.rows() == 1 && band.theta_hat.cols() > 1) eff.increasing_u = op.increasing_w;
    out.lower = restore(band, apply(eff, lo));
    out.upper = restore(band, apply(eff, hi));
    out.theta_hat = restore(band, apply(eff, envelope(band, band.theta_hat)));
    return out;
}

}  // namespace sqr
