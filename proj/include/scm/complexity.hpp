#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scm/error.hpp"
#include "scm/model.hpp"
#include "scm/numerics.hpp"

namespace scm {

/// Axis-aligned box [a_1, b_1] x ... x [a_n, b_n].
struct Box {
    std::vector<std::pair<double, double>> bounds;

    Box() = default;
    explicit Box(std::vector<std::pair<double, double>> b) : bounds(std::move(b)) {
        for (const auto& [lo, hi] : bounds)
            if (!(hi > lo)) throw ValidationError("Box: upper bound must exceed lower bound");
    }

    static Box unit(std::size_t dims) { return Box(std::vector<std::pair<double, double>>(dims, {0.0, 1.0})); }

    std::size_t dims() const noexcept { return bounds.size(); }
};

struct McEstimate {
    std::size_t extrema_count = 0;
    double variation_integral = 0.0;
    double mc = 0.0;
    std::size_t grid_points_per_dim = 0;
    double tolerance = 0.0;
    /// False when the sampled function uses a non-differentiable activation.
    bool differentiable = true;
};

/// Evaluates a scalar function at each row of an (n_points x dims) matrix.
using BatchFunction = std::function<Vector(const Matrix&)>;
using ScalarFunction = std::function<double(std::span<const double>)>;

inline BatchFunction batch(ScalarFunction f) {
    return [f = std::move(f)](const Matrix& pts) {
        Vector out(pts.rows());
        std::vector<double> x(static_cast<std::size_t>(pts.cols()));
        for (Eigen::Index r = 0; r < pts.rows(); ++r) {
            for (Eigen::Index c = 0; c < pts.cols(); ++c) x[static_cast<std::size_t>(c)] = pts(r, c);
            out(r) = f(x);
        }
        return out;
    };
}

/// Interior local extrema of a sampled 1-D signal.
///
/// Successive differences with |diff| <= tol are flat. An extremum is a change
/// between opposite non-flat slopes, so a flat plateau between a rise and a
/// fall counts once. Endpoints never count.
inline std::size_t count_extrema(std::span<const double> values, double tol) {
    if (values.size() < 3) throw ValidationError("count_extrema: need at least 3 samples");
    std::size_t count = 0;
    int last = 0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        const double d = values[i + 1] - values[i];
        const int s = d > tol ? 1 : (d < -tol ? -1 : 0);
        if (s == 0) continue;
        if (last != 0 && s != last) ++count;
        last = s;
    }
    return count;
}

namespace detail {

inline double default_mc_tolerance(const Vector& samples) {
    if (samples.size() == 0) return 0.0;
    return 1e-9 * (samples.maxCoeff() - samples.minCoeff());
}

inline std::vector<double> grid_axis(double lo, double hi, std::size_t n) {
    std::vector<double> x(n);
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + static_cast<double>(i) * step;
    x.back() = hi;
    return x;
}

// Central difference inside, one-sided at the two ends.
inline double axis_derivative(const Vector& s, std::size_t idx, std::size_t pos, std::size_t n, std::size_t stride,
                              double step) {
    if (pos == 0) return (s(static_cast<Eigen::Index>(idx + stride)) - s(static_cast<Eigen::Index>(idx))) / step;
    if (pos == n - 1) return (s(static_cast<Eigen::Index>(idx)) - s(static_cast<Eigen::Index>(idx - stride))) / step;
    return (s(static_cast<Eigen::Index>(idx + stride)) - s(static_cast<Eigen::Index>(idx - stride))) / (2.0 * step);
}

inline void check_grid(std::size_t grid_n) {
    if (grid_n < 9) throw ValidationError("MC estimate: grid_n must be >= 9");
}

}  // namespace detail

/// MC = Z * integral of |S'| over [a, b] on a uniform grid of `grid_n` points.
/// Z counts extrema of S itself; the integral uses the trapezoid rule.
inline McEstimate estimate_mc_1d(const BatchFunction& f, const Box& box, std::size_t grid_n,
                                 std::optional<double> tol = std::nullopt) {
    if (box.dims() != 1) throw ValidationError("estimate_mc_1d: box must be one-dimensional");
    detail::check_grid(grid_n);
    const auto [lo, hi] = box.bounds.front();
    const auto xs = detail::grid_axis(lo, hi, grid_n);
    Matrix pts = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(grid_n));
    const Vector s = f(pts);
    if (s.size() != static_cast<Eigen::Index>(grid_n) || !s.allFinite())
        throw ValidationError("estimate_mc_1d: function returned non-finite samples");

    const double step = (hi - lo) / static_cast<double>(grid_n - 1);
    double integral = 0.0;
    for (std::size_t i = 0; i < grid_n; ++i) {
        const double w = (i == 0 || i == grid_n - 1) ? 0.5 : 1.0;
        integral += w * std::abs(detail::axis_derivative(s, i, i, grid_n, 1, step));
    }
    integral *= step;

    McEstimate est;
    est.tolerance = tol.value_or(detail::default_mc_tolerance(s));
    est.extrema_count = count_extrema(std::span<const double>(s.data(), grid_n), est.tolerance);
    est.variation_integral = integral;
    est.mc = static_cast<double>(est.extrema_count) * integral;
    est.grid_points_per_dim = grid_n;
    return est;
}

inline McEstimate estimate_mc_1d(const ScalarFunction& f, const Box& box, std::size_t grid_n,
                                 std::optional<double> tol = std::nullopt) {
    return estimate_mc_1d(batch(f), box, grid_n, tol);
}

/// Tensor-grid MC for up to three inputs. Z counts interior grid points that
/// are above (or below) all 2*dims axis neighbours by more than `tol`; the
/// integral of sum_i |dS/dx_i| uses the tensor trapezoid rule.
inline McEstimate estimate_mc_nd(const BatchFunction& f, const Box& box, std::size_t grid_n,
                                 std::optional<double> tol = std::nullopt) {
    const std::size_t dims = box.dims();
    if (dims < 1) throw ValidationError("estimate_mc_nd: empty box");
    if (dims > 3) throw UnsupportedError("estimate_mc_nd: at most 3 input dimensions are supported, got " + std::to_string(dims));
    detail::check_grid(grid_n);

    std::vector<std::vector<double>> axes;
    std::vector<double> steps;
    for (const auto& [lo, hi] : box.bounds) {
        axes.push_back(detail::grid_axis(lo, hi, grid_n));
        steps.push_back((hi - lo) / static_cast<double>(grid_n - 1));
    }

    // Point index = sum_k pos_k * stride_k with the last axis fastest.
    std::vector<std::size_t> stride(dims, 1);
    for (std::size_t k = dims - 1; k-- > 0;) stride[k] = stride[k + 1] * grid_n;
    std::size_t total = 1;
    for (std::size_t k = 0; k < dims; ++k) total *= grid_n;

    Matrix pts(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dims));
    std::vector<std::size_t> pos(dims);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (std::size_t k = 0; k < dims; ++k) {
            pos[k] = rem / stride[k];
            rem %= stride[k];
            pts(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(k)) = axes[k][pos[k]];
        }
    }
    const Vector s = f(pts);
    if (s.size() != static_cast<Eigen::Index>(total) || !s.allFinite())
        throw ValidationError("estimate_mc_nd: function returned non-finite samples");

    McEstimate est;
    est.tolerance = tol.value_or(detail::default_mc_tolerance(s));
    est.grid_points_per_dim = grid_n;

    double integral = 0.0;
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        double weight = 1.0;
        double grad_l1 = 0.0;
        bool interior = true;
        for (std::size_t k = 0; k < dims; ++k) {
            pos[k] = rem / stride[k];
            rem %= stride[k];
            if (pos[k] == 0 || pos[k] == grid_n - 1) {
                weight *= 0.5;
                interior = false;
            }
            grad_l1 += std::abs(detail::axis_derivative(s, idx, pos[k], grid_n, stride[k], steps[k]));
        }
        integral += weight * grad_l1;

        if (interior) {
            const double v = s(static_cast<Eigen::Index>(idx));
            bool is_max = true, is_min = true;
            for (std::size_t k = 0; k < dims && (is_max || is_min); ++k) {
                for (long dir : {-1L, 1L}) {
                    const double nb = s(static_cast<Eigen::Index>(static_cast<long>(idx) + dir * static_cast<long>(stride[k])));
                    if (!(v > nb + est.tolerance)) is_max = false;
                    if (!(v < nb - est.tolerance)) is_min = false;
                }
            }
            if (is_max || is_min) ++est.extrema_count;
        }
    }
    for (double st : steps) integral *= st;

    est.variation_integral = integral;
    est.mc = static_cast<double>(est.extrema_count) * integral;
    return est;
}

inline McEstimate estimate_mc_nd(const ScalarFunction& f, const Box& box, std::size_t grid_n,
                                 std::optional<double> tol = std::nullopt) {
    return estimate_mc_nd(batch(f), box, grid_n, tol);
}

/// Default grid resolution per dimension for model reports.
inline std::size_t default_mc_grid(std::size_t dims) {
    switch (dims) {
        case 1: return 10001;
        case 2: return 201;
        default: return 41;
    }
}

/// MC of a model's stochastic part S(X) (mechanism excluded) for output `q`
/// over the normalised input box [0, 1]^d.
inline McEstimate estimate_model_mc(const ScmModel& model, std::size_t grid_n = 0, Eigen::Index q = 0) {
    const auto d = static_cast<std::size_t>(model.input_dim);
    if (d > 3) throw UnsupportedError("MC report supports at most 3 inputs, model has " + std::to_string(d));
    if (q < 0 || q >= model.output_dim) throw ValidationError("estimate_model_mc: output index out of range");
    if (grid_n == 0) grid_n = default_mc_grid(d);
    BatchFunction f = [&model, q](const Matrix& pts) -> Vector { return stochastic_output(model, pts).col(q); };
    McEstimate est = estimate_mc_nd(f, Box::unit(d), grid_n);
    for (const auto& layer : model.layers)
        if (!layer.activation.differentiable()) est.differentiable = false;
    return est;
}

}  // namespace scm
