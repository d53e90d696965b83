#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "scm/error.hpp"

namespace scm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Minimum-norm least-squares solution H^+ Y through an SVD.
///
/// Singular values at or below max(N, T) * eps * sigma_max count as zero.
inline Matrix least_squares_pinv(const Matrix& H, const Matrix& Y) {
    if (H.rows() < 1 || H.cols() < 1) throw ValidationError("least_squares_pinv: empty matrix " + shape_string(H));
    if (H.rows() != Y.rows())
        throw ValidationError("least_squares_pinv: row mismatch " + shape_string(H) + " vs " + shape_string(Y));
    if (!H.allFinite() || !Y.allFinite()) throw ValidationError("least_squares_pinv: non-finite input");

    Eigen::BDCSVD<Matrix> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw NumericalError("least_squares_pinv: SVD failed to converge on " + shape_string(H));

    const Vector& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    const double cutoff = static_cast<double>(std::max(H.rows(), H.cols())) * std::numeric_limits<double>::epsilon() * smax;

    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cutoff) inv(i) = 1.0 / s(i);

    Matrix UtY = svd.matrixU().transpose() * Y;
    return svd.matrixV() * (inv.asDiagonal() * UtY);
}

/// Moore-Penrose inverse with the same rank cutoff as least_squares_pinv.
inline Matrix pinv(const Matrix& H) {
    return least_squares_pinv(H, Matrix::Identity(H.rows(), H.rows()));
}

inline double rmse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ValidationError("rmse: shape mismatch " + shape_string(pred) + " vs " + shape_string(target));
    if (pred.size() == 0) throw ValidationError("rmse: empty input");
    return std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
}

// ---------------------------------------------------------------------------
// LASSO

struct LassoSolution {
    Vector coefficients;
    std::size_t iterations = 0;
    bool converged = false;
    /// Objective value after each full coordinate sweep.
    std::vector<double> objective_trace;
};

struct LassoOptions {
    double tol = 1e-7;
    std::size_t max_iter = 10000;
};

/// sum_j (y_j - x_j . p)^2 + alpha * |p|_1
inline double lasso_objective(const Matrix& X, const Vector& y, const Vector& p, double alpha) {
    return (y - X * p).squaredNorm() + alpha * p.lpNorm<1>();
}

/// Largest violation of the subgradient optimality conditions, per coordinate:
/// |2 x_k'(y - Xp) - alpha sign(p_k)| for active k, max(0, |2 x_k'r| - alpha) otherwise.
inline double lasso_kkt_violation(const Matrix& X, const Vector& y, const Vector& p, double alpha) {
    const Vector grad = 2.0 * (X.transpose() * (y - X * p));
    double worst = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        double v = p(k) != 0.0 ? std::abs(grad(k) - alpha * (p(k) > 0 ? 1.0 : -1.0))
                               : std::max(0.0, std::abs(grad(k)) - alpha);
        worst = std::max(worst, v);
    }
    return worst;
}

namespace detail {

// Solves the LASSO stationarity equations on a fixed support with fixed signs.
// Accepted only when the signs are reproduced, the inactive set stays inside
// the subgradient box and the objective does not increase.
inline bool polish_lasso(const Matrix& X, const Vector& y, double alpha, Vector& p) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < p.size(); ++k)
        if (p(k) != 0.0) active.push_back(k);
    if (active.empty()) return false;

    const auto na = static_cast<Eigen::Index>(active.size());
    Matrix XA(X.rows(), na);
    Vector sgn(na);
    for (Eigen::Index i = 0; i < na; ++i) {
        XA.col(i) = X.col(active[i]);
        sgn(i) = p(active[i]) > 0 ? 1.0 : -1.0;
    }
    Eigen::LDLT<Matrix> ldlt(XA.transpose() * XA);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    Vector pa = ldlt.solve(XA.transpose() * y - 0.5 * alpha * sgn);
    if (!pa.allFinite()) return false;
    for (Eigen::Index i = 0; i < na; ++i)
        if (pa(i) * sgn(i) <= 0.0) return false;

    Vector candidate = Vector::Zero(p.size());
    for (Eigen::Index i = 0; i < na; ++i) candidate(active[i]) = pa(i);
    if (lasso_objective(X, y, candidate, alpha) > lasso_objective(X, y, p, alpha)) return false;
    p = std::move(candidate);
    return true;
}

}  // namespace detail

/// Cyclic coordinate descent on sum_j (y_j - x_j . p)^2 + alpha |p|_1.
///
/// Stops when the largest coefficient change in a sweep drops below `tol`.
/// A converged solution is then refined on its support (sign-constrained
/// normal equations) and must satisfy the optimality conditions to within
/// 10 * tol * |X|_F; otherwise sweeping continues until `max_iter`.
inline LassoSolution lasso_fit(const Matrix& X, const Vector& y, double alpha, LassoOptions opt = {}) {
    if (X.rows() < 1 || X.cols() < 1) throw ValidationError("lasso_fit: empty design matrix");
    if (X.rows() != y.size()) throw ValidationError("lasso_fit: X has " + std::to_string(X.rows()) + " rows, y has " + std::to_string(y.size()));
    if (!X.allFinite() || !y.allFinite()) throw ValidationError("lasso_fit: non-finite input");
    if (!std::isfinite(alpha) || alpha < 0.0) throw ValidationError("lasso_fit: alpha must be finite and non-negative");

    const Eigen::Index d = X.cols();
    const Vector col_sq = X.colwise().squaredNorm().transpose();
    const double kkt_tol = 10.0 * opt.tol * X.norm();

    LassoSolution sol;
    sol.coefficients = Vector::Zero(d);
    Vector& p = sol.coefficients;
    Vector r = y;  // y - X p

    for (sol.iterations = 0; sol.iterations < opt.max_iter;) {
        double max_change = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            if (col_sq(k) == 0.0) continue;
            const double old = p(k);
            const double rho = X.col(k).dot(r) + col_sq(k) * old;
            const double mag = std::abs(rho) - 0.5 * alpha;
            const double updated = mag > 0.0 ? std::copysign(mag, rho) / col_sq(k) : 0.0;
            if (updated != old) {
                r.noalias() -= (updated - old) * X.col(k);
                p(k) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        ++sol.iterations;
        sol.objective_trace.push_back(r.squaredNorm() + alpha * p.lpNorm<1>());
        if (max_change < opt.tol) {
            Vector refined = p;
            if (detail::polish_lasso(X, y, alpha, refined) && lasso_kkt_violation(X, y, refined, alpha) <= kkt_tol) {
                p = std::move(refined);
                sol.converged = true;
                break;
            }
            if (lasso_kkt_violation(X, y, p, alpha) <= kkt_tol) {
                sol.converged = true;
                break;
            }
            r = y - X * p;  // clear accumulated drift before sweeping on
        }
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Incremental least squares

/// Least squares against a fixed target with columns appended one at a time.
///
/// Maintains a thin QR factorisation (classical Gram-Schmidt with one
/// re-orthogonalisation pass) together with the projected target and the
/// residual, so appending a column costs O(N T) and truncation is exact.
/// While the columns are linearly independent the solution coincides with
/// least_squares_pinv; `append` refuses numerically dependent columns.
class IncrementalLeastSquares {
public:
    IncrementalLeastSquares() = default;

    explicit IncrementalLeastSquares(Matrix target, double dependence_tol = 1e-10)
        : target_(std::move(target)), residual_(target_), tol_(dependence_tol) {}

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(q_.size()); }
    const Matrix& target() const noexcept { return target_; }
    const Matrix& residual() const noexcept { return residual_; }

    /// Appends `h`; returns false (state unchanged) if h is numerically in the current span.
    bool append(const Vector& h) {
        if (h.size() != target_.rows()) throw ValidationError("IncrementalLeastSquares: column length mismatch");
        const double hnorm = h.norm();
        if (!(hnorm > 0.0) || !std::isfinite(hnorm)) return false;

        const Eigen::Index t = size();
        Vector q = h;
        Vector coeff = Vector::Zero(t);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index j = 0; j < t; ++j) {
                const double c = q_[j].dot(q);
                coeff(j) += c;
                q.noalias() -= c * q_[j];
            }
        }
        const double rho = q.norm();
        if (!(rho > tol_ * hnorm)) return false;
        q /= rho;

        Vector rcol(t + 1);
        rcol.head(t) = coeff;
        rcol(t) = rho;
        Eigen::RowVectorXd crow = q.transpose() * residual_;
        residual_.noalias() -= q * crow;

        q_.push_back(std::move(q));
        r_.push_back(std::move(rcol));
        c_.push_back(std::move(crow));
        residual_history_.push_back(residual_);
        return true;
    }

    /// Drops trailing columns so that `keep` remain.
    void truncate(Eigen::Index keep) {
        if (keep < 0 || keep > size()) throw ValidationError("IncrementalLeastSquares: bad truncate size");
        q_.resize(keep);
        r_.resize(keep);
        c_.resize(keep);
        residual_history_.resize(keep);
        residual_ = keep == 0 ? target_ : residual_history_.back();
    }

    /// Coefficients (T x m) by back substitution.
    Matrix solve() const {
        const Eigen::Index t = size();
        Matrix beta(t, target_.cols());
        for (Eigen::Index i = t - 1; i >= 0; --i) {
            Eigen::RowVectorXd row = c_[i];
            for (Eigen::Index j = i + 1; j < t; ++j) row.noalias() -= r_[j](i) * beta.row(j);
            beta.row(i) = row / r_[i](i);
        }
        return beta;
    }

private:
    Matrix target_;
    Matrix residual_;
    double tol_ = 1e-10;
    std::vector<Vector> q_;
    std::vector<Vector> r_;  // r_[j] is column j of R, length j + 1
    std::vector<Eigen::RowVectorXd> c_;
    std::vector<Matrix> residual_history_;
};

}  // namespace scm
