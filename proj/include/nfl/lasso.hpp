#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <nfl/error.hpp>
#include <nfl/linalg.hpp>

namespace nfl {

/*
 * Lasso with the objective convention
 *
 *     n^{-1} ||y - X theta||^2 + lambda ||theta||_1.
 *
 * The per-coordinate minimizer is S(<X_j, r_j>/n, lambda/2) / (<X_j, X_j>/n): the
 * threshold is lambda/2 because the quadratic carries no 1/2 factor.
 */

struct LassoOptions
{
    double tol = 1e-8;            ///< max absolute coefficient change per sweep
    std::size_t max_iter = 100000; ///< sweeps
    Vector warm_start;            ///< empty = cold start at zero
    bool record_objective = false;
};

struct LassoSolution
{
    Vector coefficients;
    std::size_t iterations = 0;
    double final_max_update = 0.0;
    double objective = 0.0;
    bool converged = false;
    Vector objective_trace; ///< objective after each sweep, when requested
};

inline double soft_threshold(double z, double t)
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

inline constexpr double zero_column_floor = 1e-12;

/// Objective from sufficient statistics: gram = X'X/n, xty = X'y/n, yty = y'y/n.
inline double lasso_objective_gram(const Matrix& gram, std::span<const double> xty, double yty, double lambda,
                                   std::span<const double> theta)
{
    const Vector g_theta = multiply(gram, theta);
    return yty - 2.0 * dot(xty, theta) + dot(theta, g_theta) + lambda * norm_l1(theta);
}

inline double lasso_objective(const Matrix& x, std::span<const double> y, double lambda, std::span<const double> theta)
{
    if (x.rows() != y.size() || x.cols() != theta.size()) throw DimensionMismatch("lasso objective");
    const Vector fit = multiply(x, theta);
    double rss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) rss += (y[i] - fit[i]) * (y[i] - fit[i]);
    return rss / static_cast<double>(y.size()) + lambda * norm_l1(theta);
}

namespace detail {

inline void check_lasso_inputs(double lambda, const LassoOptions& opts, std::size_t k)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lasso needs lambda > 0");
    if (!(opts.tol > 0.0)) throw DomainError("lasso needs tol > 0");
    if (!opts.warm_start.empty() && opts.warm_start.size() != k) throw DimensionMismatch("warm start length");
}

} // namespace detail

/**
 * Cyclic coordinate descent on sufficient statistics (covariance updates).
 * Iterates match the residual-updating form; the cost per sweep is O(k^2) instead of O(nk).
 */
inline LassoSolution lasso_cd_gram(const Matrix& gram, std::span<const double> xty, double yty, double lambda,
                                   const LassoOptions& opts = {})
{
    const std::size_t k = gram.rows();
    if (gram.cols() != k || xty.size() != k) throw DimensionMismatch("lasso sufficient statistics");
    detail::check_lasso_inputs(lambda, opts, k);

    LassoSolution sol;
    sol.coefficients = opts.warm_start.empty() ? Vector(k, 0.0) : opts.warm_start;
    Vector& theta = sol.coefficients;
    for (std::size_t j = 0; j < k; ++j)
        if (gram(j, j) < zero_column_floor) theta[j] = 0.0;
    Vector g_theta = multiply(gram, theta);

    const double half_lambda = 0.5 * lambda;
    while (sol.iterations < opts.max_iter) {
        double max_update = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double gjj = gram(j, j);
            if (gjj < zero_column_floor) continue;
            const double old = theta[j];
            const double z = xty[j] - (g_theta[j] - gjj * old);
            const double updated = soft_threshold(z, half_lambda) / gjj;
            const double delta = updated - old;
            if (delta == 0.0) continue;
            theta[j] = updated;
            auto gj = gram.row(j);
            for (std::size_t i = 0; i < k; ++i) g_theta[i] += gj[i] * delta;
            max_update = std::max(max_update, std::abs(delta));
        }
        ++sol.iterations;
        sol.final_max_update = max_update;
        if (opts.record_objective) sol.objective_trace.push_back(lasso_objective_gram(gram, xty, yty, lambda, theta));
        if (max_update <= opts.tol) {
            sol.converged = true;
            break;
        }
    }
    sol.objective = lasso_objective_gram(gram, xty, yty, lambda, theta);
    return sol;
}

/**
 * Cyclic coordinate descent for the lasso with exact per-coordinate minimization.
 *
 * Columns need not be standardized. A column with ||X_j||^2/n < 1e-12 is pinned at 0.
 * Non-convergence is reported through LassoSolution::converged; the last iterate is returned.
 */
inline LassoSolution lasso_cd(const Matrix& x, std::span<const double> y, double lambda, const LassoOptions& opts = {})
{
    const std::size_t n = x.rows(), k = x.cols();
    if (n == 0 || y.size() != n) throw DimensionMismatch("lasso design and response");
    detail::check_lasso_inputs(lambda, opts, k);

    if (n >= k) {
        const Matrix gram = scaled_gram(x);
        const Vector xty = scaled_cross(x, y);
        const double yty = dot(y, y) / static_cast<double>(n);
        return lasso_cd_gram(gram, xty, yty, lambda, opts);
    }

    // Wide design: partial-residual updates on a column-major copy.
    const Matrix xt = transpose(x);
    const double inv_n = 1.0 / static_cast<double>(n);
    Vector col_sq(k);
    for (std::size_t j = 0; j < k; ++j) col_sq[j] = dot(xt.row(j), xt.row(j)) * inv_n;

    LassoSolution sol;
    sol.coefficients = opts.warm_start.empty() ? Vector(k, 0.0) : opts.warm_start;
    Vector& theta = sol.coefficients;
    for (std::size_t j = 0; j < k; ++j)
        if (col_sq[j] < zero_column_floor) theta[j] = 0.0;
    Vector resid(y.begin(), y.end());
    {
        const Vector fit = multiply(x, theta);
        for (std::size_t i = 0; i < n; ++i) resid[i] -= fit[i];
    }

    const double half_lambda = 0.5 * lambda;
    while (sol.iterations < opts.max_iter) {
        double max_update = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (col_sq[j] < zero_column_floor) continue;
            auto xj = xt.row(j);
            const double old = theta[j];
            const double z = dot(xj, resid) * inv_n + col_sq[j] * old;
            const double updated = soft_threshold(z, half_lambda) / col_sq[j];
            const double delta = updated - old;
            if (delta == 0.0) continue;
            theta[j] = updated;
            for (std::size_t i = 0; i < n; ++i) resid[i] -= xj[i] * delta;
            max_update = std::max(max_update, std::abs(delta));
        }
        ++sol.iterations;
        sol.final_max_update = max_update;
        if (opts.record_objective) sol.objective_trace.push_back(lasso_objective(x, y, lambda, theta));
        if (max_update <= opts.tol) {
            sol.converged = true;
            break;
        }
    }
    sol.objective = lasso_objective(x, y, lambda, theta);
    return sol;
}

/// max_j of |G_j + lambda sgn(theta_j)| (theta_j != 0) or max(0, |G_j| - lambda) (theta_j == 0),
/// with G_j = -(2/n) <y - X theta, X_j>.
inline double lasso_kkt_residual(const Matrix& x, std::span<const double> y, double lambda,
                                 std::span<const double> theta)
{
    if (x.rows() != y.size() || x.cols() != theta.size()) throw DimensionMismatch("lasso KKT residual");
    const std::size_t n = x.rows();
    Vector resid(y.begin(), y.end());
    const Vector fit = multiply(x, theta);
    for (std::size_t i = 0; i < n; ++i) resid[i] -= fit[i];
    const Vector xr = multiply_transposed(x, resid);
    double worst = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double g = -2.0 * xr[j] / static_cast<double>(n);
        const double v = theta[j] != 0.0 ? std::abs(g + lambda * (theta[j] > 0 ? 1.0 : -1.0))
                                         : std::max(0.0, std::abs(g) - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

/// Smallest lambda with an all-zero solution: max_j |2 <X_j, y>/n|.
inline double lasso_lambda_max(const Matrix& x, std::span<const double> y)
{
    const Vector c = scaled_cross(x, y);
    return 2.0 * norm_inf(c);
}

} // namespace nfl
