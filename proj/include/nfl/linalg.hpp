#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nfl/error.hpp>

namespace nfl {

using Vector = std::vector<double>;

/**
 * Dense row-major matrix of doubles.
 *
 * Zero-sized shapes are allowed (a difference matrix of an empty graph is 0 x p);
 * everything else in the library expects at least one row and one column.
 */
class Matrix
{
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), data_(std::move(values))
    {
        if (data_.size() != rows_ * cols_) {
            throw DimensionMismatch("matrix needs " + std::to_string(rows_ * cols_) +
                                    " entries, got " + std::to_string(data_.size()));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows)
        : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0)
    {
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw DimensionMismatch("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    Vector column(std::size_t j) const
    {
        Vector c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }

    const std::vector<double>& values() const noexcept { return data_; }
    std::vector<double>& values() noexcept { return data_; }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a)
{
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix multiply(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw DimensionMismatch("product of " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline Vector multiply(const Matrix& a, std::span<const double> x)
{
    if (a.cols() != x.size()) throw DimensionMismatch("matrix-vector product");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < ai.size(); ++j) s += ai[j] * x[j];
        y[i] = s;
    }
    return y;
}

/// A' x.
inline Vector multiply_transposed(const Matrix& a, std::span<const double> x)
{
    if (a.rows() != x.size()) throw DimensionMismatch("transposed matrix-vector product");
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        auto ai = a.row(i);
        for (std::size_t j = 0; j < ai.size(); ++j) y[j] += ai[j] * xi;
    }
    return y;
}

/**
 * X'X / n, accumulated row by row so that each entry is the same floating-point
 * sum no matter which other columns are present. Fits on column subsets of a
 * data set therefore see bit-identical Gram entries.
 */
inline Matrix scaled_gram(const Matrix& x)
{
    const std::size_t n = x.rows(), k = x.cols();
    Matrix g(k, k);
    for (std::size_t r = 0; r < n; ++r) {
        auto xr = x.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            const double xi = xr[i];
            auto gi = g.row(i);
            for (std::size_t j = i; j < k; ++j) gi[j] += xi * xr[j];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) {
            g(i, j) *= inv_n;
            g(j, i) = g(i, j);
        }
    return g;
}

/// X'y / n with the same row-ordered accumulation as scaled_gram.
inline Vector scaled_cross(const Matrix& x, std::span<const double> y)
{
    if (x.rows() != y.size()) throw DimensionMismatch("cross product");
    Vector c(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        for (std::size_t j = 0; j < xr.size(); ++j) c[j] += xr[j] * y[r];
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (auto& v : c) v *= inv_n;
    return c;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_l1(std::span<const double> a)
{
    double s = 0.0;
    for (double v : a) s += std::abs(v);
    return s;
}

inline double norm_inf(std::span<const double> a)
{
    double s = 0.0;
    for (double v : a) s = std::max(s, std::abs(v));
    return s;
}

/// Largest absolute row sum.
inline double norm_inf(const Matrix& a)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s = std::max(s, norm_l1(a.row(i)));
    return s;
}

inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-12)
{
    if (a.rows() != a.cols()) return false;
    double scale = 0.0;
    for (double v : a.values()) scale = std::max(scale, std::abs(v));
    const double tol = rel_tol * std::max(scale, 1e-300);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol) return false;
    return true;
}

/// Submatrix on the given row and column index lists.
inline Matrix select(const Matrix& a, std::span<const std::size_t> rows, std::span<const std::size_t> cols)
{
    Matrix s(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) s(i, j) = a(rows[i], cols[j]);
    return s;
}

/**
 * Cholesky factor L (lower triangular, A = L L') of a symmetric positive-definite matrix.
 */
class SpdFactor
{
public:
    explicit SpdFactor(const Matrix& a)
    {
        if (a.rows() != a.cols()) throw DimensionMismatch("cholesky of a non-square matrix");
        if (!is_symmetric(a)) throw DomainError("cholesky of a non-symmetric matrix");
        n_ = a.rows();
        l_ = Matrix(n_, n_);
        double trace = 0.0;
        for (std::size_t i = 0; i < n_; ++i) trace += a(i, i);
        const double pivot_floor = 1e-14 * (n_ ? trace / static_cast<double>(n_) : 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            double d = a(j, j);
            auto lj = l_.row(j);
            for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
            if (!(d > pivot_floor) || !(d > 0.0)) {
                throw NotPositiveDefinite("pivot " + std::to_string(j) + " is " + std::to_string(d));
            }
            const double ljj = std::sqrt(d);
            lj[j] = ljj;
            for (std::size_t i = j + 1; i < n_; ++i) {
                auto li = l_.row(i);
                double s = a(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
                li[j] = s / ljj;
            }
        }
    }

    std::size_t dimension() const noexcept { return n_; }
    const Matrix& lower() const noexcept { return l_; }

    void solve_in_place(std::span<double> b) const
    {
        if (b.size() != n_) throw DimensionMismatch("cholesky solve right-hand side");
        for (std::size_t i = 0; i < n_; ++i) {
            auto li = l_.row(i);
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) s -= li[k] * b[k];
            b[i] = s / li[i];
        }
        for (std::size_t i = n_; i-- > 0;) {
            double s = b[i];
            for (std::size_t k = i + 1; k < n_; ++k) s -= l_(k, i) * b[k];
            b[i] = s / l_(i, i);
        }
    }

    Vector solve(std::span<const double> b) const
    {
        Vector x(b.begin(), b.end());
        solve_in_place(x);
        return x;
    }

    /// A^{-1} B, column by column.
    Matrix solve(const Matrix& b) const
    {
        if (b.rows() != n_) throw DimensionMismatch("cholesky solve right-hand side");
        Matrix x(b.rows(), b.cols());
        Vector col(n_);
        for (std::size_t j = 0; j < b.cols(); ++j) {
            for (std::size_t i = 0; i < n_; ++i) col[i] = b(i, j);
            solve_in_place(col);
            for (std::size_t i = 0; i < n_; ++i) x(i, j) = col[i];
        }
        return x;
    }

    Matrix inverse() const { return solve(Matrix::identity(n_)); }

    double log_determinant() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += std::log(l_(i, i));
        return 2.0 * s;
    }

private:
    std::size_t n_ = 0;
    Matrix l_;
};

inline Vector cholesky_solve(const Matrix& a, std::span<const double> b)
{
    if (b.size() != a.rows()) throw DimensionMismatch("right-hand side length");
    return SpdFactor(a).solve(b);
}

/**
 * Moore-Penrose inverse (G'G)^{-1} G' of a tall matrix with full column rank.
 * Rank deficiency surfaces as NotPositiveDefinite from the Cholesky of G'G.
 */
inline Matrix pinv_tall(const Matrix& g)
{
    if (g.rows() < g.cols()) throw DimensionMismatch("pinv_tall needs rows >= cols");
    const std::size_t k = g.cols();
    Matrix gtg(k, k);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gr = g.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            if (gr[i] == 0.0) continue;
            for (std::size_t j = 0; j < k; ++j) gtg(i, j) += gr[i] * gr[j];
        }
    }
    return SpdFactor(gtg).solve(transpose(g));
}

/**
 * All eigenvalues of a symmetric matrix (ascending) by cyclic Jacobi rotations.
 * Sweeps stop once the off-diagonal Frobenius norm is <= 1e-12 * max(1, ||A||_F).
 */
inline Vector eigenvalues_sym(const Matrix& a_in, std::size_t max_sweeps = 100)
{
    if (!is_symmetric(a_in)) throw DomainError("eigenvalues of a non-symmetric matrix");
    Matrix a = a_in;
    const std::size_t n = a.rows();
    double frob = 0.0;
    for (double v : a.values()) frob += v * v;
    const double target = 1e-12 * std::max(1.0, std::sqrt(frob));

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    std::size_t sweep = 0;
    while (off_norm() > target) {
        if (sweep++ == max_sweeps) throw NonConvergence("jacobi eigenvalue sweeps", max_sweeps);
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
            }
        }
    }
    Vector ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

inline double min_eigen_sym(const Matrix& a)
{
    if (a.rows() == 0) throw DimensionMismatch("eigenvalue of an empty matrix");
    return eigenvalues_sym(a).front();
}

/// 1 - Phi(z).
inline double normal_upper_tail(double z)
{
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

inline double normal_density(double z)
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/**
 * z >= 0 with 1 - Phi(z) = q for q in (1e-300, 0.5].
 *
 * Acklam's rational approximation (relative error ~1.2e-9) followed by one
 * Newton step on the upper tail, which leaves |Phi~(z) - q| <= 1e-9 q.
 */
inline double normal_quantile_upper(double q)
{
    if (!(q > 1e-300 && q <= 0.5)) throw DomainError("upper-tail quantile needs q in (1e-300, 0.5]");
    if (q == 0.5) return 0.0;

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};

    double lower; // Phi^{-1}(q) <= 0
    if (q < 0.02425) {
        const double t = std::sqrt(-2.0 * std::log(q));
        lower = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
                ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
    } else {
        const double u = q - 0.5;
        const double r = u * u;
        lower = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    double z = -lower;
    z += (normal_upper_tail(z) - q) / normal_density(z);
    return z;
}

/// Phi^{-1}(u) for u in (0, 1).
inline double normal_quantile(double u)
{
    if (!(u > 0.0 && u < 1.0)) throw DomainError("normal quantile needs u in (0, 1)");
    if (u < 0.5) return -normal_quantile_upper(u);
    if (u > 0.5) return normal_quantile_upper(1.0 - u);
    return 0.0;
}

} // namespace nfl
