#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <nfl/error.hpp>
#include <nfl/linalg.hpp>

namespace nfl {

using Edge = std::pair<std::size_t, std::size_t>;
using EdgeList = std::vector<Edge>;

/**
 * Prior local-neighbourhood graph on p nodes (zero-based).
 *
 * Edges are stored as (u, v) with u < v, sorted lexicographically. Input pairs may
 * come in either orientation; self-loops, duplicates and indices >= p are rejected.
 */
class LocalGraph
{
public:
    LocalGraph() = default;

    LocalGraph(std::size_t p, EdgeList edges) : p_(p), edges_(std::move(edges))
    {
        for (auto& [u, v] : edges_) {
            if (u == v) throw DomainError("self-loop on node " + std::to_string(u));
            if (u >= p_ || v >= p_) {
                throw IndexOutOfRange("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                      ") on a graph with " + std::to_string(p_) + " nodes");
            }
            if (u > v) std::swap(u, v);
        }
        std::sort(edges_.begin(), edges_.end());
        if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
            throw DomainError("duplicate edge in local graph");
    }

    /// Path 0 - 1 - ... - (p-1).
    static LocalGraph chain(std::size_t p)
    {
        EdgeList e;
        for (std::size_t i = 0; i + 1 < p; ++i) e.emplace_back(i, i + 1);
        return {p, std::move(e)};
    }

    std::size_t node_count() const noexcept { return p_; }
    const EdgeList& edges() const noexcept { return edges_; }

    std::vector<std::size_t> degrees() const
    {
        std::vector<std::size_t> deg(p_, 0);
        for (auto [u, v] : edges_) {
            ++deg[u];
            ++deg[v];
        }
        return deg;
    }

private:
    std::size_t p_ = 0;
    EdgeList edges_;
};

/**
 * m x p difference matrix, one row e_i - e_j per stored pair (i < j).
 *
 * Stored as index pairs; dense() materializes it.
 */
class DifferenceMatrix
{
public:
    DifferenceMatrix() = default;
    DifferenceMatrix(std::size_t p, EdgeList rows) : p_(p), rows_(std::move(rows)) {}

    std::size_t row_count() const noexcept { return rows_.size(); }
    std::size_t cols() const noexcept { return p_; }
    const EdgeList& pairs() const noexcept { return rows_; }

    Matrix dense() const
    {
        Matrix d(rows_.size(), p_);
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            d(k, rows_[k].first) = 1.0;
            d(k, rows_[k].second) = -1.0;
        }
        return d;
    }

    /// D theta.
    Vector apply(std::span<const double> theta) const
    {
        if (theta.size() != p_) throw DimensionMismatch("difference matrix applied to a vector of wrong length");
        Vector out(rows_.size());
        for (std::size_t k = 0; k < rows_.size(); ++k) out[k] = theta[rows_[k].first] - theta[rows_[k].second];
        return out;
    }

    /// D' v.
    Vector apply_transposed(std::span<const double> v) const
    {
        if (v.size() != rows_.size()) throw DimensionMismatch("transposed difference applied to wrong length");
        Vector out(p_, 0.0);
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            out[rows_[k].first] += v[k];
            out[rows_[k].second] -= v[k];
        }
        return out;
    }

private:
    std::size_t p_ = 0;
    EdgeList rows_;
};

inline DifferenceMatrix build_difference_matrix(const LocalGraph& g)
{
    return {g.node_count(), g.edges()};
}

/// Rows of D that do not touch node a. Column a of the result is identically zero.
inline DifferenceMatrix exclude_node(const DifferenceMatrix& d, std::size_t a)
{
    if (a >= d.cols()) throw IndexOutOfRange("node " + std::to_string(a) + " of " + std::to_string(d.cols()));
    EdgeList kept;
    for (const auto& e : d.pairs())
        if (e.first != a && e.second != a) kept.push_back(e);
    return {d.cols(), std::move(kept)};
}

/// Drops column a (which must be untouched) and renumbers the columns above it.
inline DifferenceMatrix drop_column(const DifferenceMatrix& d, std::size_t a)
{
    if (a >= d.cols()) throw IndexOutOfRange("node " + std::to_string(a) + " of " + std::to_string(d.cols()));
    EdgeList rows;
    rows.reserve(d.row_count());
    for (auto [i, j] : d.pairs()) {
        if (i == a || j == a) throw ConstraintViolation("dropping a column that is referenced by a row");
        rows.emplace_back(i > a ? i - 1 : i, j > a ? j - 1 : j);
    }
    return {d.cols() - 1, std::move(rows)};
}

/// Entry b = number of rows touching column b.
inline std::vector<std::size_t> column_l1_norms(const DifferenceMatrix& d)
{
    std::vector<std::size_t> norms(d.cols(), 0);
    for (auto [i, j] : d.pairs()) {
        ++norms[i];
        ++norms[j];
    }
    return norms;
}

/// (A (/) B)_{ij} = (AB)_{ij} where A_{ij} == 0, else 0.
inline Matrix diagonal_excluded_product(const Matrix& a, const Matrix& b)
{
    Matrix ab = multiply(a, b);
    if (ab.cols() != a.cols()) {
        throw DimensionMismatch("diagonal-excluded product needs AB to have the shape of A");
    }
    for (std::size_t i = 0; i < ab.rows(); ++i)
        for (std::size_t j = 0; j < ab.cols(); ++j)
            if (a(i, j) != 0.0) ab(i, j) = 0.0;
    return ab;
}

enum class NormKind { l1, l2, linf };

/// Entrywise l_p norm of D (/) Omega; zero iff local pairs share their off-support precision entries.
inline double local_constancy_norm(const DifferenceMatrix& d, const Matrix& omega, NormKind kind)
{
    if (omega.rows() != d.cols() || omega.cols() != d.cols())
        throw DimensionMismatch("precision matrix does not match the difference matrix");
    const Matrix prod = diagonal_excluded_product(d.dense(), omega);
    double acc = 0.0;
    for (double v : prod.values()) {
        switch (kind) {
        case NormKind::l1: acc += std::abs(v); break;
        case NormKind::l2: acc += v * v; break;
        case NormKind::linf: acc = std::max(acc, std::abs(v)); break;
        }
    }
    return kind == NormKind::l2 ? std::sqrt(acc) : acc;
}

} // namespace nfl
