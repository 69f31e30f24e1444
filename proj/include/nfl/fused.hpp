#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <nfl/error.hpp>
#include <nfl/lasso.hpp>
#include <nfl/linalg.hpp>
#include <nfl/local_graph.hpp>

namespace nfl {

/*
 * Fused lasso in sufficient-statistic form:
 *
 *     yty - 2 xty'theta + theta' gram theta + lambda ||theta||_1 + mu ||D theta||_1
 *
 * which equals n^{-1}||y - X theta||^2 + lambda ||theta||_1 + mu ||D theta||_1 for
 * gram = X'X/n, xty = X'y/n, yty = y'y/n.
 */
struct FusedProblem
{
    Matrix gram;
    Vector xty;
    double yty = 0.0;
    DifferenceMatrix diff; ///< columns = gram.rows()

    std::size_t dimension() const noexcept { return gram.rows(); }

    /// Gradient of the quadratic part, 2 (gram theta - xty).
    Vector gradient(std::span<const double> theta) const
    {
        Vector g = multiply(gram, theta);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (g[i] - xty[i]);
        return g;
    }

    double objective(std::span<const double> theta, double lambda, double mu) const
    {
        const Vector g_theta = multiply(gram, theta);
        double value = yty - 2.0 * dot(xty, theta) + dot(theta, g_theta) + lambda * norm_l1(theta);
        if (mu != 0.0) value += mu * norm_l1(diff.apply(theta));
        return value;
    }
};

/// Subdifferential case of one coordinate: (theta_b zero?, [D' sgn(D theta)]_b zero?).
enum class KktCase : int {
    excluded = 0,          ///< the response node itself
    active_fused = 1,      ///< theta_b != 0, D_b != 0
    active_unfused = 2,    ///< theta_b != 0, D_b == 0
    inactive_fused = 3,    ///< theta_b == 0, D_b != 0
    inactive_unfused = 4,  ///< theta_b == 0, D_b == 0
};

struct KktReport
{
    double max_violation = 0.0;        ///< joint certificate (see kkt_from_gradient)
    double coordinate_violation = 0.0; ///< max of the per-coordinate violations
    bool passed = false;               ///< max_violation <= tol
    std::vector<KktCase> cases;
    Vector violations;                 ///< per coordinate
    std::array<std::size_t, 5> case_counts{};
};

inline constexpr double default_kkt_zero_tol = 1e-10;

namespace detail {

/// Dinic max-flow on real capacities; graphs here have at most a few hundred nodes.
class MaxFlow
{
public:
    explicit MaxFlow(std::size_t n) : adj_(n), level_(n), it_(n) {}

    void add_edge(std::size_t u, std::size_t v, double cap)
    {
        if (!(cap > 0.0)) return;
        adj_[u].push_back(edges_.size());
        edges_.push_back({v, cap});
        adj_[v].push_back(edges_.size());
        edges_.push_back({u, 0.0});
    }

    double run(std::size_t s, std::size_t t, double eps)
    {
        double total = 0.0;
        while (bfs(s, t, eps)) {
            std::fill(it_.begin(), it_.end(), std::size_t{0});
            for (double f; (f = dfs(s, t, std::numeric_limits<double>::infinity(), eps)) > eps;) total += f;
        }
        return total;
    }

private:
    struct Arc
    {
        std::size_t to;
        double cap;
    };

    bool bfs(std::size_t s, std::size_t t, double eps)
    {
        std::fill(level_.begin(), level_.end(), -1);
        std::vector<std::size_t> queue{s};
        level_[s] = 0;
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const std::size_t u = queue[h];
            for (std::size_t e : adj_[u])
                if (edges_[e].cap > eps && level_[edges_[e].to] < 0) {
                    level_[edges_[e].to] = level_[u] + 1;
                    queue.push_back(edges_[e].to);
                }
        }
        return level_[t] >= 0;
    }

    double dfs(std::size_t u, std::size_t t, double pushed, double eps)
    {
        if (u == t) return pushed;
        for (std::size_t& i = it_[u]; i < adj_[u].size(); ++i) {
            const std::size_t e = adj_[u][i];
            Arc& arc = edges_[e];
            if (arc.cap <= eps || level_[arc.to] != level_[u] + 1) continue;
            const double got = dfs(arc.to, t, std::min(pushed, arc.cap), eps);
            if (got > eps) {
                arc.cap -= got;
                edges_[e ^ 1].cap += got;
                return got;
            }
        }
        return 0.0;
    }

    std::vector<Arc> edges_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<int> level_;
    std::vector<std::size_t> it_;
};

/**
 * Is there w in [-1, 1]^F (one multiplier per fused row) whose net outflow
 * o_b = sum_{rows (b, j)} w - sum_{rows (i, b)} w lies in [lo_b, hi_b] for every b?
 * Solved as a circulation with lower bounds.
 */
inline bool flow_feasible(std::size_t k, const EdgeList& fused, std::span<const double> lo, std::span<const double> hi)
{
    // Shift w = f - 1 with f in [0, 2] on arc i -> j.
    Vector shift(k, 0.0);
    for (auto [i, j] : fused) {
        shift[i] -= 1.0;
        shift[j] += 1.0;
    }
    // Node b must push y_b in [lo_b - shift_b, hi_b - shift_b] into the network; model it with
    // arcs from / to a hub h, then remove lower bounds through a super source and sink.
    const std::size_t hub = k, src = k + 1, snk = k + 2;
    MaxFlow flow(k + 3);
    Vector excess(k + 1, 0.0);
    auto bounded_arc = [&](std::size_t u, std::size_t v, double lower, double upper) {
        flow.add_edge(u, v, upper - lower);
        excess[v] += lower;
        excess[u] -= lower;
    };
    for (auto [i, j] : fused) flow.add_edge(i, j, 2.0);
    double scale = 1.0;
    for (std::size_t b = 0; b < k; ++b) {
        const double a = lo[b] - shift[b], c = hi[b] - shift[b];
        if (a > c) return false;
        scale = std::max({scale, std::abs(a), std::abs(c)});
        if (a >= 0.0) bounded_arc(hub, b, a, c);
        else if (c <= 0.0) bounded_arc(b, hub, -c, -a);
        else {
            flow.add_edge(hub, b, c);
            flow.add_edge(b, hub, -a);
        }
    }
    double need = 0.0;
    for (std::size_t v = 0; v <= k; ++v) {
        if (excess[v] > 0.0) {
            flow.add_edge(src, v, excess[v]);
            need += excess[v];
        } else if (excess[v] < 0.0) {
            flow.add_edge(v, snk, -excess[v]);
        }
    }
    const double eps = 1e-15 * scale;
    return flow.run(src, snk, eps) >= need - 1e-12 * scale * static_cast<double>(k + 1);
}

} // namespace detail

/**
 * Subgradient certificate for the fused lasso
 *
 *     0 in G(theta) + lambda d||theta||_1 + mu D' d||D theta||_1,   G = gradient of the quadratic.
 *
 * With s_b = sgn(theta_b), t_k = sgn((D theta)_k), D_b = [D' t]_b and f_b the number of
 * rows touching b with zero difference (each carries a free multiplier in [-1, 1]),
 * every coordinate falls in one of four cases keyed on (s_b == 0, D_b == 0); the
 * per-coordinate violation is
 *
 *   theta_b != 0 : max(0, |G_b + lambda s_b + mu D_b| - mu f_b)
 *   theta_b == 0 : max(0, |G_b + mu D_b| - lambda - mu f_b).
 *
 * These conditions are necessary only, because a multiplier is shared by both ends of
 * its row. max_violation is the exact joint quantity: the smallest eps for which
 * multipliers exist with every coordinate's residual inside its interval widened by
 * eps, found by bisection over a max-flow feasibility test. Values within zero_tol of
 * 0 count as zero; `skip` marks a coordinate that is not a free variable.
 */
inline KktReport kkt_from_gradient(std::span<const double> grad, std::span<const double> theta,
                                   const DifferenceMatrix& d, double lambda, double mu, double tol,
                                   double zero_tol = default_kkt_zero_tol,
                                   std::optional<std::size_t> skip = std::nullopt)
{
    const std::size_t k = theta.size();
    if (grad.size() != k || d.cols() != k) throw DimensionMismatch("KKT check inputs");

    auto sgn = [zero_tol](double v) { return std::abs(v) <= zero_tol ? 0.0 : (v > 0 ? 1.0 : -1.0); };

    Vector fusion_sub(k, 0.0);
    std::vector<std::size_t> fused_count(k, 0);
    EdgeList fused_rows;
    for (auto [i, j] : d.pairs()) {
        const double s = sgn(theta[i] - theta[j]);
        if (s == 0.0) {
            ++fused_count[i];
            ++fused_count[j];
            fused_rows.emplace_back(i, j);
        } else {
            fusion_sub[i] += s;
            fusion_sub[j] -= s;
        }
    }

    KktReport report;
    report.cases.assign(k, KktCase::excluded);
    report.violations.assign(k, 0.0);
    Vector resid(k, 0.0), slack(k, 0.0);
    double no_multiplier = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
        if (skip && *skip == b) {
            ++report.case_counts[0];
            continue;
        }
        const double sb = sgn(theta[b]);
        const bool fused_nonzero = fusion_sub[b] != 0.0;
        resid[b] = grad[b] + mu * fusion_sub[b] + lambda * sb;
        slack[b] = sb != 0.0 ? 0.0 : lambda;
        KktCase c;
        if (sb != 0.0) c = fused_nonzero ? KktCase::active_fused : KktCase::active_unfused;
        else c = fused_nonzero ? KktCase::inactive_fused : KktCase::inactive_unfused;
        const double v = std::max(0.0, std::abs(resid[b]) - slack[b] - mu * static_cast<double>(fused_count[b]));
        report.cases[b] = c;
        report.violations[b] = v;
        ++report.case_counts[static_cast<int>(c)];
        report.coordinate_violation = std::max(report.coordinate_violation, v);
        no_multiplier = std::max(no_multiplier, std::max(0.0, std::abs(resid[b]) - slack[b]));
    }

    if (fused_rows.empty() || mu == 0.0) {
        report.max_violation = no_multiplier;
    } else {
        // Need mu * o_b in [-resid_b - slack_b - eps, -resid_b + slack_b + eps].
        auto feasible = [&](double eps) {
            Vector lo(k), hi(k);
            for (std::size_t b = 0; b < k; ++b) {
                if (skip && *skip == b) {
                    lo[b] = -1.0;
                    hi[b] = 1.0;
                    continue;
                }
                lo[b] = (-resid[b] - slack[b] - eps) / mu;
                hi[b] = (-resid[b] + slack[b] + eps) / mu;
            }
            return detail::flow_feasible(k, fused_rows, lo, hi);
        };
        double lo_eps = report.coordinate_violation, hi_eps = no_multiplier;
        if (lo_eps > 0.0 && feasible(lo_eps)) hi_eps = lo_eps;
        else if (lo_eps == 0.0 && feasible(0.0)) hi_eps = 0.0;
        for (int iter = 0; iter < 64 && hi_eps - lo_eps > 1e-15 * (1.0 + hi_eps); ++iter) {
            const double mid = 0.5 * (lo_eps + hi_eps);
            if (feasible(mid)) hi_eps = mid;
            else lo_eps = mid;
        }
        report.max_violation = hi_eps;
    }
    report.passed = report.max_violation <= tol;
    return report;
}

inline KktReport kkt_check(const FusedProblem& prob, std::span<const double> theta, double lambda, double mu,
                           double tol, double zero_tol = default_kkt_zero_tol)
{
    return kkt_from_gradient(prob.gradient(theta), theta, prob.diff, lambda, mu, tol, zero_tol);
}

/// Result of the reparametrized lasso: omega = G theta with G = [I; (mu/lambda) D].
struct ReparamSolution
{
    Vector theta;
    Vector omega;
    LassoSolution lasso;
};

/**
 * Solves min_omega n^{-1}||y - X G^+ omega||^2 + lambda ||omega||_1 and maps back with
 * theta = G^+ omega. G = [I; (mu/lambda) D] always has full column rank.
 */
inline ReparamSolution solve_reparametrized(const FusedProblem& prob, double lambda, double mu,
                                            const LassoOptions& opts)
{
    const std::size_t k = prob.dimension();
    const std::size_t m = prob.diff.row_count();
    const double ratio = mu / lambda;

    Matrix g(k + m, k);
    for (std::size_t i = 0; i < k; ++i) g(i, i) = 1.0;
    for (std::size_t r = 0; r < m; ++r) {
        auto [i, j] = prob.diff.pairs()[r];
        g(k + r, i) = ratio;
        g(k + r, j) = -ratio;
    }
    const Matrix g_pinv = pinv_tall(g); // k x (k + m)

    // Sufficient statistics of the design X G^+.
    const Matrix gram_gp = multiply(prob.gram, g_pinv);
    const Matrix omega_gram = multiply(transpose(g_pinv), gram_gp);
    Matrix sym = omega_gram;
    for (std::size_t i = 0; i < sym.rows(); ++i)
        for (std::size_t j = i + 1; j < sym.cols(); ++j) sym(i, j) = sym(j, i) = 0.5 * (omega_gram(i, j) + omega_gram(j, i));
    const Vector omega_xty = multiply_transposed(g_pinv, prob.xty);

    ReparamSolution out;
    out.lasso = lasso_cd_gram(sym, omega_xty, prob.yty, lambda, opts);
    out.omega = out.lasso.coefficients;
    out.theta = multiply(g_pinv, out.omega);
    return out;
}

struct RefineOptions
{
    std::size_t max_iter = 100000; ///< ADMM iterations
    std::size_t polish_every = 10;
    double kkt_target = 1e-9;      ///< accepted polish must satisfy KKT <= kkt_target (1 + lambda)
    double zero_tol = default_kkt_zero_tol;
};

struct RefineResult
{
    Vector theta;
    std::size_t iterations = 0;
    bool polished = false;
    double kkt = 0.0;
};

namespace detail {

class DisjointSets
{
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

/**
 * Exact minimizer on the face suggested by an ADMM iterate.
 *
 * zero_top marks coordinates held at 0, fused rows tie their endpoints together. The
 * remaining sign pattern makes the objective a smooth quadratic on that face, solved
 * in closed form. Returns nullopt when the face is inconsistent or the solution leaves it.
 */
inline std::optional<Vector> polish_face(const FusedProblem& prob, double lambda, double mu,
                                         std::span<const double> z_top, std::span<const double> z_bot)
{
    const std::size_t k = prob.dimension();
    const auto& rows = prob.diff.pairs();

    DisjointSets sets(k);
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (z_bot[r] == 0.0) sets.unite(rows[r].first, rows[r].second);

    std::vector<std::size_t> comp(k);
    for (std::size_t b = 0; b < k; ++b) comp[b] = sets.find(b);

    std::vector<char> comp_zero(k, 0);
    std::vector<double> comp_sign(k, 0.0);
    for (std::size_t b = 0; b < k; ++b)
        if (z_top[b] == 0.0) comp_zero[comp[b]] = 1;
    for (std::size_t b = 0; b < k; ++b) {
        const std::size_t c = comp[b];
        if (comp_zero[c]) continue;
        const double s = z_top[b] > 0 ? 1.0 : -1.0;
        if (comp_sign[c] == 0.0) comp_sign[c] = s;
        else if (comp_sign[c] != s) return std::nullopt;
    }

    Vector linear(k, 0.0);
    for (std::size_t b = 0; b < k; ++b)
        if (!comp_zero[comp[b]]) linear[b] = lambda * comp_sign[comp[b]];
    std::vector<double> row_sign(rows.size(), 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (z_bot[r] == 0.0) continue;
        auto [i, j] = rows[r];
        if (comp[i] == comp[j]) return std::nullopt;
        if (comp_zero[comp[i]] && comp_zero[comp[j]]) return std::nullopt;
        row_sign[r] = z_bot[r] > 0 ? 1.0 : -1.0;
        linear[i] += mu * row_sign[r];
        linear[j] -= mu * row_sign[r];
    }

    std::vector<std::size_t> free_index(k, k);
    std::size_t n_free = 0;
    for (std::size_t b = 0; b < k; ++b) {
        const std::size_t c = comp[b];
        if (comp_zero[c]) continue;
        if (free_index[c] == k) free_index[c] = n_free++;
    }

    Vector theta(k, 0.0);
    if (n_free > 0) {
        Matrix h(n_free, n_free);
        Vector rhs(n_free, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            if (comp_zero[comp[i]]) continue;
            const std::size_t ci = free_index[comp[i]];
            rhs[ci] += 2.0 * prob.xty[i] - linear[i];
            for (std::size_t j = 0; j < k; ++j) {
                if (comp_zero[comp[j]]) continue;
                h(ci, free_index[comp[j]]) += 2.0 * prob.gram(i, j);
            }
        }
        Vector gamma;
        try {
            gamma = SpdFactor(h).solve(rhs);
        } catch (const Error&) {
            return std::nullopt;
        }
        for (std::size_t b = 0; b < k; ++b) {
            const std::size_t c = comp[b];
            if (comp_zero[c]) continue;
            const double v = gamma[free_index[c]];
            if (v == 0.0 || (v > 0) != (comp_sign[c] > 0)) return std::nullopt;
            theta[b] = v;
        }
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (row_sign[r] == 0.0) continue;
        const double diff = theta[rows[r].first] - theta[rows[r].second];
        if (diff == 0.0 || (diff > 0) != (row_sign[r] > 0)) return std::nullopt;
    }
    return theta;
}

} // namespace detail

/**
 * Exact fused-lasso minimizer by ADMM on  f(theta) + lambda ||z||_1,  z = G theta,
 * G = [I; (mu/lambda) D], with periodic active-face polishing.
 *
 * ADMM locates the zero and fused pattern (its z iterate is exactly sparse); the
 * polish step then solves the face problem exactly and is accepted only when the
 * KKT check passes and the objective does not exceed that of the ADMM iterate.
 */
inline RefineResult refine_fused(const FusedProblem& prob, double lambda, double mu, std::span<const double> start,
                                 const RefineOptions& opts = {})
{
    const std::size_t k = prob.dimension();
    const std::size_t m = prob.diff.row_count();
    const auto& rows = prob.diff.pairs();
    const double ratio = mu / lambda;
    const double kkt_target = opts.kkt_target * (1.0 + lambda);

    auto apply_g = [&](std::span<const double> theta, std::span<double> out) {
        for (std::size_t i = 0; i < k; ++i) out[i] = theta[i];
        for (std::size_t r = 0; r < m; ++r) out[k + r] = ratio * (theta[rows[r].first] - theta[rows[r].second]);
    };
    auto apply_gt = [&](std::span<const double> v, std::span<double> out) {
        for (std::size_t i = 0; i < k; ++i) out[i] = v[i];
        for (std::size_t r = 0; r < m; ++r) {
            out[rows[r].first] += ratio * v[k + r];
            out[rows[r].second] -= ratio * v[k + r];
        }
    };

    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i) trace += prob.gram(i, i);
    double rho = std::max(2.0 * trace / static_cast<double>(std::max<std::size_t>(k, 1)), 1e-3);

    Matrix gtg(k, k);
    for (std::size_t i = 0; i < k; ++i) gtg(i, i) = 1.0;
    for (auto [i, j] : rows) {
        const double r2 = ratio * ratio;
        gtg(i, i) += r2;
        gtg(j, j) += r2;
        gtg(i, j) -= r2;
        gtg(j, i) -= r2;
    }
    auto factor_for = [&](double rho_now) {
        Matrix sys(k, k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) sys(i, j) = 2.0 * prob.gram(i, j) + rho_now * gtg(i, j);
        return SpdFactor(sys);
    };
    SpdFactor factor = factor_for(rho);

    RefineResult result;
    Vector theta(start.begin(), start.end());
    Vector z(k + m), u(k + m, 0.0), g_theta(k + m), z_old(k + m), tmp(k), rhs(k), dz(k);
    apply_g(theta, z);
    {
        // Dual warm start from the gradient at the starting point.
        const Vector grad = prob.gradient(theta);
        for (std::size_t i = 0; i < k; ++i) u[i] = std::clamp(-grad[i] / lambda, -1.0, 1.0) * lambda / rho;
    }

    auto try_polish = [&](const Vector& admm_theta) -> bool {
        auto cand = detail::polish_face(prob, lambda, mu, std::span<const double>(z).first(k),
                                        std::span<const double>(z).subspan(k));
        if (!cand) return false;
        const KktReport rep = kkt_check(prob, *cand, lambda, mu, kkt_target, opts.zero_tol);
        if (!rep.passed) return false;
        const double f_cand = prob.objective(*cand, lambda, mu);
        const double f_admm = prob.objective(admm_theta, lambda, mu);
        if (f_cand > f_admm + 1e-12 * (1.0 + std::abs(f_admm))) return false;
        result.theta = std::move(*cand);
        result.polished = true;
        result.kkt = rep.max_violation;
        return true;
    };

    constexpr double over_relax = 1.6;
    const double thresh_scale = lambda;
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        for (std::size_t i = 0; i < k + m; ++i) z_old[i] = z[i] - u[i];
        apply_gt(z_old, tmp);
        for (std::size_t i = 0; i < k; ++i) rhs[i] = 2.0 * prob.xty[i] + rho * tmp[i];
        factor.solve_in_place(rhs);
        theta = rhs;

        apply_g(theta, g_theta);
        z_old = z;
        const double t = thresh_scale / rho;
        for (std::size_t i = 0; i < k + m; ++i) {
            const double relaxed = over_relax * g_theta[i] + (1.0 - over_relax) * z_old[i];
            z[i] = soft_threshold(relaxed + u[i], t);
            u[i] += relaxed - z[i];
        }
        result.iterations = it;

        if (it % opts.polish_every == 0) {
            if (try_polish(theta)) return result;

            double prim = 0.0, dual = 0.0;
            for (std::size_t i = 0; i < k + m; ++i) {
                const double r = g_theta[i] - z[i];
                prim += r * r;
                z_old[i] = z[i] - z_old[i];
            }
            apply_gt(z_old, dz);
            for (std::size_t i = 0; i < k; ++i) dual += rho * rho * dz[i] * dz[i];
            prim = std::sqrt(prim);
            dual = std::sqrt(dual);
            if (prim > 10.0 * dual || dual > 10.0 * prim) {
                const double scale = prim > dual ? 2.0 : 0.5;
                rho *= scale;
                for (auto& v : u) v /= scale;
                factor = factor_for(rho);
            }
        }
    }

    // No verified face: return the last primal iterate.
    result.theta = theta;
    result.kkt = kkt_check(prob, theta, lambda, mu, kkt_target, opts.zero_tol).max_violation;
    return result;
}

} // namespace nfl
