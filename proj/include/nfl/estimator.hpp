#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nfl/error.hpp>
#include <nfl/fused.hpp>
#include <nfl/lasso.hpp>
#include <nfl/linalg.hpp>
#include <nfl/local_graph.hpp>
#include <nfl/parallel.hpp>

namespace nfl {

/// Column-centred, unit-sample-variance data (divisor n - 1). No intercept is fitted downstream.
struct StandardizedData
{
    std::size_t n = 0;
    std::size_t p = 0;
    Matrix matrix;
    Vector column_means;
    Vector column_sds;
};

inline StandardizedData standardize(const Matrix& raw)
{
    const std::size_t n = raw.rows(), p = raw.cols();
    if (n < 2) throw DomainError("standardize needs at least two observations");
    if (p < 1) throw DomainError("standardize needs at least one column");
    if (!raw.all_finite()) throw DomainError("data contain non-finite values");

    StandardizedData out{n, p, raw, Vector(p, 0.0), Vector(p, 0.0)};
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += raw(i, j);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (raw(i, j) - mean) * (raw(i, j) - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (!(sd > 0.0)) throw ConstantColumn(j);
        out.column_means[j] = mean;
        out.column_sds[j] = sd;
        for (std::size_t i = 0; i < n; ++i) out.matrix(i, j) = (raw(i, j) - mean) / sd;
    }
    return out;
}

/// sqrt(<X_a, X_a> / n); equals sqrt((n-1)/n) on standardized data.
inline double sigma_hat(const Matrix& x, std::size_t a)
{
    if (a >= x.cols()) throw IndexOutOfRange("node " + std::to_string(a));
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) ss += x(i, a) * x(i, a);
    return std::sqrt(ss / static_cast<double>(x.rows()));
}

inline double sigma_hat(const StandardizedData& data, std::size_t a) { return sigma_hat(data.matrix, a); }

struct Penalty
{
    double lambda = 0.0;
    double mu = 0.0;
};

/**
 * Data-driven penalties controlling the probability of connecting distinct
 * connectivity components at level alpha:
 *
 *     lambda = sigma/sqrt(n) * Q(alpha / (2 p^2)),
 *     mu     = lambda / (K n^beta0),
 *
 * with Q the upper-tail standard-normal quantile.
 */
inline Penalty regparam_penalty(std::size_t n, std::size_t p, double alpha, double sigma, double K, double beta0)
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
    if (n < 2 || p < 2) throw DomainError("penalty selection needs n >= 2 and p >= 2");
    if (!(sigma > 0.0) || !(K > 0.0) || !(beta0 >= 0.0)) throw DomainError("need sigma > 0, K > 0, beta0 >= 0");
    const double pp = static_cast<double>(p);
    const double q = normal_quantile_upper(alpha / (2.0 * pp * pp));
    const double dn = static_cast<double>(n);
    Penalty pen;
    pen.lambda = sigma / std::sqrt(dn) * q;
    pen.mu = pen.lambda / (K * std::pow(dn, beta0));
    return pen;
}

/**
 * lambda0 = 2(t + log p)/n and mu0 = (2/B) sqrt(2(t + log p)/n); the pair under which the
 * noise event of the oracle inequality has probability >= 1 - 2 e^{-t}. mu0 = 0 when B = 0.
 */
inline Penalty high_probability_penalty(std::size_t n, std::size_t p, double t, double B)
{
    if (n < 1 || p < 1 || !(t > 0.0) || !(B >= 0.0)) throw DomainError("need n, p >= 1, t > 0, B >= 0");
    const double base = (t + std::log(static_cast<double>(p))) / static_cast<double>(n);
    return {2.0 * base, B > 0.0 ? (2.0 / B) * std::sqrt(2.0 * base) : 0.0};
}

struct PenaltyPlan
{
    double alpha = 0.05;
    double K = 1.0;
    double beta0 = 0.25;
    Vector sigma_hat;
    Vector lambda;
    Vector mu;
};

inline PenaltyPlan select_penalties(std::size_t n, std::size_t p, double alpha, std::span<const double> sigma_hats,
                                    double K, double beta0)
{
    PenaltyPlan plan{alpha, K, beta0, Vector(sigma_hats.begin(), sigma_hats.end()), {}, {}};
    for (double s : sigma_hats) {
        const Penalty pen = regparam_penalty(n, p, alpha, s, K, beta0);
        plan.lambda.push_back(pen.lambda);
        plan.mu.push_back(pen.mu);
    }
    return plan;
}

struct FitOptions
{
    double tol = 1e-8;             ///< coordinate-descent tolerance (max coefficient change)
    std::size_t max_iter = 100000; ///< coordinate-descent sweeps
    bool refine = true;            ///< solve the fused objective exactly after the reparametrized lasso
    RefineOptions refinement;
    double kkt_tol = 1e-6;         ///< a refined fit converges when KKT <= kkt_tol (1 + lambda)
    double zero_tol = default_kkt_zero_tol;
};

struct NodeFit
{
    std::size_t node = 0;
    Vector theta;                  ///< length p, theta[node] == 0
    double lambda = 0.0;
    double mu = 0.0;
    std::size_t omega_dim = 0;     ///< p - 1 + m_a
    std::size_t iterations = 0;    ///< coordinate-descent sweeps of the lasso stage
    std::size_t refine_iterations = 0;
    bool polished = false;
    double reparam_objective = 0.0; ///< fused objective at G^+ omega_hat
    double objective = 0.0;
    double kkt_residual = 0.0;
    bool converged = false;
};

namespace detail {

inline std::vector<std::size_t> others(std::size_t p, std::size_t a)
{
    std::vector<std::size_t> idx;
    idx.reserve(p - 1);
    for (std::size_t b = 0; b < p; ++b)
        if (b != a) idx.push_back(b);
    return idx;
}

inline Vector embed(std::span<const double> reduced, std::size_t a)
{
    Vector full(reduced.size() + 1, 0.0);
    for (std::size_t b = 0, r = 0; b < full.size(); ++b)
        if (b != a) full[b] = reduced[r++];
    return full;
}

/// Node-a problem sliced out of the full scaled Gram matrix of the data.
inline FusedProblem node_problem(const Matrix& full_gram, std::size_t a, const DifferenceMatrix& d)
{
    const std::size_t p = full_gram.rows();
    if (a >= p) throw IndexOutOfRange("node " + std::to_string(a) + " of " + std::to_string(p));
    if (d.cols() != p) throw DimensionMismatch("difference matrix has " + std::to_string(d.cols()) + " columns, data " + std::to_string(p));
    const auto idx = others(p, a);
    FusedProblem prob;
    prob.gram = select(full_gram, idx, idx);
    prob.xty.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) prob.xty[r] = full_gram(idx[r], a);
    prob.yty = full_gram(a, a);

    const DifferenceMatrix da = exclude_node(d, a);
    if (column_l1_norms(da)[a] != 0) throw ConstraintViolation("column a of D^a is not zero");
    prob.diff = drop_column(da, a);
    return prob;
}

inline NodeFit fit_node_problem(const FusedProblem& prob, std::size_t a, Penalty pen, const FitOptions& opts)
{
    if (!(pen.lambda > 0.0)) throw DomainError("lambda must be positive");
    if (!(pen.mu >= 0.0)) throw DomainError("mu must be non-negative");

    NodeFit fit;
    fit.node = a;
    fit.lambda = pen.lambda;
    fit.mu = pen.mu;
    LassoOptions lopts;
    lopts.tol = opts.tol;
    lopts.max_iter = opts.max_iter;

    Vector reduced;
    if (pen.mu == 0.0) {
        // G = I: the plain node-wise lasso.
        fit.omega_dim = prob.dimension();
        LassoSolution sol = lasso_cd_gram(prob.gram, prob.xty, prob.yty, pen.lambda, lopts);
        fit.iterations = sol.iterations;
        fit.converged = sol.converged;
        reduced = std::move(sol.coefficients);
        fit.reparam_objective = prob.objective(reduced, pen.lambda, 0.0);
    } else {
        fit.omega_dim = prob.dimension() + prob.diff.row_count();
        ReparamSolution stage = solve_reparametrized(prob, pen.lambda, pen.mu, lopts);
        fit.iterations = stage.lasso.iterations;
        fit.reparam_objective = prob.objective(stage.theta, pen.lambda, pen.mu);
        if (opts.refine) {
            RefineOptions ropts = opts.refinement;
            ropts.zero_tol = opts.zero_tol;
            RefineResult refined = refine_fused(prob, pen.lambda, pen.mu, stage.theta, ropts);
            fit.refine_iterations = refined.iterations;
            fit.polished = refined.polished;
            reduced = std::move(refined.theta);
        } else {
            fit.converged = stage.lasso.converged;
            reduced = std::move(stage.theta);
        }
    }

    fit.objective = prob.objective(reduced, pen.lambda, pen.mu);
    fit.kkt_residual = kkt_check(prob, reduced, pen.lambda, pen.mu, 0.0, opts.zero_tol).max_violation;
    if (pen.mu != 0.0 && opts.refine) fit.converged = fit.kkt_residual <= opts.kkt_tol * (1.0 + pen.lambda);
    fit.theta = embed(reduced, a);
    return fit;
}

} // namespace detail

/**
 * Neighbourhood-fused lasso regression of node a on all other nodes:
 *
 *     argmin_{theta_a = 0} n^{-1}||X_a - X theta||^2 + lambda ||theta||_1 + mu ||D^a theta||_1.
 *
 * For mu > 0 the reparametrized lasso in omega = [I; (mu/lambda) D^a] theta is solved
 * first; its back-mapped G^+ omega_hat is then refined to the exact minimizer (see
 * refine_fused) unless opts.refine is false. mu == 0 runs the plain lasso directly.
 */
inline NodeFit fit_node(const StandardizedData& data, std::size_t a, Penalty pen, const DifferenceMatrix& d,
                        const FitOptions& opts = {})
{
    const Matrix gram = scaled_gram(data.matrix);
    return detail::fit_node_problem(detail::node_problem(gram, a, d), a, pen, opts);
}

/// n^{-1}||X_a - X theta||^2 + lambda ||theta||_1 + mu ||D^a theta||_1, evaluated from the data.
inline double nfl_objective(std::span<const double> theta, const StandardizedData& data, std::size_t a, double lambda,
                            double mu, const DifferenceMatrix& da)
{
    if (theta.size() != data.p || da.cols() != data.p) throw DimensionMismatch("objective inputs");
    if (a >= data.p) throw IndexOutOfRange("node " + std::to_string(a));
    if (theta[a] != 0.0) throw ConstraintViolation("theta_a must be 0");
    const Vector fit = multiply(data.matrix, theta);
    double rss = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
        const double r = data.matrix(i, a) - fit[i];
        rss += r * r;
    }
    return rss / static_cast<double>(data.n) + lambda * norm_l1(theta) + mu * norm_l1(da.apply(theta));
}

/// Subgradient certificate of a node fit, computed from the data (see kkt_from_gradient).
inline KktReport nfl_kkt_check(std::span<const double> theta, const StandardizedData& data, std::size_t a,
                               double lambda, double mu, const DifferenceMatrix& da, double tol,
                               double zero_tol = default_kkt_zero_tol)
{
    if (theta.size() != data.p || da.cols() != data.p) throw DimensionMismatch("KKT inputs");
    if (a >= data.p) throw IndexOutOfRange("node " + std::to_string(a));
    if (theta[a] != 0.0) throw ConstraintViolation("theta_a must be 0");
    for (auto [i, j] : da.pairs())
        if (i == a || j == a) throw ConstraintViolation("D^a has a row touching node a");
    const Vector fit = multiply(data.matrix, theta);
    Vector resid(data.n);
    for (std::size_t i = 0; i < data.n; ++i) resid[i] = data.matrix(i, a) - fit[i];
    Vector grad = multiply_transposed(data.matrix, resid);
    for (auto& g : grad) g *= -2.0 / static_cast<double>(data.n);
    return kkt_from_gradient(grad, theta, da, lambda, mu, tol, zero_tol, a);
}

/// { b != a : |theta_b| > tau }.
inline std::vector<std::size_t> extract_neighborhood(const NodeFit& fit, double tau)
{
    if (!(tau > 0.0)) throw DomainError("support threshold must be positive");
    std::vector<std::size_t> ne;
    for (std::size_t b = 0; b < fit.theta.size(); ++b)
        if (b != fit.node && std::abs(fit.theta[b]) > tau) ne.push_back(b);
    return ne;
}

enum class CombineRule { union_rule, intersection_rule };

inline std::string to_string(CombineRule r) { return r == CombineRule::union_rule ? "union" : "intersection"; }

inline CombineRule parse_combine_rule(const std::string& s)
{
    if (s == "union") return CombineRule::union_rule;
    if (s == "intersection") return CombineRule::intersection_rule;
    throw ParseError("rule must be 'union' or 'intersection', got '" + s + "'");
}

struct GraphEstimate
{
    std::size_t p = 0;
    std::vector<std::vector<std::size_t>> neighborhoods;
    CombineRule rule = CombineRule::union_rule;
    EdgeList edges; ///< (a, b) with a < b, sorted
};

/// Union: a in ne_b or b in ne_a. Intersection: both.
inline GraphEstimate combine_edges(std::span<const NodeFit> fits, CombineRule rule, double tau)
{
    const std::size_t p = fits.size();
    GraphEstimate g;
    g.p = p;
    g.rule = rule;
    std::vector<std::vector<char>> adj(p, std::vector<char>(p, 0));
    for (std::size_t a = 0; a < p; ++a) {
        if (fits[a].node != a || fits[a].theta.size() != p) throw DimensionMismatch("fits must be one per node, in order");
        g.neighborhoods.push_back(extract_neighborhood(fits[a], tau));
        for (std::size_t b : g.neighborhoods.back()) adj[a][b] = 1;
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a + 1; b < p; ++b) {
            const bool keep = rule == CombineRule::union_rule ? (adj[a][b] || adj[b][a]) : (adj[a][b] && adj[b][a]);
            if (keep) g.edges.emplace_back(a, b);
        }
    return g;
}

enum class PenaltyRule { regparam, high_probability, explicit_values };

struct GraphConfig
{
    PenaltyRule penalty_rule = PenaltyRule::regparam;
    double alpha = 0.05;
    double K = 1.0;
    double beta0 = 0.25;
    double t = 1.0;          ///< high_probability only
    Penalty explicit_penalty; ///< explicit_values only
    bool force_mu_zero = false;   ///< the Meinshausen-Buhlmann baseline
    bool shared_penalties = false; ///< one (lambda, mu) for every node, from the mean sigma_hat
    CombineRule rule = CombineRule::union_rule;
    double tau = 1e-6;
    FitOptions fit;
    std::size_t threads = 1;
};

struct GraphFit
{
    GraphEstimate estimate;
    std::vector<NodeFit> fits;
    PenaltyPlan plan;

    bool converged() const
    {
        return std::all_of(fits.begin(), fits.end(), [](const NodeFit& f) { return f.converged; });
    }
};

/// Largest number of local neighbours of b once a is excluded, over all (a, b).
inline double local_bound_B(const DifferenceMatrix& d)
{
    std::size_t best = 0;
    for (std::size_t a = 0; a < d.cols(); ++a)
        for (std::size_t v : column_l1_norms(exclude_node(d, a))) best = std::max(best, v);
    return static_cast<double>(best);
}

inline PenaltyPlan plan_penalties(const StandardizedData& data, const DifferenceMatrix& d, const GraphConfig& cfg)
{
    const std::size_t p = data.p;
    Vector sig(p);
    for (std::size_t a = 0; a < p; ++a) sig[a] = sigma_hat(data, a);
    if (cfg.shared_penalties) {
        double mean = 0.0;
        for (double s : sig) mean += s;
        std::fill(sig.begin(), sig.end(), mean / static_cast<double>(p));
    }

    PenaltyPlan plan{cfg.alpha, cfg.K, cfg.beta0, sig, {}, {}};
    switch (cfg.penalty_rule) {
    case PenaltyRule::regparam:
        plan = select_penalties(data.n, p, cfg.alpha, sig, cfg.K, cfg.beta0);
        break;
    case PenaltyRule::high_probability: {
        const Penalty pen = high_probability_penalty(data.n, p, cfg.t, local_bound_B(d));
        plan.lambda.assign(p, pen.lambda);
        plan.mu.assign(p, pen.mu);
        break;
    }
    case PenaltyRule::explicit_values:
        plan.lambda.assign(p, cfg.explicit_penalty.lambda);
        plan.mu.assign(p, cfg.explicit_penalty.mu);
        break;
    }
    if (cfg.force_mu_zero) std::fill(plan.mu.begin(), plan.mu.end(), 0.0);
    return plan;
}

/// Penalty selection, p node fits (optionally in parallel, results ordered by node) and edge combination.
inline GraphFit fit_graph(const StandardizedData& data, const LocalGraph& local, const GraphConfig& cfg)
{
    if (local.node_count() != data.p) {
        throw DimensionMismatch("local graph has " + std::to_string(local.node_count()) + " nodes, data " +
                                std::to_string(data.p));
    }
    if (data.p < 2) throw DomainError("graph estimation needs p >= 2");
    const DifferenceMatrix d = build_difference_matrix(local);
    GraphFit out;
    out.plan = plan_penalties(data, d, cfg);
    const Matrix gram = scaled_gram(data.matrix);
    out.fits.resize(data.p);
    parallel_for(data.p, cfg.threads, [&](std::size_t a) {
        out.fits[a] = detail::fit_node_problem(detail::node_problem(gram, a, d), a,
                                               {out.plan.lambda[a], out.plan.mu[a]}, cfg.fit);
    });
    out.estimate = combine_edges(out.fits, cfg.rule, cfg.tau);
    return out;
}

} // namespace nfl
