#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nfl/error.hpp>
#include <nfl/fused.hpp>
#include <nfl/linalg.hpp>
#include <nfl/local_graph.hpp>
#include <nfl/random.hpp>

namespace nfl {

inline constexpr double precision_zero_tol = 1e-12;

/// Ground truth for simulation and diagnostics.
struct PrecisionModel
{
    std::size_t p = 0;
    Matrix omega;
    EdgeList true_edges; ///< (a, b), a < b, |omega_ab| > 1e-12
    LocalGraph local_graph;
    Matrix sigma;        ///< omega^{-1}
};

inline EdgeList nonzero_pattern(const Matrix& omega, double tol = precision_zero_tol)
{
    EdgeList e;
    for (std::size_t a = 0; a < omega.rows(); ++a)
        for (std::size_t b = a + 1; b < omega.cols(); ++b)
            if (std::abs(omega(a, b)) > tol) e.emplace_back(a, b);
    return e;
}

/**
 * Validates omega (square, symmetric, SPD) and caches its inverse. true_edges, when
 * given, must match the nonzero pattern of omega.
 */
inline PrecisionModel make_precision_model(Matrix omega, LocalGraph local,
                                           std::optional<EdgeList> true_edges = std::nullopt)
{
    const std::size_t p = omega.rows();
    if (p == 0 || omega.cols() != p) throw DimensionMismatch("precision matrix must be square and non-empty");
    if (local.node_count() != p) throw DimensionMismatch("local graph size differs from the precision matrix");
    if (!omega.all_finite()) throw DomainError("precision matrix has non-finite entries");
    if (!is_symmetric(omega)) throw NotPositiveDefinite("precision matrix is not symmetric");
    const SpdFactor chol(omega); // throws NotPositiveDefinite

    EdgeList pattern = nonzero_pattern(omega);
    if (true_edges) {
        for (auto& [u, v] : *true_edges) {
            if (u >= p || v >= p) throw IndexOutOfRange("true edge outside the model");
            if (u > v) std::swap(u, v);
        }
        std::sort(true_edges->begin(), true_edges->end());
        true_edges->erase(std::unique(true_edges->begin(), true_edges->end()), true_edges->end());
        if (*true_edges != pattern) throw ConstraintViolation("true_edges disagree with the nonzero pattern of omega");
    }
    PrecisionModel m;
    m.p = p;
    m.sigma = chol.inverse();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) m.sigma(i, j) = m.sigma(j, i) = 0.5 * (m.sigma(i, j) + m.sigma(j, i));
    m.omega = std::move(omega);
    m.true_edges = std::move(pattern);
    m.local_graph = std::move(local);
    return m;
}

/// theta^a_b = -omega_ab / omega_aa (b != a), theta^a_a = 0: the population regression of X_a on the rest.
inline Vector theta_population(const PrecisionModel& model, std::size_t a)
{
    if (a >= model.p) throw IndexOutOfRange("node " + std::to_string(a));
    Vector theta(model.p, 0.0);
    const double waa = model.omega(a, a);
    for (std::size_t b = 0; b < model.p; ++b)
        if (b != a) theta[b] = -model.omega(a, b) / waa;
    return theta;
}

/// Population regression of X_b on X_S: (Sigma_SS)^{-1} Sigma_Sb. Empty S gives an empty vector.
inline Vector theta_restricted(const PrecisionModel& model, std::size_t b, std::span<const std::size_t> s)
{
    if (b >= model.p) throw IndexOutOfRange("node " + std::to_string(b));
    for (std::size_t k : s)
        if (k >= model.p) throw IndexOutOfRange("index set entry " + std::to_string(k));
    if (s.empty()) return {};
    const std::size_t target[] = {b};
    const Matrix sss = select(model.sigma, s, s);
    const Matrix ssb = select(model.sigma, s, target);
    return SpdFactor(sss).solve(ssb.column(0));
}

namespace detail {

inline double sgn0(double v, double tol = precision_zero_tol) { return std::abs(v) <= tol ? 0.0 : (v > 0 ? 1.0 : -1.0); }

inline std::vector<std::size_t> support(std::span<const double> v, double tol = precision_zero_tol)
{
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > tol) s.push_back(i);
    return s;
}

/// [(D^a)' sgn(D^a theta^a)]_k for every k.
inline Vector fusion_direction(const PrecisionModel& model, const DifferenceMatrix& d, std::size_t a)
{
    const DifferenceMatrix da = exclude_node(d, a);
    Vector s = da.apply(theta_population(model, a));
    for (double& v : s) v = sgn0(v);
    return da.apply_transposed(s);
}

} // namespace detail

/// ne_a: support of theta^a.
inline std::vector<std::size_t> neighborhood(const PrecisionModel& model, std::size_t a)
{
    return detail::support(theta_population(model, a));
}

/// L_a = { k : [(D^a)' sgn(D^a theta^a)]_k != 0 }.
inline std::vector<std::size_t> fused_neighbors(const PrecisionModel& model, const DifferenceMatrix& d, std::size_t a)
{
    return detail::support(detail::fusion_direction(model, d, a));
}

/// S_a(b) = sum_{k in ne_a} sgn(theta^{a,ne_a}_k) theta^{b,ne_a}_k.
inline double stability_S(const PrecisionModel& model, std::size_t a, std::size_t b)
{
    const auto ne = neighborhood(model, a);
    if (ne.empty()) return 0.0;
    const Vector ta = theta_restricted(model, a, ne);
    const Vector tb = theta_restricted(model, b, ne);
    double s = 0.0;
    for (std::size_t k = 0; k < ne.size(); ++k) s += detail::sgn0(ta[k]) * tb[k];
    return s;
}

/// T_a(b) = sum_{k in L_a} [(D^a)' sgn(D^a theta^a)]_k theta^{b,L_a}_k.
inline double stability_T(const PrecisionModel& model, const DifferenceMatrix& d, std::size_t a, std::size_t b)
{
    if (d.cols() != model.p) throw DimensionMismatch("difference matrix does not match the model");
    const Vector dir = detail::fusion_direction(model, d, a);
    const auto la = detail::support(dir);
    if (la.empty()) return 0.0;
    const Vector tb = theta_restricted(model, b, la);
    double t = 0.0;
    for (std::size_t k = 0; k < la.size(); ++k) t += dir[la[k]] * tb[k];
    return t;
}

struct AssumptionReport
{
    double delta1 = 0.0;              ///< max |S_a(b)|, b outside ne_a
    double delta2_ratio = 0.0;        ///< max |T_a(b)| / ||D^a_.b||_1, b outside L_a with a nonzero column
    double min_partial_correlation = 0.0; ///< min |pi_ab| over true edges (0 without edges)
    std::size_t max_neighborhood_size = 0;
    std::size_t max_local_neighbors = 0;
    std::size_t true_edge_count = 0;
};

/// pi_ab = -omega_ab / sqrt(omega_aa omega_bb).
inline double partial_correlation(const PrecisionModel& model, std::size_t a, std::size_t b)
{
    return -model.omega(a, b) / std::sqrt(model.omega(a, a) * model.omega(b, b));
}

inline AssumptionReport assumption_report(const PrecisionModel& model, const DifferenceMatrix& d)
{
    if (d.cols() != model.p) throw DimensionMismatch("difference matrix does not match the model");
    AssumptionReport r;
    r.true_edge_count = model.true_edges.size();
    const std::size_t p = model.p;
    for (std::size_t a = 0; a < p; ++a) {
        const auto ne = neighborhood(model, a);
        r.max_neighborhood_size = std::max(r.max_neighborhood_size, ne.size());
        const auto la = fused_neighbors(model, d, a);
        const auto col = column_l1_norms(exclude_node(d, a));
        for (std::size_t b = 0; b < p; ++b) {
            if (b == a) continue;
            if (!std::binary_search(ne.begin(), ne.end(), b))
                r.delta1 = std::max(r.delta1, std::abs(stability_S(model, a, b)));
            if (!std::binary_search(la.begin(), la.end(), b) && col[b] > 0)
                r.delta2_ratio = std::max(r.delta2_ratio, std::abs(stability_T(model, d, a, b)) / static_cast<double>(col[b]));
        }
    }
    for (std::size_t deg : model.local_graph.degrees()) r.max_local_neighbors = std::max(r.max_local_neighbors, deg);
    if (!model.true_edges.empty()) {
        r.min_partial_correlation = std::numeric_limits<double>::infinity();
        for (auto [a, b] : model.true_edges)
            r.min_partial_correlation = std::min(r.min_partial_correlation, std::abs(partial_correlation(model, a, b)));
    }
    return r;
}

/// lambda_min(X^a' X^a / n); 0 when n < p - 1.
inline double restricted_eigenvalue(const Matrix& x, std::size_t a)
{
    const std::size_t n = x.rows(), p = x.cols();
    if (a >= p) throw IndexOutOfRange("node " + std::to_string(a));
    if (n == 0) throw DomainError("restricted eigenvalue needs n >= 1");
    if (p < 2) throw DomainError("restricted eigenvalue needs p >= 2");
    if (n < p - 1) return 0.0;
    std::vector<std::size_t> idx, rows(n);
    for (std::size_t b = 0; b < p; ++b)
        if (b != a) idx.push_back(b);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return min_eigen_sym(scaled_gram(select(x, rows, idx)));
}

struct CompatibilityResult
{
    bool holds = true;
    double worst_ratio = std::numeric_limits<double>::infinity(); ///< min of s0 theta'G theta / (phi0^2 ||theta_S0||_1^2)
    Vector worst_direction;  ///< length p, entry a = 0
    std::size_t points_tested = 0;
};

/**
 * Sampled falsification of the Delta-compatibility condition
 *
 *     ||theta_S0||_1^2 <= s0 theta' (X^a' X^a / n) theta / phi0^2   on   ||theta_S0c||_1 <= (3 + Delta) ||theta_S0||_1.
 *
 * Tests num_samples random cone points (Gaussian directions, off-support mass rescaled
 * to a uniform fraction of the cone boundary) and deterministic extreme points: signed
 * indicators on S0 with mass {0, .25, .5, .75, 1} (3 + Delta) on a single off-support
 * coordinate. S0 holds node indices other than a.
 */
inline CompatibilityResult check_compatibility(const Matrix& x, std::size_t a, std::span<const std::size_t> s0,
                                               double delta, double phi0, std::size_t num_samples,
                                               std::uint64_t seed = 1)
{
    const std::size_t n = x.rows(), p = x.cols();
    if (a >= p) throw IndexOutOfRange("node " + std::to_string(a));
    if (!(phi0 > 0.0) || !(delta > 0.0)) throw DomainError("compatibility needs phi0 > 0 and Delta > 0");
    if (s0.empty()) throw DomainError("compatibility needs a non-empty S0");
    if (n == 0) throw DomainError("compatibility needs n >= 1");
    std::vector<char> in_s0(p, 0);
    for (std::size_t k : s0) {
        if (k >= p || k == a) throw IndexOutOfRange("S0 entry " + std::to_string(k));
        in_s0[k] = 1;
    }
    std::vector<std::size_t> on, off;
    for (std::size_t b = 0; b < p; ++b) {
        if (b == a) continue;
        (in_s0[b] ? on : off).push_back(b);
    }
    const double s = static_cast<double>(on.size());
    const double cone = 3.0 + delta;
    const Matrix gram = scaled_gram(x);

    CompatibilityResult out;
    auto test = [&](const Vector& theta) {
        double l1_on = 0.0;
        for (std::size_t k : on) l1_on += std::abs(theta[k]);
        if (!(l1_on > 0.0)) return;
        const double quad = dot(theta, multiply(gram, theta));
        const double ratio = s * quad / (phi0 * phi0 * l1_on * l1_on);
        ++out.points_tested;
        if (ratio < out.worst_ratio) {
            out.worst_ratio = ratio;
            out.worst_direction = theta;
        }
    };

    static constexpr double masses[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int pattern = 0; pattern < 2; ++pattern) {
        // All-positive and alternating signs on S0, plus each single-coordinate indicator.
        std::vector<Vector> bases;
        Vector all(p, 0.0);
        for (std::size_t i = 0; i < on.size(); ++i) all[on[i]] = (pattern == 0 || i % 2 == 0) ? 1.0 : -1.0;
        bases.push_back(all);
        if (pattern == 0)
            for (std::size_t k : on) {
                Vector e(p, 0.0);
                e[k] = 1.0;
                bases.push_back(e);
            }
        for (const Vector& base : bases) {
            double l1_on = 0.0;
            for (std::size_t k : on) l1_on += std::abs(base[k]);
            for (double m : masses) {
                if (m == 0.0) {
                    test(base);
                    continue;
                }
                for (std::size_t j : off)
                    for (double sign : {1.0, -1.0}) {
                        Vector theta = base;
                        theta[j] = sign * m * cone * l1_on;
                        test(theta);
                    }
            }
        }
    }

    const CounterRng rng(seed);
    std::uint64_t counter = 0;
    for (std::size_t r = 0; r < num_samples; ++r) {
        Vector theta(p, 0.0);
        double l1_on = 0.0, l1_off = 0.0;
        for (std::size_t k : on) l1_on += std::abs(theta[k] = rng.normal(counter++));
        for (std::size_t k : off) l1_off += std::abs(theta[k] = rng.normal(counter++));
        const double target = rng.uniform(counter++) * cone * l1_on;
        if (l1_off > 0.0)
            for (std::size_t k : off) theta[k] *= target / l1_off;
        test(theta);
    }
    out.holds = out.worst_ratio >= 1.0;
    return out;
}

/// s0 (2 lambda + B mu)^2 / phi0^2.
inline double oracle_bound(double s0, double lambda, double mu, double B, double phi0)
{
    if (!(s0 > 0.0) || !(lambda >= 0.0) || !(mu >= 0.0) || !(B >= 0.0) || !(phi0 > 0.0))
        throw DomainError("oracle bound needs s0 > 0, phi0 > 0 and non-negative penalties");
    const double t = 2.0 * lambda + B * mu;
    return s0 * t * t / (phi0 * phi0);
}

/// True when lambda >= (3 + 14/Delta) B mu, the penalty regime of the oracle inequality.
inline bool oracle_regime_holds(double lambda, double mu, double B, double delta)
{
    return lambda >= (3.0 + 14.0 / delta) * B * mu;
}

/// Large-n l1 error bound s0 (8x + 4 sqrt(2x))^2 / (phi0^2 (4x - 12 sqrt(2x))), x = t/n > 18.
inline double l1_error_bound_large_n(double s0, double t_over_n, double phi0)
{
    if (!(t_over_n > 18.0)) throw DomainError("large-n l1 bound needs t/n > 18");
    const double r = std::sqrt(2.0 * t_over_n);
    const double num = 8.0 * t_over_n + 4.0 * r;
    return s0 * num * num / (phi0 * phi0 * (4.0 * t_over_n - 12.0 * r));
}

/// 224 s0 (Delta + 4)^2 (3 Delta + 14) / (phi0^2 Delta^2).
inline double finalthm_constant(double s0, double delta, double phi0)
{
    if (!(s0 > 0.0) || !(delta > 0.0) || !(phi0 > 0.0)) throw DomainError("need s0, Delta, phi0 > 0");
    return 224.0 * s0 * (delta + 4.0) * (delta + 4.0) * (3.0 * delta + 14.0) / (phi0 * phi0 * delta * delta);
}

/// 2 (lambda + B mu (1 + sqrt(p)/2)) ||theta0||_1 + n p B mu (lambda + B mu) / delta_min.
inline double l2ineq_bound(double lambda, double mu, double B, std::size_t p, std::size_t n, double theta0_l1,
                           double delta_min)
{
    if (!(delta_min > 0.0)) throw DomainError("l2 bound needs a positive smallest singular value");
    const double dp = static_cast<double>(p), dn = static_cast<double>(n);
    return 2.0 * (lambda + B * mu * (1.0 + std::sqrt(dp) / 2.0)) * theta0_l1 + dn * dp * B * mu * (lambda + B * mu) / delta_min;
}

struct Type1Reduction
{
    double lasso_bound = 0.0;
    double nfl_bound = 0.0;
    double reduction = 0.0;    ///< lasso_bound - nfl_bound
    double product_form = 0.0; ///< same gap from the bracketed product
    double identity_rel_error = 0.0;
};

/**
 * Type-I error bounds of the plain and fused node-wise regressions and their gap.
 *
 *   lasso = exp(-(d1^2/4)(1-delta1)^2 n^eps / s2)
 *   nfl   = exp(-((d1/2)(1-delta1) + (d2/2)(1-delta2) n^beta0)^2 n^eps / s2)
 *
 * The gap uses (u + v)^2 - u^2 = v (2u + v) so it keeps full relative accuracy when the
 * bounds are close. product_form evaluates the bracketed expansion
 * [1 - exp(-((d1 d2/2)(1-delta1)(1-delta2) n^beta0 + (d2^2/4)(1-delta2)^2 n^{2 beta0}) n^eps / s2)] * lasso
 * term by term. delta2 = 1 is the degenerate edge where the fusion term vanishes.
 */
inline Type1Reduction type1_reduction(double d1, double d2, double delta1, double delta2, double beta0, double epsilon,
                                      double n, double sigma_star_sq)
{
    if (!(delta1 >= 0.0 && delta1 < 1.0)) throw DomainError("delta1 must lie in [0, 1)");
    if (!(delta2 >= 0.0 && delta2 <= 1.0)) throw DomainError("delta2 must lie in [0, 1]");
    if (!(sigma_star_sq > 0.0)) throw DomainError("sigma_*^2 must be positive");
    if (!(n >= 1.0)) throw DomainError("n must be at least 1");
    if (!(d1 >= 0.0) || !(d2 >= 0.0)) throw DomainError("d1, d2 must be non-negative");

    const double ne = std::pow(n, epsilon);
    const double nb = std::pow(n, beta0);
    const double u = d1 / 2.0 * (1.0 - delta1);
    const double v = d2 / 2.0 * (1.0 - delta2) * nb;
    const double lasso_exp = u * u * ne / sigma_star_sq;

    Type1Reduction r;
    r.lasso_bound = std::exp(-lasso_exp);
    r.nfl_bound = std::exp(-(u + v) * (u + v) * ne / sigma_star_sq);
    r.reduction = -std::expm1(-v * (2.0 * u + v) * ne / sigma_star_sq) * r.lasso_bound;

    const double bracket = (d1 * d2 / 2.0) * (1.0 - delta1) * (1.0 - delta2) * nb +
                           (d2 * d2 / 4.0) * (1.0 - delta2) * (1.0 - delta2) * nb * nb;
    r.product_form = -std::expm1(-bracket * ne / sigma_star_sq) *
                     std::exp(-(d1 * d1 / 4.0) * (1.0 - delta1) * (1.0 - delta1) * ne / sigma_star_sq);
    const double scale = std::max(std::abs(r.reduction), std::abs(r.product_form));
    r.identity_rel_error = scale > 0.0 ? std::abs(r.reduction - r.product_form) / scale : 0.0;
    return r;
}

/// Connected-component label per node (labels are the smallest node index in the component).
inline std::vector<std::size_t> connectivity_components(std::size_t p, const EdgeList& edges)
{
    detail::DisjointSets sets(p);
    for (auto [u, v] : edges) {
        if (u >= p || v >= p) throw IndexOutOfRange("edge outside the graph");
        sets.unite(u, v);
    }
    std::vector<std::size_t> root_label(p, p), label(p);
    for (std::size_t b = 0; b < p; ++b) {
        const std::size_t r = sets.find(b);
        if (root_label[r] == p) root_label[r] = b;
        label[b] = root_label[r];
    }
    return label;
}

/// True when some edge joins two different components of `truth`.
inline bool connects_distinct_components(const std::vector<std::size_t>& truth_labels, const EdgeList& estimated)
{
    return std::any_of(estimated.begin(), estimated.end(),
                       [&](const Edge& e) { return truth_labels[e.first] != truth_labels[e.second]; });
}

} // namespace nfl
