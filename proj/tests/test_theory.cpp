#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <gtest/gtest.h>

#include <nfl/sim.hpp>
#include <nfl/theory.hpp>

#include "oracles.hpp"

using namespace nfl;
using hp = boost::multiprecision::cpp_dec_float_50;

namespace {

Matrix random_spd(std::uint64_t seed, std::size_t p)
{
    const Matrix m = oracle::gaussian_matrix(seed, p, p);
    Matrix a = multiply(transpose(m), m);
    for (std::size_t i = 0; i < p; ++i) a(i, i) += static_cast<double>(p);
    return a;
}

Matrix equicorrelated(std::size_t p, double c)
{
    Matrix omega(p, p, c);
    for (std::size_t i = 0; i < p; ++i) omega(i, i) = 1.0;
    return omega;
}

// Sylvester-Hadamard columns: +-1 entries, mutually orthogonal, squared norm n.
Matrix hadamard(std::size_t n)
{
    Matrix h(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) h(i, j) = std::popcount(i & j) % 2 ? -1.0 : 1.0;
    return h;
}

// Smallest root of the characteristic polynomial of a symmetric 3x3 matrix (trigonometric form).
double min_eigen_3x3(const Matrix& a)
{
    const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) + (a(2, 2) - q) * (a(2, 2) - q) + 2 * p1;
    const double p = std::sqrt(p2 / 6.0);
    Matrix b = a;
    for (std::size_t i = 0; i < 3; ++i) b(i, i) -= q;
    const double det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                       b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    const double r = std::clamp(det / (2 * p * p * p), -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    return q + 2 * p * std::cos(phi + 2 * std::numbers::pi / 3);
}

} // namespace

TEST(PrecisionModel, Validation)
{
    EXPECT_THROW(make_precision_model({{1, 2}, {2, 1}}, LocalGraph::chain(2)), NotPositiveDefinite);
    EXPECT_THROW(make_precision_model({{1, 0.1}, {0.2, 1}}, LocalGraph::chain(2)), NotPositiveDefinite);
    EXPECT_THROW(make_precision_model(Matrix::identity(3), LocalGraph::chain(2)), DimensionMismatch);
    EXPECT_THROW(make_precision_model(Matrix::identity(2), LocalGraph::chain(2), EdgeList{{0, 1}}), ConstraintViolation);
    const PrecisionModel m = make_precision_model({{1, 0.2}, {0.2, 1}}, LocalGraph::chain(2), EdgeList{{1, 0}});
    EXPECT_EQ(m.true_edges, (EdgeList{{0, 1}}));
    EXPECT_NEAR(m.sigma(0, 1), -0.2 / 0.96, 1e-15);
}

TEST(ThetaPopulation, Examples)
{
    const PrecisionModel id = make_precision_model(Matrix::identity(4), LocalGraph::chain(4));
    for (double v : theta_population(id, 2)) EXPECT_EQ(v, 0.0);
    const PrecisionModel two = make_precision_model({{1, .2}, {.2, 1}}, LocalGraph::chain(2));
    EXPECT_EQ(theta_population(two, 0), (Vector{0.0, -0.2}));
}

TEST(ThetaPopulation, NormalEquations)
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const std::size_t p = 3 + seed % 6;
        const PrecisionModel m = make_precision_model(random_spd(seed, p), LocalGraph::chain(p));
        const Eigen::MatrixXd sigma = oracle::to_eigen(m.omega).inverse();
        for (std::size_t a = 0; a < p; ++a) {
            const Vector theta = theta_population(m, a);
            for (std::size_t k = 0; k < p; ++k) {
                if (k == a) continue;
                double lhs = 0;
                for (std::size_t b = 0; b < p; ++b) lhs += sigma(k, b) * theta[b];
                EXPECT_NEAR(lhs, sigma(k, a), 1e-10);
            }
        }
    }
}

TEST(ThetaRestricted, FullSetMatchesPopulation)
{
    const PrecisionModel m = make_precision_model(random_spd(3, 6), LocalGraph::chain(6));
    for (std::size_t a = 0; a < 6; ++a) {
        const auto rest = detail::others(6, a);
        const Vector r = theta_restricted(m, a, rest);
        const Vector full = theta_population(m, a);
        for (std::size_t i = 0; i < rest.size(); ++i) EXPECT_NEAR(r[i], full[rest[i]], 1e-12);
    }
    EXPECT_TRUE(theta_restricted(m, 0, std::vector<std::size_t>{}).empty());
}

TEST(Stability, IdentityModelIsZero)
{
    const PrecisionModel m = make_precision_model(Matrix::identity(5), LocalGraph::chain(5));
    const DifferenceMatrix d = build_difference_matrix(m.local_graph);
    for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = 0; b < 5; ++b) {
            EXPECT_EQ(stability_S(m, a, b), 0.0);
            EXPECT_EQ(stability_T(m, d, a, b), 0.0);
        }
    const AssumptionReport r = assumption_report(m, d);
    EXPECT_EQ(r.delta1, 0.0);
    EXPECT_EQ(r.delta2_ratio, 0.0);
    EXPECT_EQ(r.min_partial_correlation, 0.0);
    EXPECT_EQ(r.max_neighborhood_size, 0u);
    EXPECT_EQ(r.true_edge_count, 0u);
    EXPECT_EQ(r.max_local_neighbors, 2u);
}

TEST(Stability, LocallyConstantModel)
{
    const PrecisionModel m = make_precision_model(equicorrelated(6, 0.15), LocalGraph::chain(6));
    const DifferenceMatrix d = build_difference_matrix(m.local_graph);
    EXPECT_EQ(local_constancy_norm(d, m.omega, NormKind::l1), 0.0);
    for (std::size_t a = 0; a < 6; ++a) {
        EXPECT_TRUE(fused_neighbors(m, d, a).empty());
        for (std::size_t b = 0; b < 6; ++b) EXPECT_EQ(stability_T(m, d, a, b), 0.0);
    }
}

TEST(Stability, ChainModelSatisfiesNeighborhoodStability)
{
    const PrecisionModel m = chain_precision(10, 0.2);
    const DifferenceMatrix d = build_difference_matrix(m.local_graph);
    for (std::size_t a = 0; a < 10; ++a) {
        const auto ne = neighborhood(m, a);
        for (std::size_t b = 0; b < 10; ++b)
            if (b != a && !std::binary_search(ne.begin(), ne.end(), b)) { EXPECT_LT(std::abs(stability_S(m, a, b)), 1.0); }
    }
    const AssumptionReport r = assumption_report(m, d);
    EXPECT_LT(r.delta1, 1.0);
    EXPECT_GE(r.delta2_ratio, 0.0);
    EXPECT_NEAR(r.min_partial_correlation, 0.2, 1e-15);
    EXPECT_EQ(r.true_edge_count, 9u);
}

TEST(Stability, StabilityMatchesDefinition)
{
    // S_a(b) recomputed from Sigma blocks with Eigen.
    const PrecisionModel m = chain_precision(6, 0.3, {{0, 4}});
    const Eigen::MatrixXd sigma = oracle::to_eigen(m.omega).inverse();
    for (std::size_t a = 0; a < 6; ++a) {
        const auto ne = neighborhood(m, a);
        const int k = static_cast<int>(ne.size());
        Eigen::MatrixXd sss(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) sss(i, j) = sigma(ne[i], ne[j]);
        auto restricted = [&](std::size_t b) {
            Eigen::VectorXd rhs(k);
            for (int i = 0; i < k; ++i) rhs[i] = sigma(ne[i], b);
            return Eigen::VectorXd(sss.ldlt().solve(rhs));
        };
        const Eigen::VectorXd ta = restricted(a);
        for (std::size_t b = 0; b < 6; ++b) {
            if (b == a) continue;
            const Eigen::VectorXd tb = restricted(b);
            double s = 0;
            for (int i = 0; i < k; ++i) s += (ta[i] > 0 ? 1.0 : -1.0) * tb[i];
            EXPECT_NEAR(stability_S(m, a, b), s, 1e-12);
        }
    }
}

TEST(AssumptionReport, TwoNodePartialCorrelation)
{
    for (double rho : {0.1, 0.4, -0.3}) {
        const PrecisionModel m = make_precision_model({{1, rho}, {rho, 1}}, LocalGraph(2, {}));
        const AssumptionReport r = assumption_report(m, build_difference_matrix(m.local_graph));
        EXPECT_NEAR(r.min_partial_correlation, std::abs(rho), 1e-15);
        EXPECT_EQ(r.max_neighborhood_size, 1u);
    }
}

TEST(RestrictedEigenvalue, OrthonormalDesign)
{
    EXPECT_NEAR(restricted_eigenvalue(hadamard(8), 3), 1.0, 1e-12);
    EXPECT_EQ(restricted_eigenvalue(oracle::gaussian_matrix(1, 3, 6), 0), 0.0);
    EXPECT_THROW(restricted_eigenvalue(hadamard(4), 4), IndexOutOfRange);
}

TEST(RestrictedEigenvalue, CharacteristicPolynomialAndRayleigh)
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Matrix x = oracle::gaussian_matrix(seed, 200, 4);
        for (std::size_t i = 0; i < 200; ++i) x(i, 2) += 0.7 * x(i, 1);
        const std::size_t a = seed % 4;
        const double lam = restricted_eigenvalue(x, a);
        const auto idx = detail::others(4, a);
        std::vector<std::size_t> rows(200);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const Matrix gram = scaled_gram(select(x, rows, idx));
        EXPECT_NEAR(lam, min_eigen_3x3(gram), 1e-10);
        for (int t = 0; t < 100; ++t) {
            const Vector v{z(rng), z(rng), z(rng)};
            EXPECT_LE(lam, dot(v, multiply(gram, v)) / dot(v, v) + 1e-12);
        }
    }
}

TEST(Compatibility, IdentityGramHolds)
{
    const Matrix x = hadamard(8);
    const std::vector<std::size_t> s0{1, 2, 5};
    const CompatibilityResult r = check_compatibility(x, 0, s0, 1.0, 1.0, 2000);
    EXPECT_TRUE(r.holds);
    EXPECT_GE(r.worst_ratio, 1.0 - 1e-12);
    EXPECT_GT(r.points_tested, 2000u);
}

TEST(Compatibility, RankDeficientDesignFails)
{
    Matrix x = oracle::gaussian_matrix(2, 50, 5);
    for (std::size_t i = 0; i < 50; ++i) x(i, 2) = x(i, 1);
    const std::vector<std::size_t> s0{1};
    const CompatibilityResult r = check_compatibility(x, 0, s0, 1.0, 0.5, 100);
    EXPECT_FALSE(r.holds);
    EXPECT_LT(r.worst_ratio, 1e-12);
    ASSERT_EQ(r.worst_direction.size(), 5u);
    EXPECT_EQ(r.worst_direction[0], 0.0);
}

TEST(Compatibility, PhiAboveTrueMinimumFails)
{
    const Matrix x = oracle::gaussian_matrix(3, 40, 6);
    const std::vector<std::size_t> s0{1, 2};
    const CompatibilityResult base = check_compatibility(x, 0, s0, 1.0, 1.0, 5000);
    const double phi_true = std::sqrt(base.worst_ratio);
    EXPECT_FALSE(check_compatibility(x, 0, s0, 1.0, phi_true * 1.01, 5000).holds);
}

TEST(Compatibility, Deterministic)
{
    const Matrix x = oracle::gaussian_matrix(4, 30, 6);
    const std::vector<std::size_t> s0{2, 4};
    const CompatibilityResult a = check_compatibility(x, 1, s0, 2.0, 0.3, 500, 9);
    const CompatibilityResult b = check_compatibility(x, 1, s0, 2.0, 0.3, 500, 9);
    EXPECT_EQ(a.holds, b.holds);
    EXPECT_EQ(a.worst_ratio, b.worst_ratio);
    EXPECT_EQ(a.worst_direction, b.worst_direction);
    EXPECT_THROW(check_compatibility(x, 1, std::vector<std::size_t>{1}, 1, 1, 1), IndexOutOfRange);
    EXPECT_THROW(check_compatibility(x, 1, std::vector<std::size_t>{}, 1, 1, 1), DomainError);
}

TEST(Bounds, Arithmetic)
{
    EXPECT_EQ(oracle_bound(1, 1, 0, 0, 1), 4.0);
    EXPECT_EQ(oracle_bound(2, 1, 1, 2, 2), 2.0 * 16 / 4);
    EXPECT_EQ(finalthm_constant(1, 1, 1), 95200.0);
    EXPECT_EQ(finalthm_constant(3, 1, 2), 224.0 * 3 * 25 * 17 / 4);
    EXPECT_TRUE(oracle_regime_holds(17, 1, 1, 1));
    EXPECT_FALSE(oracle_regime_holds(16.9, 1, 1, 1));
    EXPECT_THROW(l1_error_bound_large_n(1, 18, 1), DomainError);
    const double x = 50, r = std::sqrt(100.0);
    EXPECT_NEAR(l1_error_bound_large_n(2, x, 1), 2 * std::pow(8 * x + 4 * r, 2) / (4 * x - 12 * r), 1e-9);
    EXPECT_NEAR(l2ineq_bound(0.1, 0.05, 2, 4, 10, 3, 0.5), 2 * (0.1 + 0.1 * 2) * 3 + 10 * 4 * 0.1 * 0.2 / 0.5, 1e-12);
}

TEST(Type1Reduction, Examples)
{
    const Type1Reduction zero_d2 = type1_reduction(1, 0, 0.2, 0.3, 0.25, 0.5, 100, 1);
    EXPECT_EQ(zero_d2.reduction, 0.0);
    EXPECT_EQ(zero_d2.nfl_bound, zero_d2.lasso_bound);
    const Type1Reduction full_delta2 = type1_reduction(1, 2, 0.2, 1.0, 0.25, 0.5, 100, 1);
    EXPECT_EQ(full_delta2.reduction, 0.0);

    const Type1Reduction ref = type1_reduction(1, 1, 0, 0, 0.25, 0.5, 100, 1);
    const double inner = 0.5 + 0.5 * std::pow(100.0, 0.25);
    EXPECT_NEAR(ref.nfl_bound, std::exp(-10 * inner * inner), 1e-30);
    EXPECT_NEAR(std::log(ref.nfl_bound), -43.31, 0.01);
    EXPECT_NEAR(ref.lasso_bound, std::exp(-2.5), 1e-15);
    EXPECT_THROW(type1_reduction(1, 1, 1.0, 0, 0.25, 0.5, 100, 1), DomainError);
    EXPECT_THROW(type1_reduction(1, 1, 0, 1.1, 0.25, 0.5, 100, 1), DomainError);
}

TEST(Type1Reduction, GapMatchesMultiprecision)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 500; ++t) {
        const double d1 = 2 * u(rng), d2 = 2 * u(rng), dl1 = 0.99 * u(rng), dl2 = u(rng), b0 = 0.5 * u(rng),
                     eps = u(rng), n = 1 + 200 * u(rng), s2 = 0.5 + 2 * u(rng);
        const Type1Reduction r = type1_reduction(d1, d2, dl1, dl2, b0, eps, n, s2);
        const hp ne = pow(hp(n), hp(eps)), nb = pow(hp(n), hp(b0));
        const hp uu = hp(d1) / 2 * (1 - hp(dl1)), vv = hp(d2) / 2 * (1 - hp(dl2)) * nb;
        const hp lasso = exp(-uu * uu * ne / s2), nfl = exp(-(uu + vv) * (uu + vv) * ne / s2);
        const double gap = (lasso - nfl).convert_to<double>();
        EXPECT_LE(r.nfl_bound, r.lasso_bound);
        if (gap > 0) { EXPECT_LE(std::abs(r.reduction - gap), 1e-12 * gap); }
        if (gap > 0) { EXPECT_LE(std::abs(r.product_form - gap), 1e-12 * gap); }
    }
}

TEST(Components, LabelsAndCrossings)
{
    const auto labels = connectivity_components(6, {{1, 2}, {4, 5}, {2, 3}});
    EXPECT_EQ(labels, (std::vector<std::size_t>{0, 1, 1, 1, 4, 4}));
    EXPECT_TRUE(connects_distinct_components(labels, {{0, 1}}));
    EXPECT_FALSE(connects_distinct_components(labels, {{1, 3}, {4, 5}}));
    EXPECT_THROW(connectivity_components(3, {{0, 3}}), IndexOutOfRange);
}
