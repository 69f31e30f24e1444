// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_dec_float.hpp>

#include <nfl/nfl.hpp>

using namespace nfl;
using hp = boost::multiprecision::cpp_dec_float_50;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// Independent quadratic pieces for the node-a problem, computed directly from the data.
struct Reduced
{
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    double c = 0.0;
    std::vector<std::pair<int, int>> rows;
};

Reduced reduce(const StandardizedData& data, std::size_t a, const LocalGraph& local)
{
    const int n = static_cast<int>(data.n), p = static_cast<int>(data.p);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = data.matrix(i, j);
    std::vector<int> keep;
    for (int j = 0; j < p; ++j)
        if (j != static_cast<int>(a)) keep.push_back(j);
    Eigen::MatrixXd xa(n, p - 1);
    for (int j = 0; j < p - 1; ++j) xa.col(j) = x.col(keep[j]);
    Reduced r;
    r.A = xa.transpose() * xa / n;
    r.b = xa.transpose() * x.col(static_cast<int>(a)) / n;
    r.c = x.col(static_cast<int>(a)).squaredNorm() / n;
    auto pos = [&](std::size_t v) { return static_cast<int>(v < a ? v : v - 1); };
    for (auto [u, v] : local.edges())
        if (u != a && v != a) r.rows.emplace_back(pos(u), pos(v));
    return r;
}

double reduced_objective(const Reduced& r, const Eigen::VectorXd& t, double lambda, double mu)
{
    double f = r.c - 2.0 * r.b.dot(t) + t.dot(r.A * t) + lambda * t.lpNorm<1>();
    for (auto [i, j] : r.rows) f += mu * std::abs(t[i] - t[j]);
    return f;
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Projected subgradient with step 2/(sigma (t+1)) and t-weighted averaging; best value seen.
double subgradient_oracle(const Reduced& r, double lambda, double mu, long iterations)
{
    const int k = static_cast<int>(r.b.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r.A);
    const double sigma = 2.0 * eig.eigenvalues().minCoeff();
    Eigen::VectorXd t = Eigen::VectorXd::Zero(k), avg = Eigen::VectorXd::Zero(k), g(k);
    double weight = 0.0;
    double best = reduced_objective(r, t, lambda, mu);
    for (long it = 1; it <= iterations; ++it) {
        g = 2.0 * (r.A * t - r.b);
        for (int i = 0; i < k; ++i) g[i] += lambda * sgn(t[i]);
        for (auto [i, j] : r.rows) {
            const double s = sgn(t[i] - t[j]);
            g[i] += mu * s;
            g[j] -= mu * s;
        }
        t -= (2.0 / (sigma * static_cast<double>(it + 1))) * g;
        weight += static_cast<double>(it);
        avg += (static_cast<double>(it) / weight) * (t - avg);
        if (it % 1000 == 0) best = std::min({best, reduced_objective(r, t, lambda, mu), reduced_objective(r, avg, lambda, mu)});
    }
    return best;
}

// Minimum over every sign pattern of theta and of the fused differences.
double enumeration_oracle(const Reduced& r, double lambda, double mu)
{
    const int k = static_cast<int>(r.b.size()), m = static_cast<int>(r.rows.size());
    int total = 1;
    for (int i = 0; i < k + m; ++i) total *= 3;
    double best = reduced_objective(r, Eigen::VectorXd::Zero(k), lambda, mu);
    for (int code = 0; code < total; ++code) {
        std::vector<int> s(k + m);
        for (int i = 0, c = code; i < k + m; ++i, c /= 3) s[i] = c % 3 - 1;
        std::vector<Eigen::VectorXd> cons;
        Eigen::VectorXd lin = Eigen::VectorXd::Zero(k);
        for (int i = 0; i < k; ++i) {
            if (s[i] == 0) cons.push_back(Eigen::VectorXd::Unit(k, i));
            lin[i] += lambda * s[i];
        }
        for (int q = 0; q < m; ++q) {
            auto [i, j] = r.rows[q];
            Eigen::VectorXd row = Eigen::VectorXd::Zero(k);
            row[i] = 1.0;
            row[j] = -1.0;
            if (s[k + q] == 0) cons.push_back(row);
            lin += mu * s[k + q] * row;
        }
        Eigen::MatrixXd basis;
        if (cons.empty()) {
            basis = Eigen::MatrixXd::Identity(k, k);
        } else {
            Eigen::MatrixXd c(cons.size(), k);
            for (std::size_t i = 0; i < cons.size(); ++i) c.row(static_cast<int>(i)) = cons[i].transpose();
            basis = Eigen::FullPivLU<Eigen::MatrixXd>(c).kernel();
            if (basis.cols() == 1 && basis.norm() == 0.0) continue;
        }
        const Eigen::MatrixXd h = basis.transpose() * r.A * basis;
        const Eigen::VectorXd z = h.ldlt().solve(basis.transpose() * (r.b - 0.5 * lin));
        best = std::min(best, reduced_objective(r, basis * z, lambda, mu));
    }
    return best;
}

PrecisionModel instance_model(std::size_t p, double rho) { return chain_precision(p, rho, default_distant_edges(p)); }

Outcome criterion1()
{
    std::size_t fits = 0, converged = 0, failures = 0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t p = std::array<std::size_t, 3>{5, 10, 20}[i % 3];
        const std::size_t n = (i / 3) % 2 == 0 ? 50 : 200;
        const PrecisionModel model = instance_model(p, 0.2);
        const StandardizedData data = standardize(mvn_sample(model, n, 1000 + i));
        GraphConfig cfg;
        const GraphFit g = fit_graph(data, model.local_graph, cfg);
        const DifferenceMatrix d = build_difference_matrix(model.local_graph);
        for (const NodeFit& f : g.fits) {
            ++fits;
            if (!f.converged) continue;
            ++converged;
            const double v = nfl_kkt_check(f.theta, data, f.node, f.lambda, f.mu, exclude_node(d, f.node), 0.0).max_violation;
            const double scaled = v / (1.0 + f.lambda);
            worst = std::max(worst, scaled);
            if (v > 1e-6 * (1.0 + f.lambda)) ++failures;
        }
    }
    return {failures == 0,
            std::to_string(converged) + "/" + std::to_string(fits) + " node fits converged, " + std::to_string(failures) +
                " over tolerance, worst violation/(1+lambda) " + fmt("%.3g", worst)};
}

Outcome criterion2()
{
    double worst_sub = 0.0, worst_enum = 0.0, worst_stage1 = 0.0;
    int enum_cases = 0;
    bool ok = true;
    const double lambdas[] = {0.05, 0.1, 0.2, 0.15, 0.08};
    const double mus[] = {0.05, 0.1, 0.3};
    for (int i = 0; i < 25; ++i) {
        const std::size_t p = 3 + static_cast<std::size_t>(i % 3);
        const std::size_t n = 40 + 20 * static_cast<std::size_t>(i % 4);
        const std::size_t a = static_cast<std::size_t>(i) % p;
        const PrecisionModel model = chain_precision(p, 0.3);
        const StandardizedData data = standardize(mvn_sample(model, n, 2000 + i));
        const Penalty pen{lambdas[i % 5], mus[i % 3]};
        const DifferenceMatrix d = build_difference_matrix(model.local_graph);
        const NodeFit fit = fit_node(data, a, pen, d);
        FitOptions raw;
        raw.refine = false;
        const NodeFit stage1 = fit_node(data, a, pen, d, raw);

        const Reduced r = reduce(data, a, model.local_graph);
        Eigen::VectorXd t(static_cast<int>(p - 1));
        for (std::size_t b = 0, j = 0; b < p; ++b)
            if (b != a) t[static_cast<int>(j++)] = fit.theta[b];
        const double f_ours = reduced_objective(r, t, pen.lambda, pen.mu);
        const double f_sub = subgradient_oracle(r, pen.lambda, pen.mu, 1000000);
        worst_sub = std::max(worst_sub, std::abs(f_ours - f_sub));
        if (std::abs(f_ours - f_sub) > 1e-6) ok = false;
        worst_stage1 = std::max(worst_stage1, stage1.objective - f_ours);
        if (p == 3) {
            const double f_enum = enumeration_oracle(r, pen.lambda, pen.mu);
            worst_enum = std::max(worst_enum, std::abs(f_ours - f_enum));
            if (std::abs(f_ours - f_enum) > 1e-8) ok = false;
            ++enum_cases;
        }
    }
    return {ok, "max |f - f_subgradient| " + fmt("%.3g", worst_sub) + ", max |f - f_enumeration| " + fmt("%.3g", worst_enum) +
                    " over " + std::to_string(enum_cases) + " p=3 cases (unrefined reparametrized estimate: max excess " +
                    fmt("%.3g", worst_stage1) + ")"};
}

Outcome criterion3()
{
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t p = std::array<std::size_t, 3>{5, 10, 20}[i % 3];
        const std::size_t n = std::array<std::size_t, 3>{50, 100, 200}[(i / 3) % 3];
        const std::size_t a = static_cast<std::size_t>(i * 7) % p;
        const PrecisionModel model = instance_model(p, 0.2);
        const StandardizedData data = standardize(mvn_sample(model, n, 3000 + i));
        const double lambda = regparam_penalty(n, p, 0.05, sigma_hat(data, a), 1.0, 0.25).lambda * (i % 2 ? 0.25 : 1.0);
        const NodeFit fit = fit_node(data, a, {lambda, 0.0}, build_difference_matrix(model.local_graph));

        std::vector<std::size_t> rows(n), cols;
        for (std::size_t r = 0; r < n; ++r) rows[r] = r;
        for (std::size_t b = 0; b < p; ++b)
            if (b != a) cols.push_back(b);
        const LassoSolution plain = lasso_cd(select(data.matrix, rows, cols), data.matrix.column(a), lambda);
        for (std::size_t j = 0; j < cols.size(); ++j) worst = std::max(worst, std::abs(fit.theta[cols[j]] - plain.coefficients[j]));
        worst = std::max(worst, std::abs(fit.theta[a]));
    }
    return {worst <= 1e-10, "max elementwise difference " + fmt("%.3g", worst)};
}

double level_fraction(const PrecisionModel& model, std::size_t n, std::size_t R, std::uint64_t seed0)
{
    const auto labels = connectivity_components(model.p, model.true_edges);
    std::vector<char> hit(R, 0);
    parallel_for(R, default_thread_count(), [&](std::size_t r) {
        const StandardizedData data = standardize(mvn_sample(model, n, seed0 + r));
        const GraphFit g = fit_graph(data, model.local_graph, GraphConfig{});
        hit[r] = connects_distinct_components(labels, g.estimate.edges);
    });
    return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(R);
}

Outcome criterion4()
{
    const std::size_t R = 200;
    const double limit = 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / static_cast<double>(R));
    const PrecisionModel chain = chain_precision(20, 0.2);
    const auto labels = connectivity_components(chain.p, chain.true_edges);
    const std::size_t components = std::set<std::size_t>(labels.begin(), labels.end()).size();
    const double frac = level_fraction(chain, 500, R, 4000);

    // Two disconnected 10-node chains under a 20-node chain local graph: a non-vacuous variant.
    Matrix omega = Matrix::identity(20);
    for (std::size_t i = 0; i + 1 < 20; ++i)
        if (i != 9) omega(i, i + 1) = omega(i + 1, i) = 0.2;
    const PrecisionModel split = make_precision_model(omega, LocalGraph::chain(20));
    const double frac_split = level_fraction(split, 500, R, 4000);

    return {frac <= limit, "fraction " + fmt("%.3f", frac) + " (limit " + fmt("%.4f", limit) + ", truth has " +
                               std::to_string(components) + " component(s)); two-component variant: " + fmt("%.3f", frac_split)};
}

Outcome criterion5()
{
    SimulationSpec spec;
    spec.model = chain_precision(50, 0.2, default_distant_edges(50));
    spec.n_grid = {50, 100, 500};
    spec.replicates = 50;
    spec.base_seed = 5000;
    spec.threads = default_thread_count();
    MethodSpec nfl_m;
    MethodSpec mb_m;
    mb_m.name = "MB";
    mb_m.kind = MethodKind::mb;
    spec.methods = {nfl_m, mb_m};
    const BenchmarkReport rep = run_benchmark(spec);

    auto tp = [&](const std::string& method, std::size_t n) {
        for (const auto& r : rep.rows)
            if (r.method == method && r.n == n) return r.tp_mean;
        return -1.0;
    };
    std::string table;
    for (const auto& r : rep.rows)
        table += " " + r.method + "@" + std::to_string(r.n) + ": tp " + fmt("%.2f", r.tp_mean) + "(" + fmt("%.2f", r.tp_sd) +
                 ") fp " + fmt("%.2f", r.fp_mean) + "(" + fmt("%.2f", r.fp_sd) + ");";
    const double g50 = tp("NFL", 50) - tp("MB", 50), g100 = tp("NFL", 100) - tp("MB", 100);
    const bool monotone = tp("NFL", 50) <= tp("NFL", 100) && tp("NFL", 100) <= tp("NFL", 500);
    return {g50 >= 10.0 && g100 >= 20.0 && monotone,
            "|E|=" + std::to_string(rep.true_edge_count) + ", gap n=50 " + fmt("%.2f", g50) + " (need 10), gap n=100 " +
                fmt("%.2f", g100) + " (need 20), NFL tp non-decreasing: " + (monotone ? "yes" : "no") + ";" + table};
}

Outcome criterion6()
{
    const CounterRng rng(6);
    std::uint64_t c = 0;
    int draws = 0, rejected = 0;
    double worst_red = 0.0, worst_prod = 0.0;
    bool ordered = true;
    while (draws < 10000) {
        const double d1 = 2.0 * rng.uniform(c++), d2 = 2.0 * rng.uniform(c++);
        const double delta1 = rng.uniform(c++) * 0.999, delta2 = rng.uniform(c++);
        const double beta0 = 0.5 * rng.uniform(c++), eps = rng.uniform(c++);
        const double n = 1.0 + 999.0 * rng.uniform(c++), s2 = 0.1 + 9.9 * rng.uniform(c++);

        const hp u = hp(d1) / 2 * (1 - hp(delta1));
        const hp v = hp(d2) / 2 * (1 - hp(delta2)) * pow(hp(n), hp(beta0));
        const hp ne = pow(hp(n), hp(eps));
        const hp e_nfl = (u + v) * (u + v) * ne / hp(s2);
        if (e_nfl > 700) { // keep both bounds in the normal double range
            ++rejected;
            continue;
        }
        ++draws;
        const hp exact = exp(-(u * u * ne / hp(s2))) - exp(-e_nfl);
        const Type1Reduction r = type1_reduction(d1, d2, delta1, delta2, beta0, eps, n, s2);
        const double ex = exact.convert_to<double>();
        auto rel = [&](double got) { return ex == 0.0 ? std::abs(got) : std::abs(got - ex) / std::abs(ex); };
        worst_red = std::max(worst_red, rel(r.reduction));
        worst_prod = std::max(worst_prod, rel(r.product_form));
        if (r.nfl_bound > r.lasso_bound) ordered = false;
    }
    return {worst_red <= 1e-12 && worst_prod <= 1e-12 && ordered,
            "10000 draws (" + std::to_string(rejected) + " resampled for underflow): max rel err of gap " + fmt("%.3g", worst_red) +
                ", of bracketed product " + fmt("%.3g", worst_prod) + ", nfl <= lasso in all: " + (ordered ? "yes" : "no")};
}

Outcome criterion7()
{
    double worst = 0.0;
    const int points = 2000;
    for (int i = 0; i <= points; ++i) {
        const double q = std::pow(10.0, -12.0 + (std::log10(0.5) + 12.0) * i / points);
        const double z = normal_quantile_upper(q);
        const hp tail = erfc(hp(z) / sqrt(hp(2))) / 2;
        const double err = ((tail - hp(q)) / hp(q)).convert_to<double>();
        worst = std::max(worst, std::abs(err));
    }
    return {worst <= 1e-9, "max |Phi~(z(q)) - q|/q " + fmt("%.3g", worst) + " over " + std::to_string(points + 1) + " grid points"};
}

Outcome criterion8()
{
    const PrecisionModel model = chain_precision(5, 0.2);
    const std::size_t n = 100000;
    const Matrix x = mvn_sample(model, n, 8);
    const Matrix again = mvn_sample(model, n, 8);
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double mi = 0.0, mj = 0.0, s = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                mi += x(r, i);
                mj += x(r, j);
            }
            mi /= static_cast<double>(n);
            mj /= static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r) s += (x(r, i) - mi) * (x(r, j) - mj);
            worst = std::max(worst, std::abs(s / static_cast<double>(n - 1) - model.sigma(i, j)));
        }
    const bool identical = x == again;
    return {worst <= 0.02 && identical,
            "max |S - Sigma| " + fmt("%.4f", worst) + ", rerun bit-identical: " + (identical ? "yes" : "no")};
}

Outcome criterion9()
{
    // Integer evaluation of 224 (D+4)^2 (3D+14) / D^2 at D = 1.
    const long exact = 224L * 5 * 5 * 17;
    const double c1 = finalthm_constant(1.0, 1.0, 1.0);
    const double c2 = finalthm_constant(3.0, 1.0, 2.0);
    const bool ok = exact == 95200 && c1 == 95200.0 && c2 == 95200.0 * 3.0 / 4.0;
    const double at_boundary = l1_error_bound_large_n(1.0, 2.0 * 17.0 * 17.0, 1.0);
    return {ok, "constant " + fmt("%.1f", c1) + " s0/phi0^2 (integer oracle " + std::to_string(exact) + "), s0=3 phi0=2 gives " +
                    fmt("%.1f", c2) + "; large-n l1 bound at t/n=2(3+14)^2 is " + fmt("%.1f", at_boundary)};
}

} // namespace

int main()
{
    struct Entry
    {
        int id;
        std::function<Outcome()> run;
        double time_limit;
    };
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<Entry> entries = {{1, criterion1, 60.0}, {2, criterion2, inf},  {3, criterion3, inf},
                                        {4, criterion4, 300.0}, {5, criterion5, 900.0}, {6, criterion6, inf},
                                        {7, criterion7, inf},  {8, criterion8, inf},  {9, criterion9, inf}};
    int failed = 0;
    for (const auto& e : entries) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = e.run();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > e.time_limit) {
            o.pass = false;
            o.detail += "; runtime over " + fmt("%.0f", e.time_limit) + " s";
        }
        if (!o.pass) ++failed;
        std::printf("criterion %d: %s (%.2f s) %s\n", e.id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
