#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nfl/error.hpp>
#include <nfl/estimator.hpp>
#include <nfl/linalg.hpp>
#include <nfl/local_graph.hpp>
#include <nfl/parallel.hpp>
#include <nfl/random.hpp>
#include <nfl/theory.hpp>

namespace nfl {

/**
 * n x p draw with rows i.i.d. N(0, Sigma): X = Z L' with Sigma = L L'. Entry Z_ij is
 * draw i*p + j of the counter stream for `seed`, so a sample of size n is the first n
 * rows of any larger sample with the same seed.
 */
inline Matrix mvn_sample(const PrecisionModel& model, std::size_t n, std::uint64_t seed)
{
    if (n < 1) throw DomainError("sample size must be at least 1");
    const std::size_t p = model.p;
    const SpdFactor chol(model.sigma);
    const Matrix& l = chol.lower();
    const CounterRng rng(seed);
    Matrix x(n, p);
    Vector z(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) z[j] = rng.normal(static_cast<std::uint64_t>(i) * p + j);
        auto xi = x.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            auto lj = l.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k <= j; ++k) s += lj[k] * z[k];
            xi[j] = s;
        }
    }
    return x;
}

/// All pairs within {9, 19, 29} and within {14, 24, 34, 44}, restricted to nodes < p.
inline EdgeList default_distant_edges(std::size_t p)
{
    const std::vector<std::vector<std::size_t>> blocks = {{9, 19, 29}, {14, 24, 34, 44}};
    EdgeList e;
    for (const auto& block : blocks)
        for (std::size_t i = 0; i < block.size(); ++i)
            for (std::size_t j = i + 1; j < block.size(); ++j)
                if (block[j] < p) e.emplace_back(block[i], block[j]);
    std::sort(e.begin(), e.end());
    return e;
}

/// Unit diagonal, rho on the chain (i, i+1) and on every distant pair; the local graph is the chain.
inline PrecisionModel chain_precision(std::size_t p, double rho, const EdgeList& distant = {})
{
    if (p < 2) throw DomainError("chain model needs p >= 2");
    if (!std::isfinite(rho)) throw DomainError("rho must be finite");
    Matrix omega = Matrix::identity(p);
    for (std::size_t i = 0; i + 1 < p; ++i) omega(i, i + 1) = omega(i + 1, i) = rho;
    for (auto [u, v] : distant) {
        if (u >= p || v >= p) throw IndexOutOfRange("distant edge (" + std::to_string(u) + ", " + std::to_string(v) + ")");
        if (u == v) throw DomainError("distant edge is a self-loop");
        omega(u, v) = omega(v, u) = rho;
    }
    return make_precision_model(std::move(omega), LocalGraph::chain(p));
}

struct EdgeScore
{
    std::size_t fp = 0;
    std::size_t tp = 0;
};

inline EdgeScore score_edges(const GraphEstimate& est, const PrecisionModel& truth)
{
    if (est.p != truth.p) throw DimensionMismatch("estimate and model have different p");
    EdgeScore s;
    for (const Edge& e : est.edges) {
        if (std::binary_search(truth.true_edges.begin(), truth.true_edges.end(), e)) ++s.tp;
        else ++s.fp;
    }
    return s;
}

enum class MethodKind { nfl, mb };

struct MethodSpec
{
    std::string name = "NFL";
    MethodKind kind = MethodKind::nfl;
    double alpha = 0.05;
    double K = 1.0;
    double beta0 = 0.25;
    CombineRule rule = CombineRule::union_rule;
    double tau = 1e-6;
    FitOptions fit;
};

inline GraphConfig graph_config(const MethodSpec& m)
{
    GraphConfig cfg;
    cfg.alpha = m.alpha;
    cfg.K = m.K;
    cfg.beta0 = m.beta0;
    cfg.rule = m.rule;
    cfg.tau = m.tau;
    cfg.fit = m.fit;
    cfg.force_mu_zero = m.kind == MethodKind::mb;
    return cfg;
}

struct SimulationSpec
{
    PrecisionModel model;
    std::vector<std::size_t> n_grid;
    std::size_t replicates = 50;
    std::vector<MethodSpec> methods;
    std::uint64_t base_seed = 1;
    std::size_t threads = 1;
};

struct ReplicateResult
{
    bool ok = false;
    std::string error;
    EdgeScore score;
    bool converged = true;
    EdgeList edges;
};

struct BenchmarkRow
{
    std::string method;
    std::size_t n = 0;
    double fp_mean = 0.0;
    double fp_sd = 0.0;
    double tp_mean = 0.0;
    double tp_sd = 0.0;
    std::size_t true_edge_count = 0;
    std::size_t replicates = 0; ///< replicates that produced a fit
    std::size_t excluded = 0;
    std::size_t nonconverged = 0;
    bool sd_degenerate = false; ///< fewer than two replicates: sd reported as 0
    Matrix edge_frequency;      ///< p x p, fraction of replicates selecting (a, b)
};

struct BenchmarkReport
{
    std::vector<BenchmarkRow> rows; ///< n-major, then methods in spec order
    std::size_t true_edge_count = 0;
    std::vector<std::uint64_t> seeds;
    /// results[(grid index * methods + method) * R + r]
    std::vector<ReplicateResult> results;
};

inline void validate(const SimulationSpec& spec)
{
    if (spec.replicates < 1) throw DomainError("replicates must be at least 1");
    if (spec.n_grid.empty()) throw DomainError("sample-size grid is empty");
    for (std::size_t n : spec.n_grid)
        if (n < 2) throw DomainError("every sample size must be at least 2");
    if (spec.methods.empty()) throw DomainError("no methods to benchmark");
}

/**
 * Replicate r at every n uses seed base_seed + r, shared by all methods. Tasks (n, r)
 * run in parallel; each writes its own slot so the report does not depend on threads.
 * A replicate that throws is excluded and counted.
 */
inline BenchmarkReport run_benchmark(const SimulationSpec& spec)
{
    validate(spec);
    const std::size_t g = spec.n_grid.size(), m = spec.methods.size(), R = spec.replicates, p = spec.model.p;
    BenchmarkReport rep;
    rep.true_edge_count = spec.model.true_edges.size();
    for (std::size_t r = 0; r < R; ++r) rep.seeds.push_back(spec.base_seed + r);
    rep.results.resize(g * m * R);

    parallel_for(g * R, spec.threads, [&](std::size_t task) {
        const std::size_t gi = task / R, r = task % R;
        auto slot = [&](std::size_t mi) -> ReplicateResult& { return rep.results[(gi * m + mi) * R + r]; };
        std::optional<StandardizedData> data;
        try {
            data = standardize(mvn_sample(spec.model, spec.n_grid[gi], spec.base_seed + r));
        } catch (const Error& e) {
            for (std::size_t mi = 0; mi < m; ++mi) slot(mi).error = e.what();
            return;
        }
        for (std::size_t mi = 0; mi < m; ++mi) {
            ReplicateResult& out = slot(mi);
            try {
                const GraphFit fit = fit_graph(*data, spec.model.local_graph, graph_config(spec.methods[mi]));
                out.score = score_edges(fit.estimate, spec.model);
                out.converged = fit.converged();
                out.edges = fit.estimate.edges;
                out.ok = true;
            } catch (const Error& e) {
                out.error = e.what();
            }
        }
    });

    for (std::size_t gi = 0; gi < g; ++gi)
        for (std::size_t mi = 0; mi < m; ++mi) {
            BenchmarkRow row;
            row.method = spec.methods[mi].name;
            row.n = spec.n_grid[gi];
            row.true_edge_count = rep.true_edge_count;
            row.edge_frequency = Matrix(p, p);
            std::vector<double> fps, tps;
            for (std::size_t r = 0; r < R; ++r) {
                const ReplicateResult& res = rep.results[(gi * m + mi) * R + r];
                if (!res.ok) {
                    ++row.excluded;
                    continue;
                }
                fps.push_back(static_cast<double>(res.score.fp));
                tps.push_back(static_cast<double>(res.score.tp));
                if (!res.converged) ++row.nonconverged;
                for (auto [a, b] : res.edges) {
                    row.edge_frequency(a, b) += 1.0;
                    row.edge_frequency(b, a) += 1.0;
                }
            }
            row.replicates = fps.size();
            auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
                mean = sd = 0.0;
                if (v.empty()) return;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                if (v.size() < 2) return;
                double ss = 0.0;
                for (double x : v) ss += (x - mean) * (x - mean);
                sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
            };
            mean_sd(fps, row.fp_mean, row.fp_sd);
            mean_sd(tps, row.tp_mean, row.tp_sd);
            row.sd_degenerate = row.replicates < 2;
            if (row.replicates > 0)
                for (double& v : row.edge_frequency.values()) v /= static_cast<double>(row.replicates);
            rep.rows.push_back(std::move(row));
        }
    return rep;
}

} // namespace nfl
