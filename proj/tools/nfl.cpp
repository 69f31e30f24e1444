// nfl: fit, simulate, benchmark, check and kkt subcommands.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <nfl/io.hpp>
#include <nfl/nfl.hpp>

namespace {

enum Exit : int { ok = 0, verification_failed = 1, parse_failed = 2, dimension_failed = 3, not_converged = 4, model_invalid = 5 };

using nfl::io::json;

struct FitArgs
{
    std::string data, graph, out, rule = "union", penalty_rule = "regparam";
    std::optional<double> alpha, lambda, mu;
    double K = 1.0, beta0 = 0.25, tau = 1e-6, t = 1.0;
    bool no_refine = false, mb = false;
    std::size_t threads = nfl::default_thread_count();
};

struct SimulateArgs
{
    std::string model = "chain", distant = "default", out_data, out_model;
    std::size_t p = 50, n = 100;
    double rho = 0.2;
    std::uint64_t seed = 1;
};

struct BenchmarkArgs
{
    std::string config, out, out_frequencies;
    std::size_t threads = nfl::default_thread_count();
};

struct CheckArgs
{
    std::string model, graph, out;
};

struct KktArgs
{
    std::string fit, data, graph;
    double tol = 1e-6;
};

void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") std::cout << text;
    else nfl::io::write_file(path, text);
}

nfl::LocalGraph load_graph(const std::string& path, std::size_t p)
{
    if (path.empty()) return {p, {}};
    return nfl::io::read_local_graph(path, p);
}

int run_fit(const FitArgs& a)
{
    const auto table = nfl::io::read_csv(a.data);
    const auto data = nfl::standardize(table.data);
    const auto local = load_graph(a.graph, data.p);

    nfl::GraphConfig cfg;
    cfg.K = a.K;
    cfg.beta0 = a.beta0;
    cfg.t = a.t;
    cfg.tau = a.tau;
    cfg.rule = nfl::parse_combine_rule(a.rule);
    cfg.force_mu_zero = a.mb;
    cfg.fit.refine = !a.no_refine;
    cfg.threads = a.threads;
    if (a.lambda) {
        cfg.penalty_rule = nfl::PenaltyRule::explicit_values;
        cfg.explicit_penalty = {*a.lambda, *a.mu};
    } else if (a.penalty_rule == "highprob") {
        cfg.penalty_rule = nfl::PenaltyRule::high_probability;
    } else if (a.penalty_rule == "regparam") {
        cfg.alpha = a.alpha.value_or(0.05);
    } else {
        throw nfl::ParseError("--penalty-rule must be regparam or highprob");
    }

    const nfl::GraphFit fit = nfl::fit_graph(data, local, cfg);
    emit(a.out, nfl::io::fit_to_json(fit, a.tau).dump(2) + "\n");
    std::cerr << "fit: p=" << data.p << " n=" << data.n << " edges=" << fit.estimate.edges.size()
              << (fit.converged() ? "" : " (some node fits did not converge)") << "\n";
    return fit.converged() ? ok : not_converged;
}

int run_simulate(const SimulateArgs& a)
{
    nfl::PrecisionModel model;
    if (a.model == "chain") {
        nfl::EdgeList distant;
        if (a.distant == "default") distant = nfl::default_distant_edges(a.p);
        else if (a.distant != "none") distant = nfl::io::read_local_graph(a.distant, a.p).edges();
        model = nfl::chain_precision(a.p, a.rho, distant);
    } else {
        model = nfl::io::model_from_json(nfl::io::parse_json(nfl::io::read_file(a.model)));
    }
    const nfl::Matrix x = nfl::mvn_sample(model, a.n, a.seed);
    emit(a.out_data, nfl::io::format_csv(x));
    if (!a.out_model.empty()) nfl::io::write_file(a.out_model, nfl::io::model_to_json(model).dump(2) + "\n");
    return ok;
}

int run_benchmark(const BenchmarkArgs& a)
{
    nfl::SimulationSpec spec = nfl::io::benchmark_from_json(nfl::io::parse_json(nfl::io::read_file(a.config)));
    spec.threads = a.threads;
    const nfl::BenchmarkReport rep = nfl::run_benchmark(spec);
    emit(a.out, nfl::io::format_report_csv(rep));
    if (!a.out_frequencies.empty()) nfl::io::write_file(a.out_frequencies, nfl::io::format_frequency_csv(rep));
    for (const auto& row : rep.rows) {
        if (row.sd_degenerate) std::cerr << row.method << " n=" << row.n << ": fewer than 2 replicates, sd set to 0\n";
        if (row.excluded) std::cerr << row.method << " n=" << row.n << ": " << row.excluded << " replicates excluded\n";
        if (row.nonconverged) std::cerr << row.method << " n=" << row.n << ": " << row.nonconverged << " replicates with non-converged node fits\n";
    }
    return ok;
}

int run_check(const CheckArgs& a)
{
    nfl::PrecisionModel model = nfl::io::model_from_json(nfl::io::parse_json(nfl::io::read_file(a.model)));
    if (!a.graph.empty()) model.local_graph = nfl::io::read_local_graph(a.graph, model.p);
    const nfl::DifferenceMatrix d = nfl::build_difference_matrix(model.local_graph);
    const nfl::AssumptionReport rep = nfl::assumption_report(model, d);

    // Population analogue of the restricted eigenvalue: min_a lambda_min(Sigma_{-a,-a}).
    double phi0_sq = std::numeric_limits<double>::infinity();
    for (std::size_t node = 0; node < model.p && model.p > 1; ++node) {
        std::vector<std::size_t> idx;
        for (std::size_t b = 0; b < model.p; ++b)
            if (b != node) idx.push_back(b);
        phi0_sq = std::min(phi0_sq, nfl::min_eigen_sym(nfl::select(model.sigma, idx, idx)));
    }
    json out = {{"p", model.p},
                {"assumptions", nfl::io::assumption_to_json(rep)},
                {"local_constancy",
                 {{"l1", nfl::local_constancy_norm(d, model.omega, nfl::NormKind::l1)},
                  {"l2", nfl::local_constancy_norm(d, model.omega, nfl::NormKind::l2)},
                  {"linf", nfl::local_constancy_norm(d, model.omega, nfl::NormKind::linf)}}},
                {"oracle_inputs",
                 {{"s0", rep.max_neighborhood_size},
                  {"B", nfl::local_bound_B(d)},
                  {"phi0_sq_population", model.p > 1 ? json(phi0_sq) : json(nullptr)}}}};
    emit(a.out, out.dump(2) + "\n");
    return ok;
}

int run_kkt(const KktArgs& a)
{
    const nfl::io::StoredFit fit = nfl::io::fit_from_json(nfl::io::parse_json(nfl::io::read_file(a.fit)));
    const auto data = nfl::standardize(nfl::io::read_csv(a.data).data);
    if (fit.p != data.p) throw nfl::DimensionMismatch("fit has p=" + std::to_string(fit.p) + ", data " + std::to_string(data.p));
    const auto local = load_graph(a.graph, data.p);
    const nfl::DifferenceMatrix d = nfl::build_difference_matrix(local);

    double worst = 0.0;
    std::size_t worst_node = 0;
    for (std::size_t node = 0; node < data.p; ++node) {
        const auto& pen = fit.penalties[node];
        if (fit.theta[node][node] != 0.0) {
            std::cout << "node " << node << ": theta_a is not zero\n";
            return verification_failed;
        }
        const auto rep = nfl::nfl_kkt_check(fit.theta[node], data, node, pen.lambda, pen.mu, nfl::exclude_node(d, node), a.tol);
        std::cout << "node " << node << ": violation " << rep.max_violation << "\n";
        if (rep.max_violation >= worst) {
            worst = rep.max_violation;
            worst_node = node;
        }
    }
    const bool pass = worst <= a.tol;
    std::cout << "max violation " << worst << " at node " << worst_node << ", tol " << a.tol << ": " << (pass ? "PASS" : "FAIL")
              << "\n";
    return pass ? ok : verification_failed;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Neighbourhood-fused lasso graph estimation"};
    app.require_subcommand(1);

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "estimate the edge set from a data CSV");
    fit->add_option("--data", fa.data, "observations, one row each")->required();
    fit->add_option("--local-graph", fa.graph, "edge list of the local graph; node count = data width");
    auto* alpha = fit->add_option("--alpha", fa.alpha, "level of the data-driven penalty (default 0.05)");
    auto* lam = fit->add_option("--lambda", fa.lambda, "explicit lambda");
    auto* mu = fit->add_option("--mu", fa.mu, "explicit mu");
    auto* rule = fit->add_option("--penalty-rule", fa.penalty_rule, "regparam or highprob")->check(CLI::IsMember({"regparam", "highprob"}));
    fit->add_option("--t", fa.t, "confidence parameter of the highprob rule");
    fit->add_option("--K", fa.K, "mu = lambda / (K n^beta0)");
    fit->add_option("--beta0", fa.beta0);
    fit->add_option("--rule", fa.rule, "union or intersection")->check(CLI::IsMember({"union", "intersection"}));
    fit->add_option("--tau", fa.tau, "support threshold");
    fit->add_flag("--mb", fa.mb, "force mu = 0 (plain node-wise lasso)");
    fit->add_flag("--no-refine", fa.no_refine, "return the reparametrized estimate without refinement");
    fit->add_option("--threads", fa.threads);
    fit->add_option("--out", fa.out, "fit JSON (default stdout)");
    lam->needs(mu);
    mu->needs(lam);
    lam->excludes(alpha);
    lam->excludes(rule);
    alpha->excludes(rule);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "draw data from a Gaussian model");
    sim->add_option("--model", sa.model, "'chain' or a model JSON file");
    sim->add_option("--p", sa.p);
    sim->add_option("--rho", sa.rho);
    sim->add_option("--distant", sa.distant, "'default', 'none' or an edge-list file");
    sim->add_option("--n", sa.n);
    sim->add_option("--seed", sa.seed);
    sim->add_option("--out-data", sa.out_data, "data CSV (default stdout)");
    sim->add_option("--out-model", sa.out_model, "model JSON");

    BenchmarkArgs ba;
    auto* bench = app.add_subcommand("benchmark", "replicated FP/TP study");
    bench->add_option("--config", ba.config)->required();
    bench->add_option("--threads", ba.threads);
    bench->add_option("--out", ba.out, "report CSV (default stdout)");
    bench->add_option("--out-frequencies", ba.out_frequencies, "edge selection frequencies CSV");

    CheckArgs ca;
    auto* check = app.add_subcommand("check", "assumption diagnostics of a model");
    check->add_option("--model", ca.model)->required();
    check->add_option("--local-graph", ca.graph, "overrides the model's local_edges");
    check->add_option("--out", ca.out, "report JSON (default stdout)");

    KktArgs ka;
    auto* kkt = app.add_subcommand("kkt", "verify the optimality certificate of a fit");
    kkt->add_option("--fit", ka.fit)->required();
    kkt->add_option("--data", ka.data)->required();
    kkt->add_option("--local-graph", ka.graph);
    kkt->add_option("--tol", ka.tol);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : parse_failed;
    }

    try {
        if (fit->parsed()) return run_fit(fa);
        if (sim->parsed()) return run_simulate(sa);
        if (bench->parsed()) return run_benchmark(ba);
        if (check->parsed()) return run_check(ca);
        if (kkt->parsed()) return run_kkt(ka);
    } catch (const nfl::ParseError& e) {
        std::cerr << e.what() << "\n";
        return parse_failed;
    } catch (const nfl::DimensionMismatch& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return dimension_failed;
    } catch (const nfl::IndexOutOfRange& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return dimension_failed;
    } catch (const nfl::NonConvergence& e) {
        std::cerr << "not converged: " << e.what() << "\n";
        return not_converged;
    } catch (const nfl::NotPositiveDefinite& e) {
        std::cerr << "invalid model: " << e.what() << "\n";
        return model_invalid;
    } catch (const nfl::ConstraintViolation& e) {
        std::cerr << "invalid model: " << e.what() << "\n";
        return model_invalid;
    } catch (const nfl::Error& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return parse_failed;
    }
    return ok;
}
