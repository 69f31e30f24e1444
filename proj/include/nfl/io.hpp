#pragma once
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <nfl/error.hpp>
#include <nfl/estimator.hpp>
#include <nfl/linalg.hpp>
#include <nfl/local_graph.hpp>
#include <nfl/sim.hpp>
#include <nfl/theory.hpp>

namespace nfl::io {

using json = nlohmann::json;

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ParseError("write failed for '" + path + "'");
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
        if (i == line.size() || line[i] == sep) {
            parts.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    return parts;
}

} // namespace detail

struct CsvTable
{
    std::vector<std::string> header; ///< empty when the file has none
    Matrix data;
};

/// Comma-separated numeric table, rows are observations. A first row whose first token is not numeric is a header.
inline CsvTable parse_csv(const std::string& text)
{
    CsvTable t;
    std::vector<double> values;
    std::size_t cols = 0, rows = 0, line_no = 0;
    std::istringstream in(text);
    std::string raw;
    bool first = true;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = detail::trim(raw);
        if (line.empty()) continue;
        const auto parts = detail::split(line, ',');
        double v;
        if (first && !detail::parse_double(parts[0], v)) {
            for (auto part : parts) t.header.emplace_back(detail::trim(part));
            cols = parts.size();
            first = false;
            continue;
        }
        first = false;
        if (cols == 0) cols = parts.size();
        if (parts.size() != cols) {
            throw ParseError("line " + std::to_string(line_no) + " has " + std::to_string(parts.size()) +
                             " fields, expected " + std::to_string(cols));
        }
        for (auto part : parts) {
            if (!detail::parse_double(part, v))
                throw ParseError("line " + std::to_string(line_no) + ": '" + std::string(detail::trim(part)) + "' is not a number");
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw ParseError("no data rows");
    t.data = Matrix(rows, cols, std::move(values));
    return t;
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

inline std::string format_csv(const Matrix& x, bool header = true)
{
    std::string out;
    if (header) {
        for (std::size_t j = 0; j < x.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j);
        out += '\n';
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (j) out += ',';
            out += format_double(x(i, j));
        }
        out += '\n';
    }
    return out;
}

/// One edge per line as two whitespace-separated zero-based indices; '#' starts a comment line.
inline LocalGraph parse_local_graph(const std::string& text, std::size_t p)
{
    EdgeList edges;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        std::istringstream fields{std::string(line)};
        std::string a, b, extra;
        fields >> a >> b;
        if (a.empty() || b.empty() || (fields >> extra)) throw ParseError("line " + std::to_string(line_no) + ": expected two indices");
        auto to_index = [&](const std::string& s) {
            std::size_t v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw ParseError("line " + std::to_string(line_no) + ": '" + s + "' is not a non-negative integer");
            return v;
        };
        edges.emplace_back(to_index(a), to_index(b));
    }
    return {p, std::move(edges)};
}

inline LocalGraph read_local_graph(const std::string& path, std::size_t p) { return parse_local_graph(read_file(path), p); }

inline std::string format_local_graph(const LocalGraph& g)
{
    std::string out = "# " + std::to_string(g.node_count()) + " nodes\n";
    for (auto [u, v] : g.edges()) out += std::to_string(u) + ' ' + std::to_string(v) + '\n';
    return out;
}

inline json parse_json(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
    }
}

inline json edges_to_json(const EdgeList& edges)
{
    json a = json::array();
    for (auto [u, v] : edges) a.push_back({u, v});
    return a;
}

inline EdgeList edges_from_json(const json& j, const std::string& what)
{
    if (!j.is_array()) throw ParseError(what + " must be an array of [i, j] pairs");
    EdgeList e;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() || !pair[1].is_number_unsigned())
            throw ParseError(what + " entries must be [i, j] with non-negative integers");
        e.emplace_back(pair[0].get<std::size_t>(), pair[1].get<std::size_t>());
    }
    return e;
}

inline json matrix_to_json(const Matrix& m)
{
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& what)
{
    if (!j.is_array() || j.empty()) throw ParseError(what + " must be a non-empty array of rows");
    const std::size_t rows = j.size();
    if (!j[0].is_array()) throw ParseError(what + " rows must be arrays");
    const std::size_t cols = j[0].size();
    std::vector<double> values;
    for (const auto& row : j) {
        if (!row.is_array()) throw ParseError(what + " rows must be arrays");
        if (row.size() != cols) throw DimensionMismatch(what + " is ragged");
        for (const auto& v : row) {
            if (!v.is_number()) throw ParseError(what + " entries must be numbers");
            values.push_back(v.get<double>());
        }
    }
    return {rows, cols, std::move(values)};
}

template <class T>
T get_field(const json& j, const char* key, const std::string& what)
{
    if (!j.is_object() || !j.contains(key)) throw ParseError(what + " lacks \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError(what + " field \"" + key + "\" has the wrong type");
    }
}

// Model JSON: { "p", "omega": [[...]], "local_edges": [[i, j]], "true_edges": [[i, j]] (optional) }.

inline json model_to_json(const PrecisionModel& m)
{
    return {{"p", m.p},
            {"omega", matrix_to_json(m.omega)},
            {"local_edges", edges_to_json(m.local_graph.edges())},
            {"true_edges", edges_to_json(m.true_edges)}};
}

inline PrecisionModel model_from_json(const json& j)
{
    if (!j.is_object()) throw ParseError("model must be a JSON object");
    const auto p = get_field<std::size_t>(j, "p", "model");
    Matrix omega = matrix_from_json(j.contains("omega") ? j["omega"] : json(), "omega");
    if (omega.rows() != p || omega.cols() != p) throw DimensionMismatch("omega is not p x p");
    const EdgeList local = j.contains("local_edges") ? edges_from_json(j["local_edges"], "local_edges") : EdgeList{};
    std::optional<EdgeList> truth;
    if (j.contains("true_edges")) truth = edges_from_json(j["true_edges"], "true_edges");
    return make_precision_model(std::move(omega), LocalGraph(p, local), truth);
}

// Fit JSON.

inline json fit_to_json(const GraphFit& fit, double tau)
{
    const std::size_t p = fit.estimate.p;
    json penalties = json::array(), theta = json::array(), ne = json::array(), diag = json::array();
    for (std::size_t a = 0; a < p; ++a) {
        const NodeFit& f = fit.fits[a];
        penalties.push_back({{"a", a}, {"lambda", f.lambda}, {"mu", f.mu}, {"sigma_hat", fit.plan.sigma_hat[a]}});
        theta.push_back(f.theta);
        ne.push_back(fit.estimate.neighborhoods[a]);
        diag.push_back({{"a", a},
                        {"iterations", f.iterations},
                        {"refine_iterations", f.refine_iterations},
                        {"polished", f.polished},
                        {"objective", f.objective},
                        {"reparam_objective", f.reparam_objective},
                        {"kkt_residual", f.kkt_residual},
                        {"converged", f.converged}});
    }
    return {{"p", p},
            {"rule", to_string(fit.estimate.rule)},
            {"tau", tau},
            {"converged", fit.converged()},
            {"penalties", penalties},
            {"theta", theta},
            {"neighborhoods", ne},
            {"edges", edges_to_json(fit.estimate.edges)},
            {"diagnostics", diag}};
}

/// The parts of a fit JSON needed to re-check it.
struct StoredFit
{
    std::size_t p = 0;
    std::vector<Vector> theta;
    std::vector<Penalty> penalties;
    EdgeList edges;
};

inline StoredFit fit_from_json(const json& j)
{
    StoredFit s;
    s.p = get_field<std::size_t>(j, "p", "fit");
    const json& theta = j.contains("theta") ? j["theta"] : json();
    const json& pens = j.contains("penalties") ? j["penalties"] : json();
    if (!theta.is_array() || !pens.is_array()) throw ParseError("fit needs \"theta\" and \"penalties\" arrays");
    if (theta.size() != s.p || pens.size() != s.p) throw DimensionMismatch("fit arrays do not have p entries");
    for (std::size_t a = 0; a < s.p; ++a) {
        Vector t;
        try {
            t = theta[a].get<Vector>();
        } catch (const json::exception&) {
            throw ParseError("theta row " + std::to_string(a) + " is not a list of numbers");
        }
        if (t.size() != s.p) throw DimensionMismatch("theta row " + std::to_string(a) + " does not have p entries");
        s.theta.push_back(std::move(t));
        if (get_field<std::size_t>(pens[a], "a", "penalty") != a) throw ParseError("penalties must be ordered by node");
        s.penalties.push_back({get_field<double>(pens[a], "lambda", "penalty"), get_field<double>(pens[a], "mu", "penalty")});
    }
    if (j.contains("edges")) s.edges = edges_from_json(j["edges"], "edges");
    return s;
}

// Benchmark config JSON:
// { "model": {"chain": {"p", "rho", "distant": "default" | "none" | [[i, j]]}} | <model JSON>,
//   "n": [...], "replicates", "base_seed",
//   "methods": [{"name", "kind": "nfl" | "mb", "alpha", "K", "beta0", "rule", "tau", "refine"}] }

inline EdgeList distant_from_json(const json& j, std::size_t p)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "default") return default_distant_edges(p);
        if (s == "none") return {};
        throw ParseError("distant must be \"default\", \"none\" or a list of pairs");
    }
    return edges_from_json(j, "distant");
}

inline PrecisionModel benchmark_model_from_json(const json& j)
{
    if (j.is_object() && j.contains("chain")) {
        const json& c = j["chain"];
        const auto p = get_field<std::size_t>(c, "p", "chain model");
        const auto rho = get_field<double>(c, "rho", "chain model");
        const EdgeList distant = c.contains("distant") ? distant_from_json(c["distant"], p) : default_distant_edges(p);
        return chain_precision(p, rho, distant);
    }
    return model_from_json(j);
}

inline MethodSpec method_from_json(const json& j)
{
    if (!j.is_object()) throw ParseError("method must be an object");
    MethodSpec m;
    const std::string kind = j.value("kind", std::string("nfl"));
    if (kind == "nfl") m.kind = MethodKind::nfl;
    else if (kind == "mb") m.kind = MethodKind::mb;
    else throw ParseError("method kind must be \"nfl\" or \"mb\"");
    try {
        m.name = j.value("name", m.kind == MethodKind::nfl ? std::string("NFL") : std::string("MB"));
        m.alpha = j.value("alpha", m.alpha);
        m.K = j.value("K", m.K);
        m.beta0 = j.value("beta0", m.beta0);
        m.tau = j.value("tau", m.tau);
        m.rule = parse_combine_rule(j.value("rule", std::string("union")));
        m.fit.refine = j.value("refine", true);
    } catch (const json::exception& e) {
        throw ParseError(std::string("method field has the wrong type: ") + e.what());
    }
    return m;
}

inline SimulationSpec benchmark_from_json(const json& j)
{
    if (!j.is_object()) throw ParseError("benchmark config must be a JSON object");
    if (!j.contains("model")) throw ParseError("benchmark config lacks \"model\"");
    SimulationSpec spec;
    spec.model = benchmark_model_from_json(j["model"]);
    spec.n_grid = get_field<std::vector<std::size_t>>(j, "n", "benchmark config");
    spec.replicates = j.contains("replicates") ? get_field<std::size_t>(j, "replicates", "benchmark config") : 50;
    spec.base_seed = j.contains("base_seed") ? get_field<std::uint64_t>(j, "base_seed", "benchmark config") : 1;
    if (j.contains("methods")) {
        if (!j["methods"].is_array()) throw ParseError("methods must be an array");
        for (const auto& mj : j["methods"]) spec.methods.push_back(method_from_json(mj));
    } else {
        spec.methods.push_back(method_from_json(json{{"kind", "nfl"}}));
        spec.methods.push_back(method_from_json(json{{"kind", "mb"}}));
    }
    validate(spec);
    return spec;
}

inline std::string format_report_csv(const BenchmarkReport& rep)
{
    std::string out = "method,n,fp_mean,fp_sd,tp_mean,tp_sd,true_edge_count,replicates,excluded\n";
    for (const auto& r : rep.rows) {
        out += r.method + ',' + std::to_string(r.n) + ',' + format_double(r.fp_mean) + ',' + format_double(r.fp_sd) + ',' +
               format_double(r.tp_mean) + ',' + format_double(r.tp_sd) + ',' + std::to_string(r.true_edge_count) + ',' +
               std::to_string(r.replicates) + ',' + std::to_string(r.excluded) + '\n';
    }
    return out;
}

/// Long-format adjacency frequencies (pairs selected at least once).
inline std::string format_frequency_csv(const BenchmarkReport& rep)
{
    std::string out = "method,n,a,b,frequency\n";
    for (const auto& r : rep.rows)
        for (std::size_t a = 0; a < r.edge_frequency.rows(); ++a)
            for (std::size_t b = a + 1; b < r.edge_frequency.cols(); ++b)
                if (r.edge_frequency(a, b) > 0.0)
                    out += r.method + ',' + std::to_string(r.n) + ',' + std::to_string(a) + ',' + std::to_string(b) + ',' +
                           format_double(r.edge_frequency(a, b)) + '\n';
    return out;
}

inline json assumption_to_json(const AssumptionReport& r)
{
    return {{"delta1", r.delta1},
            {"delta2_ratio", r.delta2_ratio},
            {"min_partial_correlation", r.min_partial_correlation},
            {"max_neighborhood_size", r.max_neighborhood_size},
            {"max_local_neighbors", r.max_local_neighbors},
            {"true_edge_count", r.true_edge_count}};
}

} // namespace nfl::io
