#pragma once

// Config-driven runs of every module: schema per kind, JSON report with one entry
// per assertion (value, threshold, margin), CSV traces, and suites of configs.

#include "conelab/campanato.hpp"
#include "conelab/config.hpp"
#include "conelab/cone_spectral.hpp"
#include "conelab/heat.hpp"
#include "conelab/weak_laplacian.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace conelab {

using json = nlohmann::json;

inline constexpr const char* kReportSchema = "conelab.report/1";
inline constexpr const char* kSuiteSchema = "conelab.suite/1";

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"spectrum", "cone-energy", "solve",           "campanato", "heat-smooth",
                                            "kernel-check", "cutoff", "check-very-weak", "weyl-demo"};
    return k;
}

// ---------------------------------------------------------------------------
// Reports

struct Assertion {
    std::string name;
    double value = 0.0;
    std::string op;           ///< "<=", ">=" or "=="
    double threshold = 0.0;
    double margin = 0.0;      ///< positive when the assertion holds with room to spare
    bool pass = false;
};

struct CsvTrace {
    std::string name;
    std::vector<std::string> columns;  ///< "name [unit]"
    std::vector<std::vector<double>> rows;
};

struct RunOutcome {
    std::string kind;
    std::string name;
    std::map<std::string, std::string> config;
    json results = json::object();
    std::vector<Assertion> assertions;
    std::vector<CsvTrace> traces;
    std::optional<json> error;
    int exit_code = 0;
    double seconds = 0.0;

    void le(const std::string& n, double v, double bound) {
        assertions.push_back({n, v, "<=", bound, bound - v, v <= bound});
    }
    void ge(const std::string& n, double v, double bound) {
        assertions.push_back({n, v, ">=", bound, v - bound, v >= bound});
    }
    void holds(const std::string& n, bool ok) {
        assertions.push_back({n, ok ? 1.0 : 0.0, "==", 1.0, ok ? 0.0 : -1.0, ok});
    }
    bool passed() const {
        return !error && std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
    }
};

namespace detail {

/// JSON has no infinities; non-finite numbers are written as strings.
inline json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

inline json nums(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

inline std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace detail

/// Everything except "timing" is a function of the config and seed.
inline json report_json(const RunOutcome& o) {
    json j;
    j["schema"] = kReportSchema;
    j["tool_version"] = CONELAB_VERSION;
    j["kind"] = o.kind;
    j["name"] = o.name;
    j["config"] = o.config;
    j["results"] = o.results;
    json a = json::array();
    for (const Assertion& s : o.assertions)
        a.push_back({{"name", s.name}, {"value", detail::num(s.value)}, {"op", s.op},
                     {"threshold", detail::num(s.threshold)}, {"margin", detail::num(s.margin)}, {"pass", s.pass}});
    j["assertions"] = a;
    if (o.error) j["error"] = *o.error;
    j["verdict"] = o.error ? "error" : (o.passed() ? "pass" : "fail");
    j["exit_code"] = o.exit_code;
    json traces = json::array();
    for (const CsvTrace& t : o.traces) traces.push_back(o.name + "_" + t.name + ".csv");
    j["traces"] = traces;
    j["timing"] = {{"wall_seconds", o.seconds}, {"finished_utc", detail::utc_now()}};
    return j;
}

inline void write_csv(const std::filesystem::path& p, const CsvTrace& t) {
    std::ofstream os(p);
    if (!os) throw ConfigError("output.dir", "cannot write '" + p.string() + "'");
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
    os << '\n';
    char buf[40];
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", row[c]);
            os << (c ? "," : "") << buf;
        }
        os << '\n';
    }
}

/// Writes <dir>/<name>.json and <dir>/<name>_<trace>.csv.
inline std::filesystem::path write_outputs(const RunOutcome& o, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path report = dir / (o.name + ".json");
    std::ofstream os(report);
    if (!os) throw ConfigError("output.dir", "cannot write '" + report.string() + "'");
    os << report_json(o).dump(2) << '\n';
    for (const CsvTrace& t : o.traces) write_csv(dir / (o.name + "_" + t.name + ".csv"), t);
    return report;
}

// ---------------------------------------------------------------------------
// Schemas

namespace detail {

inline FieldSpec f(FieldType t, std::optional<std::string> d, std::string help) { return {t, std::move(d), std::move(help)}; }

inline void common_keys(Schema& s) {
    s["kind"] = f(FieldType::string, std::nullopt, "experiment kind");
    s["seed"] = f(FieldType::integer, "0", "seed for sampled families");
    s["workers"] = f(FieldType::integer, "1", "worker threads");
    s["output.dir"] = f(FieldType::path, ".", "report directory");
    s["output.name"] = f(FieldType::string, std::nullopt, "report file stem (default: kind)");
}

inline void cone_keys(Schema& s) {
    s["geometry.cone"] = f(FieldType::string, std::nullopt, "cone:circle:theta=<v> or cone:sphere:s=<v>");
    s["geometry.theta"] = f(FieldType::real, std::nullopt, "circle cone angle");
    s["geometry.s"] = f(FieldType::real, std::nullopt, "sphere cross-section radius");
}

inline void certify_keys(Schema& s) {
    s["certify.tol"] = f(FieldType::real, "1e-6", "relative score tolerance");
    s["certify.family_size"] = f(FieldType::integer, "64", "bumps in the family");
}

inline void input_keys(Schema& s) {
    s["input.function"] = f(FieldType::string, std::nullopt, "named input function");
    s["input.csv"] = f(FieldType::path, std::nullopt, "node-value CSV on a uniform grid");
    s["input.noise"] = f(FieldType::real, "0", "amplitude of sin(7x)sin(5y) added to the input");
}

inline void time_keys(Schema& s, const std::string& sec) {
    s[sec + ".t_max"] = f(FieldType::real, "0.1", "largest time");
    s[sec + ".t_min"] = f(FieldType::real, "0.001", "smallest time");
    s[sec + ".times"] = f(FieldType::integer, "12", "geometric time samples");
    s["grid.h"] = f(FieldType::real, "0", "grid spacing, 0 for sqrt(t_min)/2");
}

}  // namespace detail

inline Schema experiment_schema(const std::string& kind) {
    using detail::f;
    Schema s;
    detail::common_keys(s);
    if (kind == "spectrum") {
        detail::cone_keys(s);
        s["spectrum.modes"] = f(FieldType::integer, "16", "retained modes");
        s["spectrum.tol"] = f(FieldType::real, "1e-12", "exponent relation tolerance");
    } else if (kind == "cone-energy") {
        detail::cone_keys(s);
        s["spectrum.modes"] = f(FieldType::integer, "16", "retained modes");
        s["harmonic.coefficients"] = f(FieldType::reals, std::nullopt, "c_0, c_1, ...");
        s["harmonic.csv"] = f(FieldType::path, std::nullopt, "one coefficient per row");
        s["harmonic.random"] = f(FieldType::integer, std::nullopt, "number of random harmonics");
        s["energy.radii"] = f(FieldType::reals, "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", "increasing radii");
        s["energy.tol"] = f(FieldType::real, "1e-10", "allowed relative decrease");
        s["energy.quad_tol"] = f(FieldType::real, "1e-4", "polar quadrature relative tolerance");
        s["energy.fem_h"] = f(FieldType::real, "0", "FEM cross-check mesh size, 0 to skip");
        s["energy.fem_radii"] = f(FieldType::reals, "0.3,0.6", "FEM cross-check radii");
        s["energy.fem_tol"] = f(FieldType::real, "0.02", "FEM relative tolerance");
    } else if (kind == "solve") {
        s["coefficient.A"] = f(FieldType::string, "identity", "coefficient identifier");
        s["geometry.domain"] = f(FieldType::string, "disc", "disc, ball or box");
        s["geometry.dim"] = f(FieldType::integer, "2", "dimension");
        s["geometry.radius"] = f(FieldType::real, "1", "radius or half-width");
        s["mesh.h"] = f(FieldType::real, "0.03125", "mesh size");
        s["boundary.data"] = f(FieldType::string, "harmonic", "linear, harmonic, default or one");
        s["solver.tol"] = f(FieldType::real, "1e-10", "relative residual");
        s["energy.radii"] = f(FieldType::reals, "0.25,0.5,0.75", "energy sweep radii");
        s["check.l2_tol"] = f(FieldType::real, "1e-3", "L2 error tolerance for closed-form data");
    } else if (kind == "campanato") {
        s["coefficient.A"] = f(FieldType::string, "perturbed:convex_graph:1,1,1,power:0.2:0.5", "A");
        s["coefficient.Abar"] = f(FieldType::string, "convex_graph:1,1,1", "conical model");
        s["campanato.frozen"] = f(FieldType::boolean, "false", "use A = Abar");
        s["campanato.rho"] = f(FieldType::real, std::nullopt, "contraction ratio, default 1/C1");
        s["campanato.l0"] = f(FieldType::integer, std::nullopt, "first level");
        s["campanato.levels"] = f(FieldType::integer, "6", "levels l0 .. l0 + levels - 1");
        s["campanato.calibrated_c2"] = f(FieldType::real, std::to_string(kCalibratedC2), "frozen calibration");
        s["campanato.expect"] = f(FieldType::string, "bounded", "bounded or divergent");
        s["campanato.measure_tol"] = f(FieldType::real, "0.03", "metric ball measure ratio tolerance");
        s["mesh.cells"] = f(FieldType::integer, "96", "cells across the outer ball");
        s["mesh.outer_radius"] = f(FieldType::real, "0.52", "outer ball radius");
    } else if (kind == "heat-smooth") {
        detail::input_keys(s);
        detail::certify_keys(s);
        detail::time_keys(s, "smoothing");
        s["heat.mode"] = f(FieldType::string, "pipeline", "pipeline or monotonicity");
        s["geometry.dim"] = f(FieldType::integer, "2", "dimension");
        s["smoothing.R"] = f(FieldType::real, "4", "cutoff radius");
        s["smoothing.expect"] = f(FieldType::string, "lipschitz", "lipschitz or blowup");
        s["smoothing.variation_tol"] = f(FieldType::real, "0.1", "allowed relative gradient variation");
        s["smoothing.blowup_slope"] = f(FieldType::real, "-0.25", "slopes below this count as blow-up");
        s["smoothing.rate_floor"] = f(FieldType::real, "0.5", "required L1 convergence rate");
        s["smoothing.expected_slope"] = f(FieldType::real, "-0.5", "blow-up slope for the negative control");
        s["smoothing.slope_tol"] = f(FieldType::real, "0.1", "tolerance on the blow-up slope");
        s["monotonicity.half_width"] = f(FieldType::real, "2", "box half-width");
        s["monotonicity.tol"] = f(FieldType::real, "1e-6", "tolerance on increments and mass");
        s["monotonicity.expect"] = f(FieldType::string, "nondecreasing", "nondecreasing, flat, nonincreasing or none");
    } else if (kind == "kernel-check") {
        s["kernel.dims"] = f(FieldType::reals, "1,2,3", "dimensions");
        s["kernel.times"] = f(FieldType::reals, "0.001,0.01,0.1", "times");
        s["kernel.samples"] = f(FieldType::integer, "1000", "sample pairs per dimension");
        s["kernel.mass_tol"] = f(FieldType::real, "1e-8", "mass tolerance");
    } else if (kind == "cutoff") {
        s["cutoff.dim"] = f(FieldType::integer, "2", "dimension");
        s["cutoff.radii"] = f(FieldType::reals, "1,2,4", "radii R");
        s["cutoff.policy"] = f(FieldType::string, "fixed", "fixed or scaled");
        s["cutoff.r0"] = f(FieldType::real, "1", "reference radius");
        s["cutoff.h"] = f(FieldType::real, "0", "grid spacing, 0 for sqrt(t)/8");
        s["cutoff.spread_tol"] = f(FieldType::real, "0.15", "allowed relative spread of C");
    } else if (kind == "check-very-weak") {
        detail::input_keys(s);
        detail::certify_keys(s);
        detail::cone_keys(s);
        s["geometry.dim"] = f(FieldType::integer, "2", "dimension of flat space");
        s["region.center"] = f(FieldType::reals, std::nullopt, "region center (default origin)");
        s["region.radius"] = f(FieldType::real, "1", "region radius");
        s["certify.sign"] = f(FieldType::string, "harmonic", "harmonic, sub or super");
        s["certify.expect"] = f(FieldType::boolean, "true", "expected verdict");
    } else if (kind == "weyl-demo") {
        detail::input_keys(s);
        detail::certify_keys(s);
        detail::cone_keys(s);
        detail::time_keys(s, "weyl");
        s["geometry.dim"] = f(FieldType::integer, "2", "dimension of flat space");
        s["weyl.R"] = f(FieldType::real, "4", "cutoff radius");
        s["weyl.center"] = f(FieldType::reals, std::nullopt, "center (default origin)");
        s["weyl.expect"] = f(FieldType::string, "recover", "recover or refuse");
        s["weyl.recovery_tol"] = f(FieldType::real, "1e-6", "L-infinity recovery tolerance on B_{R/8}");
        s["weyl.variation_tol"] = f(FieldType::real, "0.1", "allowed relative gradient variation");
    } else if (kind == "suite") {
        s["suite.members"] = f(FieldType::string, "", "comma-separated config paths");
    } else {
        throw ConfigError("kind", "unknown experiment kind '" + kind + "'");
    }
    return s;
}

/// Checks the kind against the subcommand and the keys against the schema.
inline void prepare_config(Config& cfg, const std::string& kind) {
    if (cfg.has("kind") && cfg.str("kind") != kind)
        throw ConfigError("kind", "config is for '" + cfg.str("kind") + "', not '" + kind + "'");
    cfg.validate(experiment_schema(kind));
    if (cfg.at_least("workers", 1) > 256) throw ConfigError("workers", "at most 256 workers");
    if (cfg.integer("seed") < 0) throw ConfigError("seed", "must be nonnegative");
}

// ---------------------------------------------------------------------------
// Inputs

namespace detail {

inline std::shared_ptr<const CrossSectionSpectrum> config_cone(const Config& c, int modes, bool required) {
    const int given = c.opt_str("geometry.cone").has_value() + c.opt_str("geometry.theta").has_value() +
                      c.opt_str("geometry.s").has_value();
    if (given > 1) throw ConfigError("geometry.cone", "give only one of geometry.cone, geometry.theta, geometry.s");
    try {
        if (c.opt_str("geometry.cone"))
            return std::make_shared<const CrossSectionSpectrum>(parse_cone(c.str("geometry.cone"), modes));
        if (c.opt_str("geometry.theta"))
            return std::make_shared<const CrossSectionSpectrum>(circle_spectrum(c.real("geometry.theta"), modes));
        if (c.opt_str("geometry.s"))
            return std::make_shared<const CrossSectionSpectrum>(sphere_spectrum(c.real("geometry.s"), modes));
    } catch (const InvalidArgument& e) {
        throw ConfigError(c.opt_str("geometry.cone") ? "geometry.cone" : (c.opt_str("geometry.theta") ? "geometry.theta" : "geometry.s"),
                          e.what());
    }
    if (required) throw ConfigError("geometry.cone", "a cone is required (geometry.cone, geometry.theta or geometry.s)");
    return nullptr;
}

inline CoefficientField config_coefficient(const Config& c, const std::string& key, int dim) {
    try {
        return parse_coefficient(c.str(key), dim);
    } catch (const InvalidArgument& e) {
        throw ConfigError(key, e.what());
    }
}

inline std::vector<double> config_times(const Config& c, const std::string& sec) {
    const double hi = c.positive(sec + ".t_max");
    const double lo = c.positive(sec + ".t_min");
    if (!(lo < hi)) throw ConfigError(sec + ".t_min", "must be below " + sec + ".t_max");
    return geometric_times(hi, lo, static_cast<int>(c.at_least(sec + ".times", 2)));
}

inline Point config_point(const Config& c, const std::string& key, int dim) {
    const auto s = c.opt_str(key);
    if (!s) return Point::Zero(dim);
    const std::vector<double> v = c.reals(key);
    if (static_cast<int>(v.size()) != dim) throw ConfigError(key, "needs " + std::to_string(dim) + " coordinates");
    Point p(dim);
    for (int d = 0; d < dim; ++d) p[d] = v[d];
    return p;
}

}  // namespace detail

/// Named test inputs; `truth` is set for harmonic ones.
struct NamedInput {
    SampledFunction u;
    std::function<double(const Point&)> truth;
};

inline NamedInput named_input(const std::string& name, int dim) {
    using F = std::function<double(const Point&)>;
    auto exact = [&](F f, bool harmonic) {
        return NamedInput{SampledFunction::exact(f, name), harmonic ? f : F()};
    };
    if (name == "linear") return exact([](const Point& x) { return x[0]; }, true);
    if (name == "affine") return exact([](const Point& x) { return 3.0 + x[0]; }, true);
    if (name == "constant") return exact([](const Point&) { return 1.0; }, true);
    if (name == "harmonic") {
        if (dim < 2) throw InvalidArgument("input 'harmonic' needs dimension >= 2");
        return exact([](const Point& x) { return x[0] * x[0] - x[1] * x[1]; }, true);
    }
    if (name == "square") return exact([](const Point& x) { return x.squaredNorm(); }, false);
    if (name == "neg_square") return exact([](const Point& x) { return -x.squaredNorm(); }, false);
    if (name == "norm") return exact([](const Point& x) { return x.norm(); }, false);
    if (name == "jump") return exact([](const Point& x) { return x[0] > 0.0 ? 1.0 : 0.0; }, false);
    if (name == "bump") return exact([](const Point& x) { return std::max(0.0, 0.25 - x.squaredNorm()); }, false);
    throw InvalidArgument("unknown input function '" + name +
                          "' (linear, affine, constant, harmonic, square, neg_square, norm, jump, bump, cone_mode:<k>)");
}

/// cone_mode:<k> is r^{alpha_k} phi_k in cone coordinates.
inline std::optional<std::function<double(const Point&)>> cone_mode_input(const std::string& name,
                                                                          std::shared_ptr<const CrossSectionSpectrum> s) {
    if (name.rfind("cone_mode:", 0) != 0) return std::nullopt;
    const int k = std::stoi(name.substr(10));
    if (k < 0 || static_cast<std::size_t>(k) >= s->size()) throw InvalidArgument("cone_mode index out of range");
    std::vector<double> c(k + 1, 0.0);
    c[k] = 1.0;
    auto h = std::make_shared<const ConeHarmonic>(s, c);
    const int m = s->intrinsic_dim();
    return [h, m](const Point& p) { return h->value(p[0], p.tail(m)); };
}

/// Node-value CSV (coordinates then value, optional header) on a full uniform grid.
inline GridFunction read_grid_csv(const std::filesystem::path& p, int dim) {
    std::ifstream in(p);
    if (!in) throw InvalidArgument("cannot read '" + p.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        std::vector<double> row;
        try {
            row = detail::parse_list(detail::trim(line), p.string());
        } catch (const InvalidArgument&) {
            if (first) {
                first = false;
                continue;
            }
            throw;
        }
        first = false;
        if (static_cast<int>(row.size()) != dim + 1)
            throw InvalidArgument(p.string() + ": expected " + std::to_string(dim + 1) + " columns");
        rows.push_back(row);
    }
    if (rows.empty()) throw InvalidArgument(p.string() + ": no data");
    std::array<std::vector<double>, 3> axes;
    for (int d = 0; d < dim; ++d) {
        std::set<double> u;
        for (const auto& r : rows) u.insert(r[d]);
        axes[d].assign(u.begin(), u.end());
    }
    const double h = axes[0].size() > 1 ? axes[0][1] - axes[0][0] : 0.0;
    if (!(h > 0.0)) throw InvalidArgument(p.string() + ": need at least two nodes per axis");
    Grid g;
    g.dim = dim;
    g.h = h;
    for (int d = 0; d < 3; ++d) g.n[d] = d < dim ? static_cast<int>(axes[d].size()) : 1;
    for (int d = 0; d < dim; ++d) {
        g.origin[d] = axes[d].front();
        for (std::size_t k = 1; k < axes[d].size(); ++k)
            if (std::abs(axes[d][k] - axes[d][k - 1] - h) > 1e-9 * std::max(h, 1e-300))
                throw InvalidArgument(p.string() + ": nodes are not on a uniform grid");
    }
    if (rows.size() != g.size()) throw InvalidArgument(p.string() + ": grid is incomplete");
    std::vector<double> vals(g.size(), 0.0);
    for (const auto& r : rows) {
        int ijk[3] = {0, 0, 0};
        for (int d = 0; d < dim; ++d) ijk[d] = static_cast<int>(std::lround((r[d] - g.origin[d]) / h));
        vals[g.index(ijk[0], ijk[1], ijk[2])] = r[dim];
    }
    return GridFunction(g, std::move(vals));
}

namespace detail {

/// Flat input from input.function or input.csv, plus optional noise.
inline NamedInput config_flat_input(const Config& c, int dim) {
    const bool fn = c.opt_str("input.function").has_value();
    const bool csv = c.opt_str("input.csv").has_value();
    if (fn == csv) throw ConfigError("input.function", "give exactly one of input.function and input.csv");
    NamedInput in;
    try {
        if (fn) in = named_input(c.str("input.function"), dim);
        else in = {SampledFunction::grid(read_grid_csv(c.path("input.csv"), dim), "csv"), nullptr};
    } catch (const InvalidArgument& e) {
        throw ConfigError(fn ? "input.function" : "input.csv", e.what());
    }
    const double a = c.real("input.noise");
    if (a != 0.0) {
        in.u = in.u + SampledFunction::exact([a](const Point& x) { return a * std::sin(7 * x[0]) * std::sin(5 * x[x.size() > 1 ? 1 : 0]); },
                                             "noise");
        in.truth = nullptr;
    }
    return in;
}

inline int config_dim(const Config& c) {
    const long long d = c.at_least("geometry.dim", 1);
    if (d > 3) throw ConfigError("geometry.dim", "dimensions 1 to 3 are supported");
    return static_cast<int>(d);
}

inline void add_trace(RunOutcome& o, const std::string& name, std::vector<std::string> cols,
                      std::vector<std::vector<double>> rows) {
    o.traces.push_back({name, std::move(cols), std::move(rows)});
}

inline json certificate_json(const Certificate& c) {
    std::vector<double> center(c.worst.center.data(), c.worst.center.data() + c.worst.center.size());
    return {{"requested", to_string(c.requested)},
            {"verdict", c.verdict},
            {"harmonic", c.harmonic},
            {"sub", c.sub},
            {"super", c.super},
            {"tol", c.tol},
            {"family_size", c.family_size},
            {"max_score", num(c.max_score)},
            {"min_score", num(c.min_score)},
            {"worst", {{"center", nums(center)}, {"radius", c.worst.radius}, {"pairing", num(c.worst.pairing)},
                       {"score", num(c.worst.score)}}}};
}

inline void pipeline_trace(RunOutcome& o, const PipelineReport& p, int dim) {
    std::vector<std::vector<double>> rows;
    for (const auto& e : p.entries) rows.push_back({e.t, e.sup_grad, e.l1_distance});
    add_trace(o, "trace", {"t [time]", "sup_grad [1/length]", "l1_distance [length^" + std::to_string(dim) + "]"},
              std::move(rows));
    o.results["pipeline"] = {{"grad_slope", num(p.grad_slope)},
                             {"grad_variation", num(p.grad_variation)},
                             {"l1_rate", num(p.l1_rate)},
                             {"lipschitz_constant", num(p.lipschitz_constant)},
                             {"certified", p.certified},
                             {"lipschitz", p.lipschitz},
                             {"stable", p.stable},
                             {"converges", p.converges}};
}

// ---------------------------------------------------------------------------
// Runners

inline void run_spectrum(const Config& c, RunOutcome& o) {
    const auto s = config_cone(c, static_cast<int>(c.at_least("spectrum.modes", 1)), true);
    const double tol = c.real("spectrum.tol");
    double residual = 0.0;
    double alpha_min = std::numeric_limits<double>::infinity();
    json modes = json::array();
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s->size(); ++i) {
        const double lam = s->mode(i).lambda;
        const double a = s->alpha(i);
        residual = std::max(residual, std::abs(a * (s->N() + a - 2.0) - lam));
        if (lam > 0.0) alpha_min = std::min(alpha_min, a);
        rows.push_back({static_cast<double>(i), lam, a, static_cast<double>(s->mode(i).degree)});
    }
    const double lambda1 = s->size() > 1 ? s->mode(1).lambda : 0.0;
    o.results["cone"] = s->describe();
    o.results["N"] = s->N();
    o.results["cross_section_measure"] = s->total_measure();
    o.results["lambda_1"] = lambda1;
    o.results["rcd_first_eigenvalue_condition"] = lambda1 >= s->N() - 1.0 - 1e-12;
    o.le("exponent_relation_residual", residual, tol);
    o.le("gram_residual", s->gram_residual(64), 1e-10);
    if (lambda1 >= s->N() - 1.0 - 1e-12 && s->size() > 1) o.ge("min_nonconstant_alpha", alpha_min, 1.0 - 1e-12);
    add_trace(o, "spectrum", {"k [1]", "lambda [1]", "alpha [1]", "degree [1]"}, std::move(rows));
}

inline void run_cone_energy(const Config& c, RunOutcome& o, std::uint64_t seed) {
    const int modes = static_cast<int>(c.at_least("spectrum.modes", 1));
    const auto s = config_cone(c, modes, true);
    std::vector<std::vector<double>> coeffs;
    const int given = c.opt_str("harmonic.coefficients").has_value() + c.opt_str("harmonic.csv").has_value() +
                      c.opt_str("harmonic.random").has_value();
    if (given != 1)
        throw ConfigError("harmonic.coefficients", "give exactly one of harmonic.coefficients, harmonic.csv, harmonic.random");
    if (c.opt_str("harmonic.coefficients")) {
        coeffs.push_back(c.reals("harmonic.coefficients"));
    } else if (c.opt_str("harmonic.csv")) {
        std::ifstream in(c.path("harmonic.csv"));
        if (!in) throw ConfigError("harmonic.csv", "cannot read '" + c.path("harmonic.csv").string() + "'");
        std::vector<double> v;
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            try {
                v.push_back(parse_double(split(line, ',').back(), "harmonic.csv"));
            } catch (const InvalidArgument&) {
                if (!v.empty()) throw ConfigError("harmonic.csv", "non-numeric row '" + line + "'");
            }
        }
        coeffs.push_back(v);
    } else {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> z;
        const long long count = c.at_least("harmonic.random", 1);
        for (long long k = 0; k < count; ++k) {
            std::vector<double> v(s->size());
            for (double& x : v) x = z(rng);
            coeffs.push_back(v);
        }
    }
    for (const auto& v : coeffs)
        if (v.empty() || v.size() > s->size())
            throw ConfigError("harmonic.coefficients", "needs 1 to " + std::to_string(s->size()) + " coefficients");
    std::vector<double> radii = c.reals("energy.radii");
    for (std::size_t k = 0; k < radii.size(); ++k)
        if (!(radii[k] > 0.0) || (k && !(radii[k] > radii[k - 1])))
            throw ConfigError("energy.radii", "radii must be positive and increasing");
    const double tol = c.real("energy.tol");
    double worst_drop = 0.0, quad_err = 0.0;
    bool monotone = true;
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
        const ConeHarmonic h(s, coeffs[j]);
        const MonotonicityReport m = check_monotonicity(h, radii, tol);
        monotone = monotone && m.monotone;
        worst_drop = std::max(worst_drop, m.worst_drop);
        // Direct quadrature is costly on sphere cross-sections: first harmonic, outer radius.
        if (j == 0 && m.averages.back() > 0.0)
            quad_err = std::abs(energy_average_quadrature(h, radii.back()) / m.averages.back() - 1.0);
        for (std::size_t k = 0; k < radii.size(); ++k) rows.push_back({static_cast<double>(j), radii[k], m.averages[k]});
    }
    o.results["cone"] = s->describe();
    o.results["harmonics"] = coeffs.size();
    o.results["monotone"] = monotone;
    o.le("worst_relative_decrease", worst_drop, tol);
    o.le("quadrature_cross_check", quad_err, c.positive("energy.quad_tol"));
    const double fem_h = c.real("energy.fem_h");
    if (fem_h > 0.0) {
        if (s->kind() != CrossSectionSpectrum::Kind::circle)
            throw ConfigError("energy.fem_h", "the FEM cross-check uses circle cones");
        const double theta = s->parameter();
        const double k = theta / (2.0 * std::numbers::pi);
        const ConeHarmonic h(s, coeffs.front());
        auto mesh = std::make_shared<const Mesh>(disc_mesh(1.0, static_cast<int>(std::lround(1.0 / fem_h))));
        auto exact = [&](const Point& x) {
            double psi = std::atan2(x[1], x[0]);
            if (psi < 0) psi += 2.0 * std::numbers::pi;
            return h.value(x.norm(), point({k * psi}));
        };
        const DiscreteField u = solve_dirichlet(cone2d_coefficient(theta), mesh, exact);
        const MetricField g = cone2d_metric(theta);
        double err = 0.0;
        json fem = json::array();
        for (double r : c.reals("energy.fem_radii")) {
            const double v = gradient_energy_average(*mesh, u.values, g, r, euclidean_distance(*mesh, Point::Zero(2))).value;
            const double e = energy_average(h, r);
            err = std::max(err, std::abs(v / e - 1.0));
            fem.push_back({{"r", r}, {"fem", v}, {"spectral", e}});
        }
        o.results["fem_cross_check"] = fem;
        o.le("fem_relative_error", err, c.real("energy.fem_tol"));
    }
    add_trace(o, "energy", {"harmonic [1]", "r [length]", "average [1/length^2]"},
              std::move(rows));
}

inline void run_solve(const Config& c, RunOutcome& o) {
    const int dim = config_dim(c);
    const CoefficientField A = config_coefficient(c, "coefficient.A", dim);
    const double R = c.positive("geometry.radius");
    const double h = c.positive("mesh.h");
    const std::string domain = c.one_of("geometry.domain", {"disc", "ball", "box"});
    std::shared_ptr<const Mesh> mesh;
    if (domain == "disc") {
        if (dim != 2) throw ConfigError("geometry.domain", "disc meshes are two-dimensional");
        mesh = std::make_shared<const Mesh>(disc_mesh(R, std::max(1, static_cast<int>(std::lround(R / h)))));
    } else if (domain == "ball") {
        mesh = cached_ball_grid(dim, R, std::max(2, static_cast<int>(std::lround(2 * R / h))));
    } else {
        mesh = std::make_shared<const Mesh>(box_mesh(dim, -R, R, std::max(1, static_cast<int>(std::lround(2 * R / h)))));
    }
    const std::string data = c.one_of("boundary.data", {"linear", "harmonic", "default", "one"});
    std::function<double(const Point&)> g;
    if (data == "linear") g = [](const Point& x) { return x[0]; };
    if (data == "harmonic") {
        if (dim < 2) throw ConfigError("boundary.data", "'harmonic' needs dimension >= 2");
        g = [](const Point& x) { return x[0] * x[0] - x[1] * x[1]; };
    }
    if (data == "default") g = default_boundary_data;
    if (data == "one") g = [](const Point&) { return 1.0; };
    SolverOptions so;
    so.rtol = c.positive("solver.tol");
    const DiscreteField u = solve_dirichlet(A, mesh, g, so);
    o.results["mesh"] = {{"kind", mesh->kind}, {"nodes", mesh->num_nodes()}, {"cells", mesh->num_cells()}, {"h", mesh->h}};
    o.results["solver"] = {{"iterations", u.stats.iterations}, {"residual", u.stats.residual}};
    o.le("solver_relative_residual", u.stats.residual, so.rtol);
    const bool identity = c.str("coefficient.A") == "identity";
    if (identity) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, out = 0.0;
        for (std::size_t i = 0; i < mesh->num_nodes(); ++i)
            if (mesh->boundary[i]) lo = std::min(lo, u.values[i]), hi = std::max(hi, u.values[i]);
        for (double v : u.values) out = std::max({out, lo - v, v - hi});
        o.le("maximum_principle_excess", out, 1e-9);
        if (data != "default") {
            const double e = l2_error(*mesh, u.values, g);
            o.results["l2_error"] = e;
            o.le("l2_error", e, c.real("check.l2_tol"));
        }
    }
    std::vector<std::vector<double>> sweep;
    for (double r : c.reals("energy.radii")) sweep.push_back({r, gradient_energy_average(*mesh, u.values, r).value});
    add_trace(o, "energy", {"r [length]", "average [1/length^2]"}, std::move(sweep));
    std::vector<std::vector<double>> field;
    for (std::size_t i = 0; i < mesh->num_nodes(); ++i) {
        std::vector<double> row(mesh->coords.begin() + i * dim, mesh->coords.begin() + (i + 1) * dim);
        row.push_back(u.values[i]);
        field.push_back(std::move(row));
    }
    std::vector<std::string> cols;
    for (int d = 0; d < dim; ++d) cols.push_back(std::string(1, "xyz"[d]) + " [length]");
    cols.push_back("u [1]");
    add_trace(o, "field", std::move(cols), std::move(field));
}

inline void run_campanato(const Config& c, RunOutcome& o) {
    const CoefficientField Abar = config_coefficient(c, "coefficient.Abar", 3);
    const bool frozen = c.boolean("campanato.frozen");
    const CoefficientField A = frozen ? Abar : config_coefficient(c, "coefficient.A", 3);
    IterationOptions opt;
    if (auto r = c.opt_real("campanato.rho")) {
        if (!(*r > 0.0 && *r < 1.0)) throw ConfigError("campanato.rho", "must lie in (0, 1)");
        opt.rho = *r;
    }
    if (c.opt_str("campanato.l0")) opt.l0 = static_cast<int>(c.at_least("campanato.l0", 1));
    opt.mesh.cells = static_cast<int>(c.at_least("mesh.cells", 8));
    opt.mesh.outer_radius = c.positive("mesh.outer_radius");
    const int levels = static_cast<int>(c.at_least("campanato.levels", 1));
    const std::string expect = c.one_of("campanato.expect", {"bounded", "divergent"});
    const double calibrated = c.positive("campanato.calibrated_c2");
    opt.levels = levels;
    const IterationReport rep = run_iteration(A, Abar, opt);
    o.results["coefficient"] = rep.coefficient;
    o.results["frozen"] = rep.frozen;
    o.results["rho"] = rep.rho;
    o.results["c1"] = rep.c1;
    o.results["l0"] = rep.l0;
    o.results["l_max"] = rep.l_max;
    o.results["h"] = rep.h;
    o.results["outer_nodes"] = rep.outer_nodes;
    o.results["truncated"] = rep.truncated;
    o.results["truncation_reason"] = rep.truncation_reason;
    o.results["c2_max"] = num(rep.c2_max);
    o.results["c3"] = num(rep.c3);
    o.results["accumulated_product"] = num(rep.accumulated_product);
    o.results["dini"] = {{"divergent", rep.dini.divergent}, {"value", num(rep.dini.value)}};
    o.results["budget"] = c2_budget(rep.ellipticity_Abar, calibrated);
    std::vector<std::vector<double>> rows;
    for (const LevelRecord& r : rep.levels) {
        const LevelBound b = verify_level_bound(rep, r.level, calibrated);
        o.le("level_" + std::to_string(r.level) + "_c2", b.measured_c2, b.budget);
        if (r.omega == 0.0)
            o.le("level_" + std::to_string(r.level) + "_frozen_comparison_energy", r.comparison_energy,
                 kZeroEnergyRel * r.solution_energy);
        rows.push_back({static_cast<double>(r.level), r.radius, r.comparison_energy, r.solution_energy, r.omega,
                        r.volume, r.average, r.ratio, r.measured_c2, b.budget, r.cells_across});
    }
    add_trace(o, "levels",
              {"level [1]", "radius [length]", "comparison_energy [length]", "solution_energy [length]", "omega [1]",
               "volume [length^3]", "average [1/length^2]", "ratio [1]", "measured_c2 [1]", "budget [1]",
               "cells_across [1]"},
              std::move(rows));
    o.le("measure_ratio_error", measure_ratio_error(rep), c.real("campanato.measure_tol"));
    if (expect == "bounded") {
        const DecayBound d = decay_bound(rep);
        o.results["decay"] = {{"limsup_ratio", d.limsup_ratio}, {"bound", num(d.bound)}, {"exponent", num(d.exponent)}};
        o.le("limsup_energy_ratio", d.limsup_ratio, d.bound);
    } else {
        o.holds("dini_integral_divergent", rep.dini.divergent);
        const auto s = accumulated_log_products(A, Abar, rep.rho, rep.l0, rep.c3, {12, 24, 48});
        o.results["accumulated_log_products"] = {{"L", {12, 24, 48}}, {"value", nums(s)}};
        // A summable series would add far less over levels 24..48 than over 12..24.
        o.ge("late_over_early_increment", (s[2] - s[1]) / (s[1] - s[0]), 0.8);
    }
}

inline void run_heat_smooth(const Config& c, RunOutcome& o, const CertifyOptions& co) {
    const int dim = config_dim(c);
    const std::string mode = c.one_of("heat.mode", {"pipeline", "monotonicity"});
    const NamedInput in = config_flat_input(c, dim);
    const std::vector<double> times = config_times(c, "smoothing");
    const double t_min = times.back(), t_max = times.front();
    const double h = c.real("grid.h") > 0.0 ? c.real("grid.h") : std::sqrt(t_min) / 2.0;
    if (mode == "monotonicity") {
        const double tol = c.positive("monotonicity.tol");
        const std::string expect = c.one_of("monotonicity.expect", {"nondecreasing", "flat", "nonincreasing", "none"});
        const Grid g = centered_grid(Point::Zero(dim), c.positive("monotonicity.half_width"), h);
        const MonotonicityCheck m = subharmonic_monotonicity_check(GridFunction::sample(g, in.u.eval), times, tol);
        std::vector<std::vector<double>> rows;
        double fit = 0.0;
        for (std::size_t k = 0; k < m.t.size(); ++k) {
            rows.push_back({m.t[k], m.mean_increment[k]});
            fit = std::max(fit, std::abs(m.mean_increment[k] - 2.0 * dim * m.t[k]));
        }
        add_trace(o, "increments", {"t [time]", "mean_increment [1]"}, std::move(rows));
        o.results["window_nodes"] = m.window_nodes;
        o.results["laplacian_min"] = num(m.laplacian_min);
        o.results["subharmonic_input"] = m.subharmonic_input;
        o.results["worst_drop"] = m.worst_drop;
        o.results["worst_rise"] = m.worst_rise;
        if (expect == "nondecreasing") o.le("worst_drop", m.worst_drop, tol);
        if (expect == "nonincreasing") o.le("worst_rise", m.worst_rise, tol);
        if (expect == "flat") o.le("worst_change", std::max(m.worst_drop, m.worst_rise), tol);
        if (c.opt_str("input.function") && c.str("input.function") == "square")
            o.le("second_moment_increment_error", fit, tol);
        if (m.mass_applicable) o.le("mass_error", m.mass_error, tol);
        return;
    }
    const double R = c.positive("smoothing.R");
    const std::string expect = c.one_of("smoothing.expect", {"lipschitz", "blowup"});
    const Point x0 = Point::Zero(dim);
    const Certificate cert = certify_very_weak(in.u, Geometry::flat(dim), {x0, R / 2.0}, Sign::harmonic, co);
    o.results["certificate"] = certificate_json(cert);
    const Grid g = centered_grid(x0, R + kTrustSigmas * std::sqrt(t_max), h);
    const GridFunction v = GridFunction::sample(g, [&](const Point& x) {
        const double w = weyl_cutoff(x, x0, R);
        return w > 0.0 ? w * in.u(x) : 0.0;
    });
    PipelineOptions po;
    po.variation_tol = c.positive("smoothing.variation_tol");
    po.blowup_slope = c.real("smoothing.blowup_slope");
    po.rate_floor = c.real("smoothing.rate_floor");
    const PipelineReport p = smoothing_pipeline(v, x0, R, times, &cert, po);
    pipeline_trace(o, p, dim);
    o.results["grid_nodes"] = g.size();
    if (expect == "lipschitz") {
        o.holds("certified_harmonic", cert.verdict);
        o.le("grad_variation", p.grad_variation, po.variation_tol);
        o.ge("grad_slope", p.grad_slope, po.blowup_slope);
        o.ge("l1_rate", p.l1_rate, po.rate_floor - po.rate_slack);
    } else {
        const double target = c.real("smoothing.expected_slope");
        o.le("grad_slope_deviation", std::abs(p.grad_slope - target), c.positive("smoothing.slope_tol"));
    }
}

inline void run_kernel_check(const Config& c, RunOutcome& o, std::uint64_t seed) {
    const std::vector<double> times = c.reals("kernel.times");
    const auto samples = static_cast<std::size_t>(c.at_least("kernel.samples", 1));
    const double mass_tol = c.positive("kernel.mass_tol");
    std::vector<std::vector<double>> rows;
    json per = json::array();
    for (double nd : c.reals("kernel.dims")) {
        const int n = static_cast<int>(nd);
        if (n != nd || n < 1 || n > 6) throw ConfigError("kernel.dims", "dimensions must be integers in 1..6");
        const KernelBoundsReport r = kernel_bounds_check(n, times, samples, seed + 1, mass_tol);
        per.push_back({{"n", n},
                       {"c1_value", r.c1_value},
                       {"c1_gradient", r.c1_gradient},
                       {"c1_time", r.c1_time},
                       {"violations", r.violations},
                       {"max_mass_error", r.max_mass_error}});
        o.le("n" + std::to_string(n) + "_envelope_violations", static_cast<double>(r.violations), 0.0);
        o.le("n" + std::to_string(n) + "_mass_error", r.max_mass_error, mass_tol);
        for (double t : times) rows.push_back({static_cast<double>(n), t, std::abs(kernel_mass(n, t) - 1.0)});
    }
    o.results["dimensions"] = per;
    add_trace(o, "mass", {"n [1]", "t [time]", "mass_error [1]"}, std::move(rows));
}

inline void run_cutoff(const Config& c, RunOutcome& o) {
    const int n = static_cast<int>(c.at_least("cutoff.dim", 1));
    if (n > 3) throw ConfigError("cutoff.dim", "dimensions 1 to 3 are supported");
    CutoffPolicy pol;
    pol.kind = c.one_of("cutoff.policy", {"fixed", "scaled"}) == "fixed" ? CutoffPolicy::Kind::fixed : CutoffPolicy::Kind::scaled;
    pol.r0 = c.positive("cutoff.r0");
    const double h = c.real("cutoff.h");
    std::vector<double> constants;
    std::vector<std::vector<double>> rows;
    for (double R : c.reals("cutoff.radii")) {
        if (!(R > 0.0)) throw ConfigError("cutoff.radii", "radii must be positive");
        if (pol.kind == CutoffPolicy::Kind::fixed && R < pol.r0)
            throw ConfigError("cutoff.radii", "R below cutoff.r0 under the fixed policy");
        const CutoffResult r = build_cutoff(Point::Zero(n), R, pol, h);
        const std::string tag = "R" + std::to_string(R).substr(0, std::to_string(R).find('.') + 3);
        o.holds(tag + "_range", r.range_ok);
        o.holds(tag + "_one_on_inner_ball", r.inner_ok);
        o.holds(tag + "_support", r.support_ok);
        o.le(tag + "_bakry_ledoux_excess", r.bakry_ledoux_excess, 0.02 / (R * R));
        constants.push_back(r.constant);
        rows.push_back({R, r.t, r.grad_sup, r.lap_sup, r.constant, r.drift});
    }
    o.results["constants"] = constants;
    const double spread = relative_spread(constants);
    o.results["relative_spread"] = spread;
    o.le("constant_relative_spread", spread, c.real("cutoff.spread_tol"));
    add_trace(o, "cutoff",
              {"R [length]", "t [time]", "grad_sup [1/length]", "lap_sup [1/length^2]", "constant [1]", "drift [1]"},
              std::move(rows));
}

inline void run_check_very_weak(const Config& c, RunOutcome& o, const CertifyOptions& co) {
    const auto cone = config_cone(c, 16, false);
    const Sign sign = parse_sign(c.one_of("certify.sign", {"harmonic", "sub", "super"}));
    const double R = c.positive("region.radius");
    std::vector<Witness> members;
    Certificate cert;
    if (cone) {
        const Geometry g = Geometry::cone(cone);
        if (!c.opt_str("input.function")) throw ConfigError("input.function", "cone inputs are named cone_mode:<k>");
        std::optional<std::function<double(const Point&)>> f;
        try {
            f = cone_mode_input(c.str("input.function"), cone);
        } catch (const std::exception& e) {
            throw ConfigError("input.function", e.what());
        }
        if (!f) throw ConfigError("input.function", "cone inputs are named cone_mode:<k>");
        cert = certify_very_weak(SampledFunction::exact(*f, c.str("input.function")), g,
                                 {Point::Zero(g.coord_dim()), R}, sign, co, &members);
    } else {
        const int dim = config_dim(c);
        const NamedInput in = config_flat_input(c, dim);
        cert = certify_very_weak(in.u, Geometry::flat(dim), {config_point(c, "region.center", dim), R}, sign, co, &members);
    }
    o.results["certificate"] = certificate_json(cert);
    const bool expect = c.boolean("certify.expect");
    o.holds(std::string("verdict_is_") + (expect ? "positive" : "negative"), cert.verdict == expect);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> cols;
    const int cd = members.empty() ? 0 : static_cast<int>(members.front().center.size());
    for (int d = 0; d < cd; ++d) cols.push_back("center_" + std::to_string(d) + " [length]");
    cols.insert(cols.end(), {"radius [length]", "pairing [1]", "score [1]"});
    for (const Witness& w : members) {
        std::vector<double> row(w.center.data(), w.center.data() + w.center.size());
        row.insert(row.end(), {w.radius, w.pairing, w.score});
        rows.push_back(std::move(row));
    }
    add_trace(o, "family", std::move(cols), std::move(rows));
}

inline void run_weyl_demo(const Config& c, RunOutcome& o, const CertifyOptions& co) {
    const auto cone = config_cone(c, 16, false);
    const std::string expect = c.one_of("weyl.expect", {"recover", "refuse"});
    WeylOptions opt;
    opt.t_grid = config_times(c, "weyl");
    opt.h = c.real("grid.h");
    opt.certify = co;
    opt.pipeline.variation_tol = c.positive("weyl.variation_tol");
    const double R = c.positive("weyl.R");
    std::optional<WeylReport> rep;
    int dim = 2;
    try {
        if (cone) {
            if (!c.opt_str("input.function")) throw ConfigError("input.function", "cone inputs are named cone_mode:<k>");
            std::optional<std::function<double(const Point&)>> f;
            try {
                f = cone_mode_input(c.str("input.function"), cone);
                if (!f) throw InvalidArgument("cone inputs are named cone_mode:<k>");
                lift_to_plane(*f, *cone);
            } catch (const std::exception& e) {
                throw ConfigError(c.opt_str("geometry.cone") || c.opt_str("geometry.theta") ? "input.function" : "geometry.s",
                                  e.what());
            }
            rep = weyl_demo_cone(*f, cone, R, opt, *f);
        } else {
            dim = config_dim(c);
            const NamedInput in = config_flat_input(c, dim);
            rep = weyl_demo(in.u, R, config_point(c, "weyl.center", dim), opt, in.truth);
        }
    } catch (const CertificationError& e) {
        o.results["refused"] = true;
        o.results["refusal"] = e.what();
        o.holds("refused", expect == "refuse");
        return;
    }
    o.results["refused"] = false;
    o.results["certificate"] = certificate_json(rep->certificate);
    o.results["lipschitz_constant"] = num(rep->lipschitz_constant);
    o.results["grid_nodes"] = rep->grid_nodes;
    o.results["h"] = rep->h;
    pipeline_trace(o, rep->pipeline, dim);
    if (expect == "refuse") {
        o.holds("refused", false);
        return;
    }
    o.le("grad_variation", rep->pipeline.grad_variation, opt.pipeline.variation_tol);
    o.ge("grad_slope", rep->pipeline.grad_slope, opt.pipeline.blowup_slope);
    if (rep->recovery_error) {
        o.results["recovery_error"] = *rep->recovery_error;
        o.le("recovery_error", *rep->recovery_error, c.positive("weyl.recovery_tol"));
    }
}

}  // namespace detail

struct RunContext {
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

/// Runs a validated config. Configuration problems surface as exit code 2,
/// module refusals and solver failures as structured errors.
inline RunOutcome run_experiment(const Config& cfg, const std::string& kind) {
    RunOutcome o;
    o.kind = kind;
    o.name = cfg.opt_str("output.name").value_or(kind);
    o.config = cfg.entries();
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    CertifyOptions co;
    co.seed = seed;
    co.workers = static_cast<unsigned>(cfg.integer("workers"));
    if (cfg.has("certify.tol")) co.tol = cfg.real("certify.tol");
    if (cfg.has("certify.family_size")) co.family_size = static_cast<std::size_t>(cfg.at_least("certify.family_size", 1));
    try {
        if (kind == "spectrum") detail::run_spectrum(cfg, o);
        else if (kind == "cone-energy") detail::run_cone_energy(cfg, o, seed);
        else if (kind == "solve") detail::run_solve(cfg, o);
        else if (kind == "campanato") detail::run_campanato(cfg, o);
        else if (kind == "heat-smooth") detail::run_heat_smooth(cfg, o, co);
        else if (kind == "kernel-check") detail::run_kernel_check(cfg, o, seed);
        else if (kind == "cutoff") detail::run_cutoff(cfg, o);
        else if (kind == "check-very-weak") detail::run_check_very_weak(cfg, o, co);
        else if (kind == "weyl-demo") detail::run_weyl_demo(cfg, o, co);
        else throw ConfigError("kind", "unknown experiment kind '" + kind + "'");
        o.exit_code = o.passed() ? 0 : 1;
    } catch (const ConfigError& e) {
        o.error = json{{"type", "config"}, {"key", e.key()}, {"message", e.what()}};
        o.exit_code = 2;
    } catch (const ResolutionError& e) {
        o.error = json{{"type", "resolution"}, {"message", e.what()}, {"minimum_admissible", e.minimum_admissible()}};
        o.exit_code = 2;
    } catch (const SolverError& e) {
        o.error = json{{"type", "solver"}, {"message", e.what()}};
        o.exit_code = 1;
    } catch (const Error& e) {
        o.error = json{{"type", "error"}, {"message", e.what()}};
        o.exit_code = 1;
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return o;
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteMember {
    std::string name;
    std::filesystem::path config;
    std::string kind;
    int exit_code = 0;
    std::size_t passed = 0;
    std::size_t total = 0;
    std::vector<std::string> failing;
    double seconds = 0.0;
    std::string error;
};

struct SuiteOutcome {
    std::vector<SuiteMember> members;
    int exit_code = 0;
};

/// Loads and validates every member before running any. Member reports go to
/// `out_dir`, named after the member config's file stem.
inline SuiteOutcome run_suite(const Config& manifest, const std::filesystem::path& out_dir, unsigned workers,
                              std::optional<std::uint64_t> seed = std::nullopt) {
    std::vector<Config> configs;
    SuiteOutcome s;
    std::set<std::string> names;
    for (const std::string& m : manifest.strings("suite.members")) {
        std::filesystem::path p(m);
        if (p.is_relative() && !manifest.directory().empty()) p = manifest.directory() / p;
        Config c = Config::load(p);
        if (!c.has("kind")) throw ConfigError("suite.members", "member '" + m + "' has no kind");
        const std::string kind = c.str("kind");
        try {
            prepare_config(c, kind);
        } catch (const ConfigError& e) {
            throw ConfigError(e.key(), "member '" + m + "': " + e.what());
        }
        if (seed) c.set("seed", std::to_string(*seed));
        std::string name = p.stem().string();
        for (int k = 2; names.count(name); ++k) name = p.stem().string() + "_" + std::to_string(k);
        names.insert(name);
        c.set("output.name", name);
        SuiteMember sm;
        sm.name = name;
        sm.config = p;
        sm.kind = kind;
        s.members.push_back(sm);
        configs.push_back(std::move(c));
    }
    std::size_t next = 0;
    std::mutex mu;
    auto work = [&] {
        while (true) {
            std::size_t k;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next == configs.size()) return;
                k = next++;
            }
            const RunOutcome o = run_experiment(configs[k], s.members[k].kind);
            SuiteMember& m = s.members[k];
            m.exit_code = o.exit_code;
            m.seconds = o.seconds;
            m.total = o.assertions.size();
            for (const Assertion& a : o.assertions) {
                if (a.pass) ++m.passed;
                else m.failing.push_back(a.name);
            }
            if (o.error) m.error = (*o.error)["message"].get<std::string>();
            write_outputs(o, out_dir);
        }
    };
    const unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(configs.size(), 1))));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < w; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const SuiteMember& m : s.members)
        if (m.exit_code != 0) s.exit_code = 1;
    return s;
}

inline json suite_json(const SuiteOutcome& s) {
    json j;
    j["schema"] = kSuiteSchema;
    j["tool_version"] = CONELAB_VERSION;
    json members = json::array();
    double total = 0.0;
    for (const SuiteMember& m : s.members) {
        members.push_back({{"name", m.name},
                           {"kind", m.kind},
                           {"config", m.config.string()},
                           {"exit_code", m.exit_code},
                           {"passed", m.passed},
                           {"assertions", m.total},
                           {"failing", m.failing},
                           {"error", m.error}});
        total += m.seconds;
    }
    j["members"] = members;
    j["exit_code"] = s.exit_code;
    j["verdict"] = s.exit_code == 0 ? "pass" : "fail";
    j["timing"] = {{"member_seconds", total}, {"finished_utc", detail::utc_now()}};
    return j;
}

inline std::string suite_table(const SuiteOutcome& s) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-28s %-16s %-7s %9s %9s\n", "member", "kind", "verdict", "asserts", "seconds");
    out += buf;
    for (const SuiteMember& m : s.members) {
        const char* v = m.exit_code == 0 ? "pass" : (m.exit_code == 2 ? "error" : "FAIL");
        std::snprintf(buf, sizeof buf, "%-28s %-16s %-7s %4zu/%-4zu %9.2f\n", m.name.c_str(), m.kind.c_str(), v, m.passed,
                      m.total, m.seconds);
        out += buf;
    }
    for (const SuiteMember& m : s.members) {
        if (m.exit_code == 0) continue;
        out += "failing member " + m.name + ":";
        for (const auto& f : m.failing) out += " " + f;
        if (!m.error.empty()) out += " (" + m.error + ")";
        out += "\n";
    }
    return out;
}

}  // namespace conelab
