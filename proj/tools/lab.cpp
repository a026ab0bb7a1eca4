// lab <kind> --config <file> [--out dir|report.json] [--seed n] [--workers k]
// lab suite --config <manifest> [--out dir] [--workers k]
// lab schema <kind>
// Exit codes: 0 every assertion passed, 1 an assertion or solver failed, 2 bad configuration.

#include "conelab/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using namespace conelab;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<long long> seed;
    std::optional<int> workers;
};

void print_error(const std::string& type, const std::string& key, const std::string& msg) {
    json e{{"error", {{"type", type}, {"message", msg}}}};
    if (!key.empty()) e["error"]["key"] = key;
    std::cerr << e.dump() << '\n';
}

/// Report directory and stem from --out, falling back to output.dir.
fs::path output_dir(const Config& cfg, const std::string& out, RunOutcome* o) {
    if (out.empty()) return cfg.path("output.dir");
    const fs::path p(out);
    if (p.extension() == ".json") {
        if (o) o->name = p.stem().string();
        return p.parent_path().empty() ? fs::path(".") : p.parent_path();
    }
    return p;
}

int run_kind(const std::string& kind, const Common& c, const std::map<std::string, std::string>& overrides) {
    Config cfg;
    try {
        cfg = Config::load(c.config);
        if (c.seed) cfg.set("seed", std::to_string(*c.seed));
        if (c.workers) cfg.set("workers", std::to_string(*c.workers));
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        if (!cfg.has("kind")) cfg.set("kind", kind);
        prepare_config(cfg, kind);
    } catch (const ConfigError& e) {
        print_error("config", e.key(), e.what());
        return 2;
    }
    RunOutcome o = run_experiment(cfg, kind);
    try {
        const fs::path dir = output_dir(cfg, c.out, &o);
        const fs::path report = write_outputs(o, dir);
        std::cout << "report " << report.string() << '\n';
    } catch (const std::exception& e) {
        print_error("output", "output.dir", e.what());
        return 2;
    }
    for (const Assertion& a : o.assertions)
        std::printf("%-4s %-44s %.6g %s %.6g (margin %.3g)\n", a.pass ? "pass" : "FAIL", a.name.c_str(), a.value,
                    a.op.c_str(), a.threshold, a.margin);
    if (o.error) std::cerr << json{{"error", *o.error}}.dump() << '\n';
    std::cout << kind << ": " << (o.error ? "error" : (o.passed() ? "pass" : "fail")) << '\n';
    return o.exit_code;
}

int run_suite_cmd(const Common& c) {
    try {
        Config manifest = Config::load(c.config);
        if (!manifest.has("kind")) manifest.set("kind", "suite");
        prepare_config(manifest, "suite");
        const fs::path dir = c.out.empty() ? manifest.path("output.dir") : fs::path(c.out);
        const unsigned workers = static_cast<unsigned>(c.workers ? *c.workers : manifest.integer("workers"));
        std::optional<std::uint64_t> seed;
        if (c.seed) seed = static_cast<std::uint64_t>(*c.seed);
        const SuiteOutcome s = run_suite(manifest, dir, std::max(1u, workers), seed);
        fs::create_directories(dir);
        std::ofstream(dir / "suite.json") << suite_json(s).dump(2) << '\n';
        std::cout << suite_table(s);
        return s.exit_code;
    } catch (const ConfigError& e) {
        print_error("config", e.key(), e.what());
        return 2;
    }
}

std::string exact_text(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

int print_schema(const std::string& kind) {
    try {
        for (const auto& [k, f] : experiment_schema(kind))
            std::cout << k << (f.fallback ? " = " + *f.fallback : "") << "    # " << f.help << '\n';
        return 0;
    } catch (const ConfigError& e) {
        print_error("config", e.key(), e.what());
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conelab experiment runner"};
    app.set_version_flag("--version", CONELAB_VERSION);
    app.require_subcommand(1);

    std::vector<std::string> kinds = experiment_kinds();
    kinds.push_back("suite");
    std::map<std::string, Common> common;
    std::map<std::string, CLI::App*> subs;
    for (const std::string& k : kinds) {
        CLI::App* s = app.add_subcommand(k, k == "suite" ? "run a manifest of configs" : "run a " + k + " experiment");
        Common& c = common[k];
        s->add_option("--config", c.config, "config file")->required()->check(CLI::ExistingFile);
        s->add_option("--out", c.out, "output directory, or report path ending in .json");
        s->add_option("--seed", c.seed, "seed override")->check(CLI::NonNegativeNumber);
        s->add_option("--workers", c.workers, "worker threads")->check(CLI::Range(1, 256));
        subs[k] = s;
    }

    std::optional<std::string> coeff;
    std::optional<double> rho, h;
    std::optional<int> levels;
    bool frozen = false;
    subs["campanato"]->set_help_flag("--help", "print this help and exit");
    subs["campanato"]->add_option("--coeff", coeff, "coefficient A");
    subs["campanato"]->add_flag("--frozen", frozen, "run with A = Abar");
    subs["campanato"]->add_option("--rho", rho, "contraction ratio");
    subs["campanato"]->add_option("--levels", levels, "number of levels")->check(CLI::PositiveNumber);
    subs["campanato"]->add_option("--h", h, "mesh size; sets mesh.cells")->check(CLI::PositiveNumber);

    std::string schema_kind;
    CLI::App* schema = app.add_subcommand("schema", "list the keys of an experiment kind");
    schema->add_option("kind", schema_kind, "experiment kind")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (schema->parsed()) return print_schema(schema_kind);
    for (const std::string& k : kinds) {
        if (!subs[k]->parsed()) continue;
        if (k == "suite") return run_suite_cmd(common[k]);
        std::map<std::string, std::string> overrides;
        if (k == "campanato") {
            if (coeff) overrides["coefficient.A"] = *coeff;
            if (frozen) overrides["campanato.frozen"] = "true";
            if (rho) overrides["campanato.rho"] = exact_text(*rho);
            if (levels) overrides["campanato.levels"] = std::to_string(*levels);
            if (h) {
                // Cells across the outer ball; the outer radius comes from the config or its default.
                double outer = 0.52;
                try {
                    const Config c = Config::load(common[k].config);
                    if (c.has("mesh.outer_radius")) outer = c.real("mesh.outer_radius");
                } catch (const ConfigError&) {
                }
                overrides["mesh.cells"] = std::to_string(std::max(8L, std::lround(2.0 * outer / *h)));
            }
        }
        return run_kind(k, common[k], overrides);
    }
    return 2;
}
