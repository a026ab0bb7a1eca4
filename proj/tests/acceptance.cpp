// One line per acceptance criterion. Exit status is 0 when every criterion passes
// except those listed in kUnattainable, whose failure is expected and explained.

#include "conelab/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <random>

using namespace conelab;

namespace {

const double pi = std::numbers::pi;

struct Verdict {
    bool pass = false;
    std::string detail;
};

/// Criterion 8 asks sup(|grad eta| + |Lap eta|) R to be the same for every R. The
/// gradient scales like 1/R and the Laplacian like 1/R^2, so the product is a + b/R
/// (here a ~ 2.7, b ~ 23) for this cutoff and for its exact rescalings alike. A single
/// C with sup <= C/R for all R >= r0 does exist (C = the R = r0 value); constancy does not.
const std::map<int, std::string> kUnattainable{
    {8, "sup(|grad eta| + |Lap eta|) R behaves like a + b/R because |Lap eta| scales as R^-2; the uniform bound "
        "C/R holds with C equal to the R = 1 value, but the product cannot be constant in R"}};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

RunOutcome run(const std::string& kind, const std::string& text) {
    Config c = Config::parse_string(text, kind);
    prepare_config(c, kind);
    return run_experiment(c, kind);
}

const Assertion& assertion(const RunOutcome& o, const std::string& name) {
    for (const Assertion& a : o.assertions)
        if (a.name == name) return a;
    throw Error("missing assertion " + name + " in " + o.kind + (o.error ? ": " + o.error->dump() : ""));
}

double rel_err(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

Matrix random_spd(std::mt19937_64& rng, int n, double spread) {
    std::normal_distribution<double> nd;
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i, j) = nd(rng);
    Matrix m = spread * b * b.transpose() / n + Matrix::Identity(n, n);
    return 0.5 * (m + m.transpose());
}

Verdict coefficient_round_trip() {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int n : {3, 4, 5})
        for (int f = 0; f < 100; ++f) {
            const Matrix m0 = random_spd(rng, n, 2.0), m1 = random_spd(rng, n, 1.0);
            const CoefficientField a(n, [=](const Point& x) { return Matrix(m0 + x.squaredNorm() * m1); }, "random");
            const CoefficientField back = coefficient_from_metric(metric_from_coefficient(a));
            for (int s = 0; s < 4; ++s) {
                Point x(n);
                for (int i = 0; i < n; ++i) x[i] = u(rng);
                worst = std::max(worst, rel_err(back(x), a(x)));
            }
        }
    return {worst <= 1e-12, fmt("300 fields, n = 3..5: max relative error %.2e <= 1e-12", worst)};
}

Verdict exponent_relation() {
    double residual = 0.0, alpha_min = 1e300;
    int spectra = 0;
    std::vector<CrossSectionSpectrum> all;
    for (double t : {0.5, 1.0, pi, 1.5 * pi, 1.9 * pi, 2 * pi}) all.push_back(circle_spectrum(t, 24));
    for (double s : {0.3, 0.5, 1 / std::sqrt(2.0), 0.9, 1.0}) all.push_back(sphere_spectrum(s, 24));
    for (const auto& sp : all) {
        ++spectra;
        const bool rcd = sp.size() > 1 && sp.mode(1).lambda >= sp.N() - 1 - 1e-12;
        for (std::size_t i = 0; i < sp.size(); ++i) {
            const double a = sp.alpha(i), lam = sp.mode(i).lambda;
            residual = std::max(residual, std::abs(a * (sp.N() + a - 2) - lam) / std::max(1.0, lam));
            if (rcd && i > 0) alpha_min = std::min(alpha_min, a);
        }
    }
    const bool ok = residual <= 1e-12 && alpha_min >= 1.0 - 1e-12;
    return {ok, fmt("%.0f spectra: residual %.1e <= 1e-12, min alpha under lambda_1 >= N-1: %.4f >= 1", spectra, residual,
                    alpha_min)};
}

Verdict energy_monotonicity() {
    bool ok = true;
    double worst_drop = 0.0, fem = 0.0;
    int seed = 30;
    for (const char* g : {"theta = 3.141592653589793", "theta = 4.71238898038469", "theta = 6.283185307179586", "s = 0.5",
                          "s = 0.7071067811865476", "s = 1"}) {
        const bool circle = std::string(g).rfind("theta", 0) == 0;
        std::string radii;
        for (int k = 1; k <= 40; ++k) radii += (k > 1 ? "," : "") + fmt("%.3f", 0.025 * k);
        const RunOutcome o = run("cone-energy", "seed = " + std::to_string(seed++) + "\n[geometry]\n" + g +
                                                    "\n[harmonic]\nrandom = 50\n[energy]\nradii = " + radii + "\n" +
                                                    (circle ? "fem_h = 0.015625\n" : ""));
        ok = ok && o.passed();
        worst_drop = std::max(worst_drop, assertion(o, "worst_relative_decrease").value);
        if (circle) fem = std::max(fem, assertion(o, "fem_relative_error").value);
    }
    return {ok, fmt("300 harmonics on 6 cones: worst decrease %.1e <= 1e-10, FEM at h = 1/64 within %.2f%% <= 2%%",
                    worst_drop, 100 * fem)};
}

Verdict singular_point_decay() {
    // u = r^2 phi_1 on the theta = pi cone, measured by FEM in the developed disc.
    const double theta = pi, k = theta / (2 * pi);
    const auto s = std::make_shared<const CrossSectionSpectrum>(circle_spectrum(theta, 4));
    const ConeHarmonic h(s, {0.0, 1.0});
    auto mesh = std::make_shared<const Mesh>(disc_mesh(1.0, 64));
    const DiscreteField u = solve_dirichlet(cone2d_coefficient(theta), mesh, [&](const Point& x) {
        double psi = std::atan2(x[1], x[0]);
        if (psi < 0) psi += 2 * pi;
        return h.value(x.norm(), point({k * psi}));
    });
    const MetricField g = cone2d_metric(theta);
    const auto dist = euclidean_distance(*mesh, Point::Zero(2));
    std::vector<double> lr, le;
    for (double r = 0.2; r <= 0.81; r += 0.05) {
        lr.push_back(std::log(r));
        le.push_back(std::log(gradient_energy_average(*mesh, u.values, g, r, dist).value));
    }
    const double mx = std::accumulate(lr.begin(), lr.end(), 0.0) / lr.size();
    const double my = std::accumulate(le.begin(), le.end(), 0.0) / le.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lr.size(); ++i) sxy += (lr[i] - mx) * (le[i] - my), sxx += (lr[i] - mx) * (lr[i] - mx);
    const double slope = sxy / sxx, target = 2 * s->alpha(1) - 2;
    const double rel = std::abs(slope / target - 1.0);
    return {rel <= 0.05, fmt("FEM log-log slope %.4f vs 2 alpha_1 - 2 = %.1f: deviation %.2f%% <= 5%%", slope, target, 100 * rel)};
}

struct CampanatoRuns {
    RunOutcome perturbed, frozen, control;
};

const CampanatoRuns& campanato_runs() {
    static const CampanatoRuns r{
        run("campanato", "[coefficient]\nA = perturbed:convex_graph:1,1,1,power:0.2:0.5\nAbar = convex_graph:1,1,1\n"
                         "[campanato]\nlevels = 6\n[mesh]\ncells = 96\n"),
        run("campanato", "[campanato]\nfrozen = true\nlevels = 6\n[mesh]\ncells = 96\n"),
        run("campanato", "[coefficient]\nA = perturbed:convex_graph:1,1,1,log:0.5\n[campanato]\nexpect = divergent\n"
                         "levels = 3\n[mesh]\ncells = 48\n")};
    return r;
}

Verdict per_level_bound() {
    const CampanatoRuns& r = campanato_runs();
    double worst = 0.0, budget = 0.0, frozen = 0.0;
    bool ok = !r.perturbed.error && !r.frozen.error;
    std::size_t levels = 0;
    for (const Assertion& a : r.perturbed.assertions)
        if (a.name.rfind("_c2") == a.name.size() - 3) {
            ++levels;
            ok = ok && a.pass;
            worst = std::max(worst, a.value);
            budget = a.threshold;
        }
    for (const Assertion& a : r.frozen.assertions)
        if (a.name.find("frozen_comparison_energy") != std::string::npos) {
            ok = ok && a.pass;
            frozen = std::max(frozen, a.value / a.threshold * kZeroEnergyRel);
        }
    ok = ok && levels == 6;
    return {ok, fmt("96^3 grid, %.0f levels: max C2 %.4f <= budget %.4f; frozen |grad v|^2 / |grad u|^2 <= %.1e <= 10 x solver rtol",
                    static_cast<double>(levels), worst, budget, frozen)};
}

Verdict decay_bound_criterion() {
    const CampanatoRuns& r = campanato_runs();
    const Assertion& d = assertion(r.perturbed, "limsup_energy_ratio");
    const Assertion& inc = assertion(r.control, "late_over_early_increment");
    const bool divergent = assertion(r.control, "dini_integral_divergent").pass;
    return {d.pass && inc.pass && divergent,
            fmt("limsup ratio %.4f <= %.4f; non-Dini control: late/early log-product increment %.3f >= 0.8", d.value,
                d.threshold, inc.value)};
}

Verdict kernel_envelope() {
    const RunOutcome o = run("kernel-check", "seed = 7\n[kernel]\ndims = 1,2,3\ntimes = 0.001,0.01,0.1\nsamples = 1000\n");
    double viol = 0.0, mass = 0.0;
    for (const Assertion& a : o.assertions) {
        if (a.name.find("violations") != std::string::npos) viol += a.value;
        if (a.name.find("mass_error") != std::string::npos) mass = std::max(mass, a.value);
    }
    return {o.passed(), fmt("n = 1..3, 1000 pairs: %.0f envelope violations; mass error %.1e <= 1e-8", viol, mass)};
}

Verdict cutoff_scale_invariance() {
    const RunOutcome o = run("cutoff", "[cutoff]\ndim = 2\nradii = 1,2,4\n");
    const auto& c = o.results["constants"];
    const Assertion& s = assertion(o, "constant_relative_spread");
    return {o.passed(), fmt("C R = %.2f, %.2f, %.2f for R = 1, 2, 4: spread %.3f", c[0].get<double>(), c[1].get<double>(),
                            c[2].get<double>(), s.value) +
                            " <= 0.15"};
}

Verdict smoothing_pipeline_criterion() {
    const RunOutcome h = run("heat-smooth", "[input]\nfunction = harmonic\n[smoothing]\nR = 4\nt_max = 0.1\nt_min = 0.001\n");
    const RunOutcome j =
        run("heat-smooth", "[input]\nfunction = jump\n[smoothing]\nR = 4\nt_max = 0.1\nt_min = 0.001\nexpect = blowup\n");
    const double var = assertion(h, "grad_variation").value, rate = assertion(h, "l1_rate").value;
    const double slope = j.results["pipeline"]["grad_slope"].get<double>();
    return {h.passed() && j.passed(),
            fmt("harmonic: gradient variation %.1e <= 0.1, L1 rate %.2f >= 0.5; jump: gradient slope %.3f ~ -0.5", var, rate,
                slope)};
}

Verdict heat_monotonicity() {
    const std::string times = "[smoothing]\nt_max = 0.01\nt_min = 0.001\ntimes = 4\n";
    const RunOutcome sq = run("heat-smooth", "[heat]\nmode = monotonicity\n[input]\nfunction = square\n" + times);
    const RunOutcome flat = run("heat-smooth",
                                "[heat]\nmode = monotonicity\n[input]\nfunction = harmonic\n[monotonicity]\nexpect = flat\n"
                                "tol = 1e-8\n" + times);
    const RunOutcome mass = run("heat-smooth",
                                "[heat]\nmode = monotonicity\n[input]\nfunction = bump\n[monotonicity]\nexpect = none\n" + times);
    return {sq.passed() && flat.passed() && mass.passed(),
            fmt("P_t|x|^2 - |x|^2 - 2nt: %.1e <= 1e-6; harmonic change %.1e <= 1e-8; mass error %.1e <= 1e-6",
                assertion(sq, "second_moment_increment_error").value, assertion(flat, "worst_change").value,
                assertion(mass, "mass_error").value)};
}

Verdict very_weak_certification() {
    bool ok = true;
    double harmonic_score = 0.0;
    for (const char* f : {"linear", "harmonic", "affine"}) {
        const RunOutcome o = run("check-very-weak", std::string("[input]\nfunction = ") + f + "\n[certify]\ntol = 1e-6\n");
        ok = ok && o.passed();
        harmonic_score = std::max({harmonic_score, std::abs(o.results["certificate"]["max_score"].get<double>()),
                                   std::abs(o.results["certificate"]["min_score"].get<double>())});
    }
    const RunOutcome sub = run("check-very-weak", "[input]\nfunction = square\n[certify]\nsign = sub\n");
    const RunOutcome not_h = run("check-very-weak", "[input]\nfunction = square\n[certify]\nexpect = false\n");
    const double witness = not_h.results["certificate"]["worst"]["score"].get<double>();
    ok = ok && sub.passed() && not_h.passed();

    // Bilinearity and locality of the pairing.
    const TestFunction phi = bump(point({0.1, -0.2}), 0.35);
    const SampledFunction u = SampledFunction::exact([](const Point& x) { return std::exp(x[0]) * std::cos(2 * x[1]); });
    const SampledFunction w = SampledFunction::exact([](const Point& x) { return x[0] * x[0] * x[1]; });
    const double lhs = distributional_laplacian(1.5 * u + (-2.0) * w, phi);
    const double rhs = 1.5 * distributional_laplacian(u, phi) - 2.0 * distributional_laplacian(w, phi);
    const SampledFunction far = SampledFunction::exact([&](const Point& x) { return (x - phi.center()).norm() >= 0.35 ? 1e6 : u(x); });
    const double lin = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
    const double loc = std::abs(distributional_laplacian(far, phi) - distributional_laplacian(u, phi));
    ok = ok && lin <= 1e-12 && loc <= 1e-12;
    return {ok, fmt("harmonic scores <= %.1e; |x|^2 sub, not harmonic (witness score %.3f); bilinearity %.1e, locality %.1e",
                    harmonic_score, witness, lin, loc)};
}

Verdict poisson_decomposition_criterion() {
    auto mesh = std::make_shared<const Mesh>(box_mesh(2, -1.0, 1.0, 128));
    auto f = [](const Point& x) { return std::sin(3 * x[0]) * std::cos(2 * x[1]); };
    // Laplacian of -sin(3x) cos(2y) / 13 is f; 1 + xy is harmonic.
    const SampledFunction u = SampledFunction::exact(
        [](const Point& x) { return -std::sin(3 * x[0]) * std::cos(2 * x[1]) / 13.0 + 1 + x[0] * x[1]; });
    CertifyOptions opt;
    opt.tol = 1e-5;
    const DecompositionReport rep = poisson_decomposition(u, f, mesh, {point({0.0, 0.0}), 0.5}, opt);
    const double worst = std::max(std::abs(rep.remainder.max_score), std::abs(rep.remainder.min_score));
    return {rep.remainder.verdict,
            fmt("h = 1/64: remainder certified harmonic, max |score| %.1e <= 1e-5 (u alone: %.1e)", worst,
                std::max(std::abs(rep.original.max_score), std::abs(rep.original.min_score)))};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, Verdict (*)()>> criteria{
        {"coefficient-metric round trip", coefficient_round_trip},
        {"exponent relation", exponent_relation},
        {"energy monotonicity", energy_monotonicity},
        {"singular-point decay", singular_point_decay},
        {"per-level frozen bound", per_level_bound},
        {"final decay bound", decay_bound_criterion},
        {"heat kernel envelope and mass", kernel_envelope},
        {"cutoff scale invariance", cutoff_scale_invariance},
        {"smoothing pipeline", smoothing_pipeline_criterion},
        {"heat-flow monotonicity", heat_monotonicity},
        {"very-weak certification", very_weak_certification},
        {"Poisson decomposition", poisson_decomposition_criterion},
    };
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool known = kUnattainable.count(id) > 0;
        std::printf("%s %2d  %-30s %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str(), s);
        if (!v.pass && known) std::printf("         expected failure: %s\n", kUnattainable.at(id).c_str());
        if (!v.pass && !known) ++unexpected;
        std::fflush(stdout);
    }
    std::printf("%d unexpected failure%s\n", unexpected, unexpected == 1 ? "" : "s");
    return unexpected == 0 ? 0 : 1;
}
