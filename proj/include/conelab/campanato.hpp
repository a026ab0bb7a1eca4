#pragma once

// Dyadic frozen-coefficient comparison on metric balls of the frozen metric.
// One outer solve with A; per level a Dirichlet solve with Abar on the cells
// of the metric ball, sharing the outer mesh so u - u_l has zero trace exactly.

#include "conelab/coefficient.hpp"
#include "conelab/dini.hpp"
#include "conelab/fem.hpp"
#include "conelab/mesh.hpp"
#include "conelab/metric_ball.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace conelab {

/// max over the calibration family of the measured per-level constant; see
/// `calibrate_c2`. Budgets are 3x this, scaled by 1/lambda(Abar).
inline constexpr double kCalibratedC2 = 0.0708025;

/// C1 >= 1 with B_{r/C1} inside B^g_r inside B_{C1 r}, g the metric of Abar.
inline double estimate_bilipschitz(const CoefficientField& Abar, double radius, std::size_t samples = 4096) {
    const MetricField g = metric_from_coefficient(Abar);
    return bilipschitz_constant(g, radius, samples);
}

inline double estimate_bilipschitz(const CoefficientField& Abar) {
    return estimate_bilipschitz(Abar, Abar.radius());
}

/// Largest r <= r_max (to rel. 1e-6) with |abar| <= 2 Lambda and abar >= lambda/2 on B_r.
inline double comparison_radius(const CoefficientField& Abar, const Ellipticity& of_A, double r_max,
                                std::size_t samples = 2048) {
    auto ok = [&](double r) {
        const Ellipticity e = ellipticity_constants(Abar, Point::Zero(Abar.dimension()), r, samples);
        return e.Lambda <= 2.0 * of_A.Lambda * (1 + 1e-12) && e.lambda >= 0.5 * of_A.lambda * (1 - 1e-12);
    };
    if (ok(r_max)) return r_max;
    double lo = 0.0;
    double hi = r_max;
    while (hi - lo > 1e-6 * r_max) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? lo : hi) = mid;
    }
    if (lo == 0.0) throw DegenerateError("comparison window is empty: Abar is not comparable to A near 0", Point::Zero(Abar.dimension()));
    return lo;
}

struct MeshPolicy {
    double outer_radius = 0.52;
    int cells = 96;              ///< grid cells across the outer diameter
    int min_cells_across = 8;    ///< levels stop below this many cells across the ball
    int reach = 3;               ///< Dijkstra stencil reach
    SolverOptions solver{};
};

struct IterationOptions {
    std::optional<double> rho;   ///< default 1/C1
    std::optional<int> l0;       ///< default from the comparison window
    int l_max = 0;               ///< 0: l0 + levels - 1
    int levels = 6;
    MeshPolicy mesh{};
    std::size_t samples = 2048;  ///< ellipticity and modulus sampling
};

struct LevelRecord {
    int level = 0;
    double radius = 0.0;             ///< rho^l
    double comparison_energy = 0.0;  ///< |grad_g v_l|^2 over B_l, vol_g
    double solution_energy = 0.0;    ///< |grad_g u|^2 over B_l, vol_g
    double omega = 0.0;              ///< omega(rho^(l-1))
    double volume = 0.0;             ///< vol_g(B_l)
    double average = 0.0;            ///< solution_energy / volume
    double ratio = 1.0;              ///< average / previous average (1 at l0)
    double measured_c2 = 0.0;        ///< |grad v| / (omega |grad u|), 0 when omega = 0
    double cells_across = 0.0;
    std::size_t cells = 0;
    std::size_t boundary_nodes = 0;
    SolveStats stats{};
};

struct IterationReport {
    std::string coefficient;
    std::string frozen;
    int dim = 0;
    double rho = 0.0;
    double c1 = 1.0;
    double r1 = 0.0;
    int l0 = 0;
    int l_max = 0;
    Ellipticity ellipticity_A{};
    Ellipticity ellipticity_Abar{};
    double cross_norm_constant = 1.0;  ///< |d_j u|_{L2(dx)} <= C |grad_g u|_{L2(vol_g)}
    double h = 0.0;
    std::size_t outer_nodes = 0;
    SolveStats outer_stats{};
    std::vector<LevelRecord> levels;
    bool truncated = false;            ///< stopped early on resolution
    std::string truncation_reason;
    DiniIntegral dini{};
    double c2_max = 0.0;
    double c3 = 0.0;                   ///< max_l C2_l * vol_l / vol_(l+1)
    double accumulated_product = 1.0;  ///< prod (1 + C3 omega(rho^(l-1)))^2
    std::vector<double> modulus_t;
    std::vector<double> modulus_omega;
};

inline double default_boundary_data(const Point& x) {
    double v = x[0] + 0.3 * x[0] * x[0];
    if (x.size() > 2) v += 0.8 * x[1] * x[2] - 0.2 * x[2];
    else if (x.size() > 1) v += 0.5 * x[1];
    return v;
}

inline IterationReport run_iteration(const CoefficientField& A, const CoefficientField& Abar,
                                     const std::function<double(const Point&)>& boundary_data,
                                     const IterationOptions& opt = {}) {
    const int n = A.dimension();
    if (Abar.dimension() != n) throw InvalidArgument("run_iteration: A and Abar dimensions differ");
    if (n != 3) throw InvalidArgument("run_iteration: the frozen metric is defined for n >= 3; grid meshes support n = 3");
    const MeshPolicy& mp = opt.mesh;
    if (!(mp.outer_radius > 0.0) || mp.cells < 8) throw InvalidArgument("run_iteration: bad mesh policy");
    if (opt.rho && !(*opt.rho > 0.0 && *opt.rho < 1.0)) throw InvalidArgument("run_iteration: rho must lie in (0, 1)");

    IterationReport rep;
    rep.coefficient = A.name();
    rep.frozen = Abar.name();
    rep.dim = n;
    const double R = mp.outer_radius;
    rep.ellipticity_A = ellipticity_constants(A, Point::Zero(n), R, opt.samples);
    rep.ellipticity_Abar = ellipticity_constants(Abar, Point::Zero(n), R, opt.samples);
    rep.cross_norm_constant = 1.0 / std::sqrt(rep.ellipticity_Abar.lambda);
    rep.c1 = estimate_bilipschitz(Abar, R, opt.samples);
    rep.rho = opt.rho ? *opt.rho : 1.0 / rep.c1;
    if (!(rep.rho < 1.0)) throw InvalidArgument("run_iteration: C1 = 1 gives rho = 1; pass an explicit rho");
    rep.r1 = comparison_radius(Abar, rep.ellipticity_A, R, opt.samples);
    if (opt.l0) {
        rep.l0 = *opt.l0;
    } else {
        rep.l0 = 3;
        while (!(std::pow(rep.rho, rep.l0) < rep.r1 / rep.c1 * (1 - 1e-12))) ++rep.l0;
    }
    if (rep.l0 < 1) throw InvalidArgument("run_iteration: l0 must be positive");
    rep.l_max = opt.l_max > 0 ? opt.l_max : rep.l0 + std::max(opt.levels, 1) - 1;
    if (rep.l_max < rep.l0) throw InvalidArgument("run_iteration: l_max < l0");

    const DiniModulus w = estimate_modulus(A, Abar, default_modulus_grid(), opt.samples);
    rep.modulus_t = w.radii();
    rep.modulus_omega = w.values();
    rep.dini = dini_integral(w, 1.0);

    auto mesh = cached_ball_grid(n, R, mp.cells);
    const Mesh& m = *mesh;
    rep.h = m.h;
    rep.outer_nodes = m.num_nodes();
    const DiscreteField u = solve_dirichlet(A, mesh, boundary_data, mp.solver);
    rep.outer_stats = u.stats;

    const MetricField g = metric_from_coefficient(Abar);
    const double r_top = std::pow(rep.rho, rep.l0);
    const double margin = 2.0 * rep.c1 * std::sqrt(double(n)) * mp.reach * m.h;
    const std::vector<double> dist = metric_distances(m, g, Point::Zero(n), r_top + margin, mp.reach);
    std::vector<double> centroid(m.num_cells());
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        double s = 0.0;
        for (int k = 0; k <= n; ++k) s += dist[m.cell_node(c, k)];
        centroid[c] = s / (n + 1);
    }
    auto sqrt_det = [&g](const Point& x) { return std::sqrt(g.det(x)); };

    for (int l = rep.l0; l <= rep.l_max; ++l) {
        LevelRecord rec;
        rec.level = l;
        rec.radius = std::pow(rep.rho, l);
        std::vector<std::uint8_t> mask(m.num_cells(), 0);
        double lebesgue = 0.0;
        for (std::size_t c = 0; c < m.num_cells(); ++c)
            if (centroid[c] < rec.radius) {
                mask[c] = 1;
                ++rec.cells;
                lebesgue += m.cell_volume(c);
            }
        rec.cells_across = 2.0 * std::pow(lebesgue / unit_ball_volume(n), 1.0 / n) / m.h;
        if (rec.cells == 0 || rec.cells_across < mp.min_cells_across) {
            rep.truncated = true;
            rep.truncation_reason = "level " + std::to_string(l) + ": metric ball spans " +
                                    std::to_string(rec.cells_across) + " cells across, below " +
                                    std::to_string(mp.min_cells_across);
            break;
        }
        auto sub = std::make_shared<SubMesh>(extract_submesh(m, mask));
        auto sm = std::shared_ptr<const Mesh>(sub, &sub->mesh);
        rec.boundary_nodes = sm->num_boundary();
        std::vector<double> ur(sm->num_nodes());
        for (std::size_t i = 0; i < ur.size(); ++i) ur[i] = u.values[sub->parent_node[i]];
        const CsrMatrix Kbar = assemble(Abar, *sm);
        const DiscreteField ul = solve_dirichlet(Kbar, sm, ur, mp.solver);
        rec.stats = ul.stats;
        std::vector<double> v(ur.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = ur[i] - ul.values[i];
        rec.comparison_energy = std::max(0.0, quadratic_form(Kbar, v));
        rec.solution_energy = std::max(0.0, quadratic_form(Kbar, ur));
        rec.volume = weighted_volume(sqrt_det, *sm);
        rec.average = rec.solution_energy / rec.volume;
        rec.omega = w(std::pow(rep.rho, l - 1));
        if (rec.omega > 0.0 && rec.solution_energy > 0.0)
            rec.measured_c2 = std::sqrt(rec.comparison_energy / rec.solution_energy) / rec.omega;
        if (!rep.levels.empty()) rec.ratio = rec.average / rep.levels.back().average;
        rep.levels.push_back(rec);
    }

    for (std::size_t k = 0; k < rep.levels.size(); ++k) {
        const LevelRecord& r = rep.levels[k];
        rep.c2_max = std::max(rep.c2_max, r.measured_c2);
        const double vol_ratio = k + 1 < rep.levels.size() ? r.volume / rep.levels[k + 1].volume
                                                          : std::pow(rep.rho, -n);
        rep.c3 = std::max(rep.c3, r.measured_c2 * vol_ratio);
    }
    for (const LevelRecord& r : rep.levels) rep.accumulated_product *= std::pow(1.0 + rep.c3 * r.omega, 2);
    return rep;
}

inline IterationReport run_iteration(const CoefficientField& A, const CoefficientField& Abar,
                                     const IterationOptions& opt = {}) {
    return run_iteration(A, Abar, default_boundary_data, opt);
}

/// Frozen per-level budget for measured C2.
inline double c2_budget(const Ellipticity& of_Abar, double calibrated = kCalibratedC2) {
    return 3.0 * calibrated / of_Abar.lambda;
}

struct LevelBound {
    bool holds = false;
    double measured_c2 = 0.0;
    double budget = 0.0;
};

/// Tolerance below which a comparison energy counts as zero, relative to the
/// solution energy: ten times the default solver tolerance.
inline constexpr double kZeroEnergyRel = 10 * SolverOptions{}.rtol;

inline LevelBound verify_level_bound(const IterationReport& rep, int level, double calibrated = kCalibratedC2) {
    for (const LevelRecord& r : rep.levels) {
        if (r.level != level) continue;
        LevelBound b;
        b.budget = c2_budget(rep.ellipticity_Abar, calibrated);
        if (r.omega == 0.0) {
            if (r.comparison_energy > kZeroEnergyRel * r.solution_energy)
                throw CertificationError("level " + std::to_string(level) +
                                         ": omega vanishes but the comparison energy does not (" +
                                         std::to_string(r.comparison_energy) + ")");
            b.holds = true;
            return b;
        }
        b.measured_c2 = r.measured_c2;
        b.holds = b.measured_c2 <= b.budget;
        return b;
    }
    throw InvalidArgument("verify_level_bound: level " + std::to_string(level) + " is not in the report");
}

struct DecayBound {
    double limsup_ratio = 0.0;  ///< max over the last half of levels of avg_l / avg_l0
    double bound = 1.0;         ///< exp(2 C3 / (1 - rho) * Dini integral)
    double exponent = 0.0;
    bool holds = false;
};

inline double decay_bound_value(double c3, double rho, double dini) {
    return std::exp(2.0 * c3 / (1.0 - rho) * dini);
}

/// `margin` is the relative discretization allowance on the ratio.
inline DecayBound decay_bound(const IterationReport& rep, double margin = 0.0) {
    if (rep.levels.size() < 4)
        throw ResolutionError("decay_bound: " + std::to_string(rep.levels.size()) + " valid levels, need 4", 4.0);
    DecayBound d;
    const double a0 = rep.levels.front().average;
    for (std::size_t k = rep.levels.size() / 2; k < rep.levels.size(); ++k)
        d.limsup_ratio = std::max(d.limsup_ratio, rep.levels[k].average / a0);
    d.exponent = rep.c3 == 0.0 ? 0.0 : 2.0 * rep.c3 / (1.0 - rep.rho) * rep.dini.value;
    d.bound = std::exp(d.exponent);
    d.holds = d.limsup_ratio <= d.bound * (1.0 + margin);
    return d;
}

/// log(avg_(l+1)) <= log(avg_l) + 2 C3 omega(rho^(l-1)) + margin for every consecutive pair.
inline bool check_log_increments(const IterationReport& rep, double margin, double* worst_slack = nullptr) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < rep.levels.size(); ++k) {
        const double lhs = std::log(rep.levels[k + 1].average);
        const double rhs = std::log(rep.levels[k].average) + 2.0 * rep.c3 * rep.levels[k].omega;
        worst = std::max(worst, lhs - rhs);
    }
    if (worst_slack) *worst_slack = worst;
    return worst <= margin;
}

/// Largest |vol_l / vol_(l+1) * rho^n - 1| over consecutive levels.
inline double measure_ratio_error(const IterationReport& rep) {
    double e = 0.0;
    for (std::size_t k = 0; k + 1 < rep.levels.size(); ++k)
        e = std::max(e, std::abs(rep.levels[k].volume / rep.levels[k + 1].volume * std::pow(rep.rho, rep.dim) - 1.0));
    return e;
}

struct TelescopingCheck {
    double sum = 0.0;    ///< sum_{l >= l0-1} omega(rho^l), truncated at `terms`
    double bound = 0.0;  ///< (1 - rho)^-1 * int_0^{rho^(l0-2)} omega / t
    bool holds = false;
};

/// The modulus is sampled down to rho^(l0 - 1 + terms) so every summand is a grid value.
inline TelescopingCheck telescoping_check(const CoefficientField& A, const CoefficientField& Abar, double rho, int l0,
                                          int terms = 40, std::size_t samples = 1024) {
    if (!(rho > 0.0 && rho < 1.0) || l0 < 2 || terms < 1) throw InvalidArgument("telescoping_check: bad parameters");
    std::vector<double> grid;
    for (int l = l0 - 2 + terms; l >= l0 - 2; --l) grid.push_back(std::pow(rho, l));
    const DiniModulus w = estimate_modulus(A, Abar, grid, samples);
    TelescopingCheck t;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) t.sum += w.values()[k];
    const DiniIntegral di = dini_integral(w, grid.back());
    t.bound = di.value / (1.0 - rho);
    t.holds = t.sum <= t.bound;
    return t;
}

/// sum_{l = l0}^{l0 + L - 1} 2 log(1 + C3 omega(rho^(l-1))) for each L in `lengths`,
/// omega sampled directly at every radius (no grid).
inline std::vector<double> accumulated_log_products(const CoefficientField& A, const CoefficientField& Abar,
                                                    double rho, int l0, double c3, const std::vector<int>& lengths,
                                                    std::size_t samples = 1024) {
    int longest = 0;
    for (int L : lengths) longest = std::max(longest, L);
    std::vector<double> grid;
    for (int l = l0 - 2 + longest; l >= l0 - 1; --l) grid.push_back(std::pow(rho, l));
    const DiniModulus w = estimate_modulus(A, Abar, grid, samples);
    std::vector<double> out;
    for (int L : lengths) {
        double s = 0.0;
        for (int l = l0; l < l0 + L; ++l) s += 2.0 * std::log1p(c3 * w.values()[grid.size() - 1 - (l - l0)]);
        out.push_back(s);
    }
    return out;
}

/// Measured C2 over the calibration family Abar = I, A = (1 + eps |x|^beta) I,
/// eps in {0.1, 0.2}, beta in {0.5, 1}, rho = 1/sqrt(2).
inline double calibrate_c2(int cells = 48, std::vector<double>* per_member = nullptr) {
    const CoefficientField I = identity_coefficient(3);
    double worst = 0.0;
    for (double eps : {0.1, 0.2})
        for (double beta : {0.5, 1.0}) {
            IterationOptions opt;
            opt.rho = 1.0 / std::sqrt(2.0);
            opt.mesh.cells = cells;
            const IterationReport rep =
                run_iteration(perturbed_coefficient(I, {Perturbation::Kind::power, eps, beta}), I, opt);
            if (per_member) per_member->push_back(rep.c2_max);
            worst = std::max(worst, rep.c2_max);
        }
    return worst;
}

}  // namespace conelab
