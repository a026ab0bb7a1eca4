#include "conelab/weak_laplacian.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace conelab;

namespace {

const double kPi = std::numbers::pi;

SampledFunction fn(std::function<double(const Point&)> f) { return SampledFunction::exact(std::move(f)); }

std::shared_ptr<const CrossSectionSpectrum> half_plane_cone() {
    return std::make_shared<const CrossSectionSpectrum>(circle_spectrum(kPi));
}

}  // namespace

TEST(Bump, DerivativesMatchCentralDifferences) {
    for (int n : {2, 3}) {
        const TestFunction phi = bump(Point::Constant(n, 0.1), 0.8);
        Point x = Point::Constant(n, 0.1);
        x[0] += 0.31;
        x[n - 1] -= 0.17;
        double prev = 0.0;
        for (double e : {1e-2, 5e-3}) {
            double lap = 0.0;
            double gerr = 0.0;
            for (int d = 0; d < n; ++d) {
                Point xp = x, xm = x;
                xp[d] += e;
                xm[d] -= e;
                gerr = std::max(gerr, std::abs((phi.value(xp) - phi.value(xm)) / (2 * e) - phi.gradient(x)[d]));
                lap += (phi.value(xp) - 2 * phi.value(x) + phi.value(xm)) / (e * e);
            }
            const double err = std::max(gerr, std::abs(lap - phi.laplacian(x)));
            if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.5);
            prev = err;
        }
    }
}

TEST(Bump, CenterLaplacianAndNorms) {
    // Laplacian of (1 - |x|^2)^3 at 0 is -6n; sup |grad| = 6 sqrt(1/5) (4/5)^2.
    for (int n : {1, 2, 3}) {
        const TestFunction phi = bump(Point::Zero(n), 1.0);
        EXPECT_NEAR(phi.laplacian(Point::Zero(n)), -6.0 * n, 1e-14);
        EXPECT_NEAR(phi.sup_gradient(), 6.0 * std::sqrt(0.2) * 0.64, 1e-14);
        EXPECT_NEAR(phi.e_norm(), 1.0 + 1.7173 + 6.0 * n, 1e-4);
    }
    const TestFunction phi = bump(point({0.0, 0.0}), 0.5);
    double g = 0.0, l = 0.0;
    for (int k = 0; k <= 20000; ++k) {
        const Point x = point({0.5 * k / 20000.0, 0.0});
        g = std::max(g, phi.gradient(x).norm());
        l = std::max(l, std::abs(phi.laplacian(x)));
        EXPECT_GE(phi.value(x), 0.0);
    }
    EXPECT_NEAR(g, phi.sup_gradient(), 1e-6 * g);
    EXPECT_DOUBLE_EQ(l, phi.sup_laplacian());
    EXPECT_EQ(phi.value(point({0.5, 0.0})), 0.0);
    EXPECT_EQ(phi.laplacian(point({0.7, 0.1})), 0.0);
    EXPECT_EQ(phi.gradient(point({0.3, 0.6})).norm(), 0.0);
    // C^2 across the boundary: derivatives vanish from inside.
    EXPECT_LT(std::abs(phi.profile_laplacian(0.5 - 1e-9)), 1e-6);
}

TEST(Bump, LaplacianIntegratesToZero) {
    const SampledFunction one = fn([](const Point&) { return 1.0; });
    EXPECT_NEAR(distributional_laplacian(one, bump(point({0.2}), 0.3)), 0.0, 1e-8);
    EXPECT_NEAR(distributional_laplacian(one, bump(point({0.2, -0.1}), 0.3)), 0.0, 1e-8);
    EXPECT_NEAR(distributional_laplacian(one, bump(point({0.2, -0.1, 0.3}), 0.3)), 0.0, 1e-8);
    // int phi = pi rho^2 / 4 in the plane
    EXPECT_NEAR(pair(one, bump(point({0.0, 0.0}), 0.3)).phi_integral, kPi * 0.09 / 4.0, 1e-12);
}

TEST(Bump, DomainAndConeSupportRules) {
    const Ball dom{point({0.0, 0.0}), 1.0};
    EXPECT_NO_THROW(bump(point({0.5, 0.0}), 0.5, Geometry::flat(2), dom));
    EXPECT_THROW(bump(point({0.5, 0.0}), 0.6, Geometry::flat(2), dom), InvalidArgument);
    EXPECT_THROW(bump(point({0.0, 0.0}), 0.0), InvalidArgument);
    const Geometry quarter = Geometry::cone(std::make_shared<const CrossSectionSpectrum>(circle_spectrum(kPi / 2)));
    // The cut ray sits at angle pi/4 from the center: distance r0 sin(pi/4).
    EXPECT_NO_THROW(bump(point({1.0, 0.1}), 0.7, quarter));
    EXPECT_THROW(bump(point({1.0, 0.1}), 0.71, quarter), InvalidArgument);
    const Geometry sphere = Geometry::cone(std::make_shared<const CrossSectionSpectrum>(sphere_spectrum(0.7)));
    EXPECT_NO_THROW(bump(point({0.0, 0.0, 0.0}), 0.5, sphere));
    EXPECT_THROW(bump(point({1.0, 0.5, 0.5}), 0.2, sphere), InvalidArgument);
    EXPECT_THROW(bump(point({0.5, 0.1}), 0.6, Geometry::cone(half_plane_cone()), Ball{point({0.0, 0.0}), 1.0}),
                 InvalidArgument);
}

TEST(ConeBump, VertexBumpMeasureIdentities) {
    const SampledFunction one = fn([](const Point&) { return 1.0; });
    for (double theta : {kPi, 1.5 * kPi, 2 * kPi}) {
        const Geometry g = Geometry::cone(std::make_shared<const CrossSectionSpectrum>(circle_spectrum(theta)));
        const Pairing p = pair(one, bump(point({0.0, 0.0}), 0.5, g));
        EXPECT_NEAR(p.value, 0.0, 1e-8);
        // theta int_0^rho (1 - r^2/rho^2)^3 r dr = theta rho^2 / 8
        EXPECT_NEAR(p.phi_integral, theta * 0.25 / 8.0, 1e-12);
    }
    const Geometry s = Geometry::cone(std::make_shared<const CrossSectionSpectrum>(sphere_spectrum(0.7)));
    const Pairing p = pair(one, bump(point({0.0, 0.0, 0.0}), 0.5, s));
    EXPECT_NEAR(p.value, 0.0, 1e-8);
    // 4 pi s^2 int_0^rho (1 - r^2/rho^2)^3 r^2 dr = 4 pi s^2 rho^3 (16/315)
    EXPECT_NEAR(p.phi_integral, 4 * kPi * 0.49 * 0.125 * 16.0 / 315.0, 1e-12);
    // radial Laplacian of r^2 on an N-cone is 2N
    const SampledFunction r2 = fn([](const Point& x) { return x[0] * x[0]; });
    EXPECT_NEAR(pair(r2, bump(point({0.0, 0.0, 0.0}), 0.5, s)).value, 6.0 * p.phi_integral, 1e-10);
}

TEST(ConeBump, OffVertexDerivativesInConeCoordinates) {
    const Geometry g = Geometry::cone(half_plane_cone());
    // Center near xi = 0 so the support wraps across the seam.
    const TestFunction phi = bump(point({1.0, 0.05}), 0.4, g);
    const Point p = point({1.12, kPi - 0.1});
    const double e = 1e-5;
    const double dr = (phi.value(point({p[0] + e, p[1]})) - phi.value(point({p[0] - e, p[1]}))) / (2 * e);
    const double dxi = (phi.value(point({p[0], p[1] + e})) - phi.value(point({p[0], p[1] - e}))) / (2 * e) / p[0];
    EXPECT_NEAR(phi.gradient(p)[0], dr, 1e-8);
    EXPECT_NEAR(phi.gradient(p)[1], dxi, 1e-8);
    const double f = [&] {
        const double pr = phi.value(point({p[0] + 1e-4, p[1]})), mr = phi.value(point({p[0] - 1e-4, p[1]}));
        const double px = phi.value(point({p[0], p[1] + 1e-4})), mx = phi.value(point({p[0], p[1] - 1e-4}));
        const double c = phi.value(p);
        return (pr - 2 * c + mr) / 1e-8 + (pr - mr) / (2e-4 * p[0]) + (px - 2 * c + mx) / (1e-8 * p[0] * p[0]);
    }();
    EXPECT_NEAR(phi.laplacian(p), f, 1e-4);
    EXPECT_GT(phi.value(p), 0.0);
}

TEST(Pairing, ClosedFormOracles) {
    const TestFunction phi2 = bump(point({0.3, -0.2}), 0.45);
    EXPECT_NEAR(distributional_laplacian(fn([](const Point& x) { return x[0]; }), phi2), 0.0, 1e-8);
    const Pairing p = pair(fn([](const Point& x) { return x.squaredNorm(); }), phi2);
    EXPECT_NEAR(p.value, 4.0 * p.phi_integral, 1e-6);
    const TestFunction phi3 = bump(point({0.1, 0.2, -0.1}), 0.3);
    const Pairing q = pair(fn([](const Point& x) { return x.squaredNorm(); }), phi3);
    EXPECT_NEAR(q.value, 6.0 * q.phi_integral, 1e-6);
    // Cone harmonic r^2 phi_1 on the half-plane cone against an annular bump.
    const auto s = half_plane_cone();
    const ConeHarmonic h(s, {0.0, 1.0});
    const SampledFunction u = fn([&](const Point& x) { return h.value(x[0], point({x[1]})); });
    EXPECT_NEAR(distributional_laplacian(u, bump(point({1.0, 0.3}), 0.4, Geometry::cone(s))), 0.0, 1e-6);
}

TEST(Pairing, BilinearLocalAndBounded) {
    const TestFunction phi = bump(point({0.1, 0.1}), 0.3);
    const SampledFunction u = fn([](const Point& x) { return std::exp(x[0]) * std::sin(3 * x[1]) + x[0] * x[0]; });
    const SampledFunction w = fn([](const Point& x) { return std::cos(5 * x[0] * x[1]); });
    const double a = 2.5, b = -0.75;
    const double lhs = distributional_laplacian(a * u + b * w, phi);
    const double rhs = a * distributional_laplacian(u, phi) + b * distributional_laplacian(w, phi);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (std::abs(lhs) + 1.0));
    const TestFunction phi2 = bump(point({0.1, 0.1}), 0.3 * 1.7);
    EXPECT_NEAR(pair(u, phi2).value * 3.0, pair(3.0 * u, phi2).value, 1e-12);
    const SampledFunction far = fn([&](const Point& x) { return (x - phi.center()).norm() >= 0.3 ? 1e6 : u(x); });
    EXPECT_NEAR(distributional_laplacian(far, phi), distributional_laplacian(u, phi), 1e-12);
    for (const SampledFunction& f : {u, w}) {
        const Pairing p = pair(f, phi);
        EXPECT_LE(std::abs(p.value), p.u_l1 * phi.sup_laplacian());
    }
}

TEST(Pairing, SymmetryNull) {
    const SampledFunction odd = fn([](const Point& x) { return x[0] * std::exp(x[1] * x[1]) + std::pow(x[0], 3); });
    const Pairing p = pair(odd, bump(point({0.0, 0.4}), 0.35));
    EXPECT_NEAR(p.value, 0.0, 1e-12 * p.u_l1 * 100.0);
}

TEST(Pairing, RefusesUnresolvedSupport) {
    const Grid g = centered_grid(point({0.0, 0.0}), 1.0, 0.02);
    const SampledFunction u = SampledFunction::grid(GridFunction::sample(g, [](const Point& x) { return x[0]; }));
    try {
        pair(u, bump(point({0.0, 0.0}), 0.1));
        FAIL();
    } catch (const ResolutionError& e) {
        EXPECT_NEAR(e.minimum_admissible(), 0.16, 1e-12);
    }
    // Bilinear interpolation reproduces linear data, so resolved pairings vanish.
    EXPECT_NEAR(distributional_laplacian(u, bump(point({0.0, 0.0}), 0.2)), 0.0, 1e-10);
}

TEST(Certify, HarmonicAndSubharmonicInputs) {
    const Ball region{point({0.0, 0.0}), 1.0};
    const Certificate lin = certify_very_weak(fn([](const Point& x) { return x[0]; }), region, Sign::harmonic);
    EXPECT_TRUE(lin.verdict);
    EXPECT_EQ(lin.family_size, 64u);
    const SampledFunction sq = fn([](const Point& x) { return x.squaredNorm(); });
    const Certificate h = certify_very_weak(sq, region, Sign::harmonic);
    EXPECT_FALSE(h.verdict);
    EXPECT_TRUE(h.sub);
    EXPECT_FALSE(h.super);
    EXPECT_GT(h.worst.score, h.tol);
    // The witness reproduces.
    const Pairing w = pair(sq, bump(h.worst.center, h.worst.radius));
    EXPECT_DOUBLE_EQ(w.score, h.worst.score);
    EXPECT_TRUE(certify_very_weak(sq, region, Sign::sub).verdict);
    EXPECT_FALSE(certify_very_weak(sq, region, Sign::super).verdict);
    EXPECT_TRUE(certify_very_weak(-1.0 * sq, region, Sign::super).verdict);
    EXPECT_TRUE(certify_very_weak(fn([](const Point& x) { return x[0] * x[1] * x[2]; }), Ball{Point::Zero(3), 1.0},
                                  Sign::harmonic, {.family_size = 16})
                    .verdict);
}

TEST(Certify, ScoreScalesWithNoiseAmplitude) {
    const Ball region{point({0.0, 0.0}), 1.0};
    auto worst = [&](double a) {
        const Certificate c = certify_very_weak(
            fn([a](const Point& x) { return 2.0 + x[0] + a * std::sin(7 * x[0]) * std::sin(5 * x[1]); }), region,
            Sign::harmonic);
        return std::abs(c.worst.score);
    };
    const double s1 = worst(1e-4), s2 = worst(2e-4), s4 = worst(4e-4);
    EXPECT_NEAR(s2 / s1, 2.0, 0.01);
    EXPECT_NEAR(s4 / s1, 4.0, 0.02);
}

TEST(Certify, DeterministicAndScaleInvariant) {
    const Ball region{point({0.0, 0.0}), 1.0};
    const SampledFunction u = fn([](const Point& x) { return x.squaredNorm() + x[0]; });
    const Certificate a = certify_very_weak(u, region, Sign::sub, {.seed = 5});
    const Certificate b = certify_very_weak(u, region, Sign::sub, {.seed = 5, .workers = 3});
    EXPECT_EQ(a.max_score, b.max_score);
    EXPECT_EQ(a.min_score, b.min_score);
    EXPECT_EQ(a.worst.radius, b.worst.radius);
    const Certificate c = certify_very_weak(u, region, Sign::sub, {.seed = 6});
    EXPECT_NE(a.max_score, c.max_score);
    const Certificate d = certify_very_weak(7.0 * u, region, Sign::sub, {.seed = 5});
    EXPECT_NEAR(d.max_score, a.max_score, 1e-13);
}

TEST(Certify, FamilyStaysInRegionAndAboveResolution) {
    const Ball region{point({0.5, -0.5}), 2.0};
    const auto fam = bump_family(Geometry::flat(2), region, 64, 0.01);
    ASSERT_EQ(fam.size(), 64u);
    for (const auto& phi : fam) {
        EXPECT_LE((phi.center() - region.center).norm() + phi.radius(), region.radius * (1 + 1e-12));
        EXPECT_GE(phi.radius(), 0.08 * (1 - 1e-12));
        EXPECT_LE(phi.radius(), 0.5 * (1 + 1e-12));
    }
    EXPECT_THROW(bump_family(Geometry::flat(2), {point({0.0, 0.0}), 0.2}, 8, 0.01), ResolutionError);
}

TEST(Certify, ConeHarmonicAndSubharmonic) {
    const auto s = half_plane_cone();
    const Geometry g = Geometry::cone(s);
    const ConeHarmonic h(s, {0.5, 1.0, -0.3});
    const Ball region{point({0.0, 0.0}), 1.0};
    const auto u = fn([&](const Point& x) { return h.value(x[0], point({x[1]})); });
    EXPECT_TRUE(certify_very_weak(u, g, region, Sign::harmonic).verdict);
    const auto r2 = fn([](const Point& x) { return x[0] * x[0]; });
    const Certificate c = certify_very_weak(r2, g, region, Sign::harmonic);
    EXPECT_FALSE(c.harmonic);
    EXPECT_TRUE(c.sub);
}

TEST(WeylDemo, ConeHarmonicLipschitzMatchesSpectralBound) {
    // u = r^2 phi_1 on the half-plane cone lifts to sqrt(2/pi)(x^2 - y^2); |grad| = 2 sqrt(2/pi) r.
    const auto s = half_plane_cone();
    const ConeHarmonic h(s, {0.0, 1.0});
    auto u = [&](const Point& x) { return h.value(x[0], point({x[1]})); };
    WeylOptions opt;
    opt.t_grid = geometric_times(1e-1, 1e-3, 6);
    const WeylReport rep = weyl_demo_cone(u, s, 4.0, opt, u);
    EXPECT_TRUE(rep.pipeline.stable);
    EXPECT_TRUE(rep.pipeline.lipschitz);
    EXPECT_NEAR(rep.lipschitz_constant, 2.0 * std::sqrt(2.0 / kPi) * 0.5, 1e-3);
    EXPECT_LT(*rep.recovery_error, 1e-8);
}

TEST(WeylDemo, RefusesUncertifiedInput) {
    EXPECT_THROW(weyl_demo(fn([](const Point& x) { return x.norm(); }), 4.0, point({0.0, 0.0})), CertificationError);
}

TEST(WeylDemo, IsolatedSpikesAreNegligible) {
    // Sixteen corrupted nodes carry L1 mass 16 h^2; their effect on the recovered
    // field is at most mass / (4 pi t_min) and must shrink with h.
    const double t_min = 4e-3;
    std::vector<double> errors;
    for (double h : {std::sqrt(t_min) / 2, std::sqrt(t_min) / 4}) {
        WeylOptions opt;
        opt.h = h;
        opt.t_grid = geometric_times(1e-1, t_min, 5);
        const Grid g = centered_grid(point({0.0, 0.0}), 4.0 + kTrustSigmas * std::sqrt(0.1), h);
        std::vector<double> vals = GridFunction::sample(g, [](const Point& x) { return 3.0 + x[0]; }).values();
        for (int k = 0; k < 16; ++k) {
            const double x = 0.3 * std::cos(k) * (1 + k % 3), y = 0.3 * std::sin(1.7 * k);
            vals[g.index(static_cast<int>(std::lround((x - g.origin[0]) / h)),
                         static_cast<int>(std::lround((y - g.origin[1]) / h)))] += 1.0;
        }
        const double mass = 16 * h * h;
        // score <= spike mass / |B_{8h}| since u >= 1 on the region
        opt.certify.tol = mass / (kPi * 64 * h * h);
        const WeylReport rep = weyl_demo(SampledFunction::grid(GridFunction(g, vals)), 4.0, point({0.0, 0.0}), opt,
                                         [](const Point& x) { return 3.0 + x[0]; });
        EXPECT_LE(*rep.recovery_error, mass / (4 * kPi * t_min));
        errors.push_back(*rep.recovery_error);
    }
    EXPECT_GT(errors[0] / errors[1], 3.0);
}

TEST(PoissonDecomposition, RemainderIsHarmonic) {
    auto mesh = std::make_shared<const Mesh>(box_mesh(2, -1.0, 1.0, 128));
    auto f = [](const Point& x) { return std::sin(3 * x[0]) * std::cos(2 * x[1]); };
    // Laplacian of -sin(3x) cos(2y) / 13 is f; 1 + xy is harmonic.
    const SampledFunction u = fn([](const Point& x) { return -std::sin(3 * x[0]) * std::cos(2 * x[1]) / 13.0 + 1 + x[0] * x[1]; });
    const DecompositionReport rep = poisson_decomposition(u, f, mesh, {point({0.0, 0.0}), 0.5}, {.tol = 1e-5});
    EXPECT_LT(rep.source_residual, 1e-12);
    EXPECT_TRUE(rep.remainder.verdict) << rep.remainder.worst.score;
    EXPECT_FALSE(rep.original.verdict);
    // f = 0 gives w = 0
    const DecompositionReport zero =
        poisson_decomposition(fn([](const Point& x) { return x[0]; }), [](const Point&) { return 0.0; }, mesh,
                              {point({0.0, 0.0}), 0.5}, {.family_size = 4});
    for (double v : zero.w.values) EXPECT_EQ(v, 0.0);
}
