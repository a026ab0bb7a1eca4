#pragma once

// Bump test functions with closed-form derivatives, the pairing u -> int u Laplacian(phi),
// very-weak sign certificates over bump families, and the cutoff/smoothing demo.
//
// Cone points are coordinates (r, sigma): (r, xi) with xi in [0, theta) over a
// circle, (r, polar, azimuth) over a sphere.

#include "conelab/certificate.hpp"
#include "conelab/cone_spectral.hpp"
#include "conelab/fem.hpp"
#include "conelab/heat.hpp"
#include "conelab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace conelab {

struct Geometry {
    enum class Kind { flat, cone };
    Kind kind = Kind::flat;
    int dim = 2;  ///< ambient dimension of flat space; N for cones
    std::shared_ptr<const CrossSectionSpectrum> cross;

    static Geometry flat(int n) {
        if (n < 1 || n > 3) throw InvalidArgument("Geometry::flat: dimension must be 1, 2 or 3");
        return {Kind::flat, n, nullptr};
    }
    static Geometry cone(std::shared_ptr<const CrossSectionSpectrum> s) {
        if (!s) throw InvalidArgument("Geometry::cone: missing cross-section");
        const int N = static_cast<int>(std::lround(s->N()));
        return {Kind::cone, N, std::move(s)};
    }

    bool is_cone() const noexcept { return kind == Kind::cone; }
    bool circle() const noexcept { return is_cone() && cross->kind() == CrossSectionSpectrum::Kind::circle; }
    /// Length of a point's coordinate vector.
    int coord_dim() const noexcept { return is_cone() ? 1 + cross->intrinsic_dim() : dim; }
    std::string describe() const { return is_cone() ? cross->describe() : "flat:" + std::to_string(dim); }
};

/// Ball used as a working domain; for cones the center is the vertex.
struct Ball {
    Point center;
    double radius = 0.0;
};

namespace detail {

inline double wrap_angle(double d, double theta) {
    d = std::fmod(d, theta);
    if (d > 0.5 * theta) d -= theta;
    if (d <= -0.5 * theta) d += theta;
    return d;
}

}  // namespace detail

/// phi(x) = (1 - d^2/rho^2)^3 for d = dist(x, center) < rho, zero beyond.
class TestFunction {
public:
    TestFunction(Geometry g, Point center, double rho, bool at_vertex)
        : geom_(std::move(g)), center_(std::move(center)), rho_(rho), vertex_(at_vertex) {
        eff_dim_ = !geom_.is_cone() ? geom_.dim : (vertex_ ? geom_.cross->N() : 2.0);
    }

    const Geometry& geometry() const noexcept { return geom_; }
    const Point& center() const noexcept { return center_; }
    double radius() const noexcept { return rho_; }
    bool at_vertex() const noexcept { return vertex_; }
    /// Dimension entering the radial Laplacian phi'' + (dim - 1)/d phi'.
    double radial_dimension() const noexcept { return eff_dim_; }

    double distance(const Point& p) const {
        if (!geom_.is_cone()) return (p - center_).norm();
        if (vertex_) return p[0];
        const double d = detail::wrap_angle(p[1] - center_[1], geom_.cross->parameter());
        if (std::abs(d) >= std::numbers::pi) return p[0] + center_[0];
        return std::sqrt(std::max(0.0, p[0] * p[0] + center_[0] * center_[0] - 2.0 * p[0] * center_[0] * std::cos(d)));
    }

    double profile(double d) const {
        if (d >= rho_) return 0.0;
        const double q = 1.0 - d * d / (rho_ * rho_);
        return q * q * q;
    }
    double profile_derivative(double d) const {
        if (d >= rho_) return 0.0;
        const double q = 1.0 - d * d / (rho_ * rho_);
        return -6.0 * d / (rho_ * rho_) * q * q;
    }
    double profile_laplacian(double d) const {
        if (d >= rho_) return 0.0;
        const double s = d * d / (rho_ * rho_);
        return -6.0 / (rho_ * rho_) * (1.0 - s) * (eff_dim_ * (1.0 - s) - 4.0 * s);
    }

    double value(const Point& p) const { return profile(distance(p)); }
    double laplacian(const Point& p) const { return profile_laplacian(distance(p)); }

    /// Euclidean gradient in flat space; (d/dr, r^{-1} d/dxi) components on circle cones;
    /// the radial component alone for vertex bumps.
    Point gradient(const Point& p) const {
        const double d = distance(p);
        const double dp = profile_derivative(d);
        if (!geom_.is_cone()) {
            if (d == 0.0) return Point::Zero(geom_.dim);
            return dp / d * (p - center_);
        }
        if (vertex_) {
            Point out = Point::Zero(geom_.coord_dim() - 1);
            out[0] = dp;
            return out;
        }
        const double a = detail::wrap_angle(p[1] - center_[1], geom_.cross->parameter());
        const double x = p[0] * std::cos(a) - center_[0];
        const double y = p[0] * std::sin(a);
        if (d == 0.0) return point({0.0, 0.0});
        const double gx = dp * x / d;
        const double gy = dp * y / d;
        return point({gx * std::cos(a) + gy * std::sin(a), -gx * std::sin(a) + gy * std::cos(a)});
    }

    double sup_value() const noexcept { return 1.0; }
    /// Attained at d^2 = rho^2 / 5.
    double sup_gradient() const noexcept { return 96.0 / (25.0 * std::sqrt(5.0)) / rho_; }
    /// Attained at the center.
    double sup_laplacian() const noexcept { return 6.0 * eff_dim_ / (rho_ * rho_); }
    double e_norm() const noexcept { return sup_value() + sup_gradient() + sup_laplacian(); }

private:
    Geometry geom_;
    Point center_;
    double rho_ = 0.0;
    bool vertex_ = false;
    double eff_dim_ = 2.0;
};

/// Flat bump, or a cone bump centered at `x0` given in cone coordinates. A cone
/// bump with x0[0] == 0 is radial about the vertex.
inline TestFunction bump(const Point& x0, double rho, const Geometry& g, const std::optional<Ball>& domain = std::nullopt) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("bump: support radius must be positive");
    if (static_cast<int>(x0.size()) != g.coord_dim()) throw InvalidArgument("bump: center has the wrong number of coordinates");
    if (!g.is_cone()) {
        if (domain && (x0 - domain->center).norm() + rho > domain->radius * (1.0 + 1e-12))
            throw InvalidArgument("bump: support exits the domain");
        return TestFunction(g, x0, rho, false);
    }
    const double r0 = x0[0];
    if (r0 < 0.0) throw InvalidArgument("bump: negative cone radius");
    if (domain && r0 + rho > domain->radius * (1.0 + 1e-12)) throw InvalidArgument("bump: support exits the domain");
    if (r0 == 0.0) return TestFunction(g, Point::Zero(g.coord_dim()), rho, true);
    if (!g.circle()) throw InvalidArgument("bump: off-vertex bumps need a circle cross-section");
    // The support must avoid the vertex and the cut ray opposite the center.
    const double half = 0.5 * g.cross->parameter();
    const double reach = r0 * (half >= 0.5 * std::numbers::pi ? 1.0 : std::sin(half));
    if (rho >= reach) throw InvalidArgument("bump: support meets the vertex or the cut locus of its center");
    Point c = x0;
    c[1] = std::fmod(std::fmod(c[1], g.cross->parameter()) + g.cross->parameter(), g.cross->parameter());
    return TestFunction(g, c, rho, false);
}

inline TestFunction bump(const Point& x0, double rho) { return bump(x0, rho, Geometry::flat(static_cast<int>(x0.size()))); }

// ---------------------------------------------------------------------------
// Sampled data

/// A function together with the spacing of the data behind it (0 for closed forms).
struct SampledFunction {
    std::function<double(const Point&)> eval;
    double h = 0.0;
    std::string label;

    double operator()(const Point& x) const { return eval(x); }

    static SampledFunction exact(std::function<double(const Point&)> f, std::string label = "callable") {
        return {std::move(f), 0.0, std::move(label)};
    }
    /// Multilinear interpolation of grid values; zero outside the grid.
    static SampledFunction grid(GridFunction v, std::string label = "grid") {
        auto p = std::make_shared<const GridFunction>(std::move(v));
        const double h = p->grid().h;
        return {[p](const Point& x) { return p->interpolate(x); }, h, std::move(label)};
    }
    /// P1 interpolation of a finite element field.
    static SampledFunction field(const DiscreteField& u, std::string label = "fem") {
        auto loc = std::make_shared<const PointLocator>(u.mesh);
        auto vals = std::make_shared<const std::vector<double>>(u.values);
        return {[loc, vals](const Point& x) { return loc->interpolate(*vals, x); }, u.mesh->h, std::move(label)};
    }
};

inline SampledFunction operator-(const SampledFunction& a, const SampledFunction& b) {
    return {[a, b](const Point& x) { return a(x) - b(x); }, std::max(a.h, b.h), a.label + "-" + b.label};
}

inline SampledFunction operator+(const SampledFunction& a, const SampledFunction& b) {
    return {[a, b](const Point& x) { return a(x) + b(x); }, std::max(a.h, b.h), a.label + "+" + b.label};
}

inline SampledFunction operator*(double c, const SampledFunction& a) {
    return {[a, c](const Point& x) { return c * a(x); }, a.h, a.label};
}

// ---------------------------------------------------------------------------
// Quadrature over the support of a bump

struct QuadratureOptions {
    int min_radial = 16;       ///< radial nodes across the support radius
    int min_angular = 64;
    double nodes_per_h = 4.0;  ///< radial and tangential node density for sampled data
    int vertex_panels = 8;     ///< geometric panels toward a cone vertex, ratio 1/2
};

struct SupportQuadrature {
    std::vector<Point> nodes;  ///< in the coordinates of the geometry
    std::vector<double> weights;
};

namespace detail {

/// Gauss panels of 8 nodes on [a, b], `count` nodes in total.
inline void radial_panels(double a, double b, int count, std::vector<double>& r, std::vector<double>& w) {
    const int panels = std::max(1, (count + 7) / 8);
    const double len = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const GaussRule g = gauss_legendre(8, a + p * len, a + (p + 1) * len);
        r.insert(r.end(), g.nodes.begin(), g.nodes.end());
        w.insert(w.end(), g.weights.begin(), g.weights.end());
    }
}

inline int ceil_even(double v) {
    int k = static_cast<int>(std::ceil(v));
    return k + (k % 2);
}

}  // namespace detail

/// Nodes and weights of the geometry's measure restricted to supp phi. Angular
/// rules are symmetric under reflections through the center.
inline SupportQuadrature support_quadrature(const TestFunction& phi, double h, const QuadratureOptions& opt = {}) {
    const double rho = phi.radius();
    const Geometry& g = phi.geometry();
    const double density = h > 0.0 ? opt.nodes_per_h / h : 0.0;
    const int nr = std::max(opt.min_radial, static_cast<int>(std::ceil(density * rho)));
    SupportQuadrature q;
    std::vector<double> r, wr;
    if (phi.at_vertex()) {
        // Geometric panels [rho 2^{-k-1}, rho 2^{-k}], the innermost reaching 0.
        const int per = std::max(8, nr / 2);
        for (int k = 0; k < opt.vertex_panels; ++k) {
            const double b = rho * std::ldexp(1.0, -k);
            const double a = k + 1 == opt.vertex_panels ? 0.0 : 0.5 * b;
            detail::radial_panels(a, b, k == 0 ? nr : per, r, wr);
        }
        const CrossSectionSpectrum& s = *g.cross;
        const int res = std::max(opt.min_angular, detail::ceil_even(density * s.parameter() * rho));
        const CrossQuadrature cq = s.quadrature(s.kind() == CrossSectionSpectrum::Kind::circle ? res : std::max(16, res / 4));
        const double N = s.N();
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < cq.nodes.size(); ++j) {
                Point p(1 + cq.nodes[j].size());
                p[0] = r[i];
                p.tail(cq.nodes[j].size()) = cq.nodes[j];
                q.nodes.push_back(p);
                q.weights.push_back(wr[i] * std::pow(r[i], N - 1.0) * cq.weights[j]);
            }
        return q;
    }
    const int n = g.is_cone() ? 2 : g.dim;
    if (n == 1) {
        detail::radial_panels(-rho, rho, 2 * nr, r, wr);
        for (std::size_t i = 0; i < r.size(); ++i) {
            q.nodes.push_back(point({phi.center()[0] + r[i]}));
            q.weights.push_back(wr[i]);
        }
        return q;
    }
    detail::radial_panels(0.0, rho, nr, r, wr);
    std::vector<Point> offsets;
    std::vector<double> ow;
    if (n == 2) {
        const int m = std::max(opt.min_angular, detail::ceil_even(density * 2.0 * std::numbers::pi * rho));
        for (std::size_t i = 0; i < r.size(); ++i)
            for (int j = 0; j < m; ++j) {
                const double a = 2.0 * std::numbers::pi * (j + 0.5) / m;
                offsets.push_back(point({r[i] * std::cos(a), r[i] * std::sin(a)}));
                ow.push_back(wr[i] * r[i] * 2.0 * std::numbers::pi / m);
            }
    } else {
        const int k = std::max(opt.min_angular / 4, detail::ceil_even(density * std::numbers::pi * rho));
        const GaussRule gz = gauss_legendre(k, -1.0, 1.0);
        const int m = 2 * k;
        for (std::size_t i = 0; i < r.size(); ++i)
            for (int a = 0; a < k; ++a) {
                const double z = gz.nodes[a];
                const double s = std::sqrt(1.0 - z * z);
                for (int j = 0; j < m; ++j) {
                    const double az = 2.0 * std::numbers::pi * (j + 0.5) / m;
                    offsets.push_back(r[i] * point({s * std::cos(az), s * std::sin(az), z}));
                    ow.push_back(wr[i] * r[i] * r[i] * gz.weights[a] * 2.0 * std::numbers::pi / m);
                }
            }
    }
    if (!g.is_cone()) {
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            q.nodes.push_back(phi.center() + offsets[i]);
            q.weights.push_back(ow[i]);
        }
        return q;
    }
    // Develop the support into the plane with the center at (r0, 0).
    const double r0 = phi.center()[0];
    const double xi0 = phi.center()[1];
    const double theta = g.cross->parameter();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const double x = r0 + offsets[i][0];
        const double y = offsets[i][1];
        double xi = std::fmod(xi0 + std::atan2(y, x), theta);
        if (xi < 0.0) xi += theta;
        q.nodes.push_back(point({std::hypot(x, y), xi}));
        q.weights.push_back(ow[i]);
    }
    return q;
}

// ---------------------------------------------------------------------------
// Pairing

struct Pairing {
    double value = 0.0;        ///< int u Laplacian(phi)
    double u_l1 = 0.0;         ///< int over supp phi of |u|
    double phi_integral = 0.0; ///< int phi
    double score = 0.0;        ///< value / (u_l1 * |phi|_E), 0 when u vanishes on the support
};

inline void require_resolved(const TestFunction& phi, double h) {
    if (h > 0.0 && phi.radius() < 8.0 * h)
        throw ResolutionError("pairing: support radius " + std::to_string(phi.radius()) +
                                  " has fewer than 16 data points across",
                              8.0 * h);
}

inline Pairing pair(const SampledFunction& u, const TestFunction& phi, const QuadratureOptions& opt = {}) {
    require_resolved(phi, u.h);
    const SupportQuadrature q = support_quadrature(phi, u.h, opt);
    Pairing p;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        const double d = phi.distance(q.nodes[i]);
        const double v = u(q.nodes[i]);
        p.value += q.weights[i] * v * phi.profile_laplacian(d);
        p.u_l1 += q.weights[i] * std::abs(v);
        p.phi_integral += q.weights[i] * phi.profile(d);
    }
    p.score = p.u_l1 > 0.0 ? p.value / (p.u_l1 * phi.e_norm()) : 0.0;
    return p;
}

/// int u Laplacian(phi) over the geometry's measure.
inline double distributional_laplacian(const SampledFunction& u, const TestFunction& phi, const QuadratureOptions& opt = {}) {
    return pair(u, phi, opt).value;
}

/// int f phi with the rule used for pairings.
inline double integrate_against(const SampledFunction& f, const TestFunction& phi, const QuadratureOptions& opt = {}) {
    const SupportQuadrature q = support_quadrature(phi, f.h, opt);
    double s = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * f(q.nodes[i]) * phi.value(q.nodes[i]);
    return s;
}

// ---------------------------------------------------------------------------
// Certification

struct CertifyOptions {
    std::size_t family_size = 64;
    double tol = 1e-6;
    std::uint64_t seed = 0;   ///< random shift of the Sobol family, 0 for none
    double h = -1.0;          ///< data spacing override; < 0 takes it from u
    unsigned workers = 1;
    QuadratureOptions quadrature;
};

/// Radii log-uniform in [r_min, R/4] with r_min = 8h for sampled data and R/64
/// otherwise; supports stay inside the region.
inline std::vector<TestFunction> bump_family(const Geometry& g, const Ball& region, std::size_t count, double h,
                                             std::uint64_t seed = 0) {
    const double R = region.radius;
    const double r_hi = R / 4.0;
    const double r_lo = h > 0.0 ? 8.0 * h : R / 64.0;
    if (r_lo > r_hi)
        throw ResolutionError("bump_family: region too small for the data spacing", 32.0 * h);
    std::vector<TestFunction> out;
    out.reserve(count);
    if (!g.is_cone()) {
        const int n = g.dim;
        std::uint64_t skip = 0;
        while (out.size() < count) {
            const auto pts = shifted_sobol_cube(n + 1, 4 * count, seed, skip);
            skip += pts.size();
            for (const Point& s : pts) {
                Point c = 2.0 * s.head(n) - Point::Ones(n);
                if (c.squaredNorm() > 1.0) continue;
                const double rho = r_lo * std::pow(r_hi / r_lo, s[n]);
                out.push_back(bump(region.center + (R - rho) * c, rho, g));
                if (out.size() == count) break;
            }
        }
        return out;
    }
    const auto pts = shifted_sobol_cube(3, count, seed);
    const double half = 0.5 * g.cross->parameter();
    const double reach = half >= 0.5 * std::numbers::pi ? 1.0 : std::sin(half);
    for (std::size_t k = 0; k < count; ++k) {
        const Point& s = pts[k];
        const double rho = r_lo * std::pow(r_hi / r_lo, s[0]);
        // Every fourth member sits on the vertex; the rest avoid it.
        const double r_min = 1.05 * rho / reach;
        if (!g.circle() || k % 4 == 0 || r_min + rho > R) {
            out.push_back(bump(Point::Zero(g.coord_dim()), rho, g));
            continue;
        }
        const double r0 = r_min + s[1] * (R - rho - r_min);
        out.push_back(bump(point({r0, s[2] * g.cross->parameter()}), rho, g));
    }
    return out;
}

/// Sign test of int u Laplacian(phi) over a family of nonnegative bumps. Scores are
/// relative to |u|_{L1(supp phi)} |phi|_E; harmonic means |score| <= tol for all,
/// sub means score >= -tol, super means score <= tol.
/// `members`, when given, receives every family member with its pairing and score.
inline Certificate certify_very_weak(const SampledFunction& u, const Geometry& g, const Ball& region, Sign sign,
                                     const CertifyOptions& opt = {}, std::vector<Witness>* members = nullptr) {
    if (opt.family_size == 0) throw InvalidArgument("certify_very_weak: empty family");
    if (!(opt.tol >= 0.0)) throw InvalidArgument("certify_very_weak: negative tolerance");
    const double h = opt.h >= 0.0 ? opt.h : u.h;
    const auto family = bump_family(g, region, opt.family_size, h, opt.seed);
    std::vector<Pairing> results(family.size());
    SampledFunction uh = u;
    uh.h = h;
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t k = begin; k < family.size(); k += step) results[k] = pair(uh, family[k], opt.quadrature);
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(family.size())));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
        for (auto& t : pool) t.join();
    }
    Certificate c;
    c.requested = sign;
    c.tol = opt.tol;
    c.family_size = family.size();
    c.max_score = -std::numeric_limits<double>::infinity();
    c.min_score = std::numeric_limits<double>::infinity();
    std::size_t i_max = 0, i_min = 0, i_abs = 0;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const double s = results[k].score;
        if (s > c.max_score) c.max_score = s, i_max = k;
        if (s < c.min_score) c.min_score = s, i_min = k;
        if (std::abs(s) > std::abs(results[i_abs].score)) i_abs = k;
    }
    c.sub = c.min_score >= -opt.tol;
    c.super = c.max_score <= opt.tol;
    c.harmonic = c.sub && c.super;
    const std::size_t w = sign == Sign::harmonic ? i_abs : (sign == Sign::sub ? i_min : i_max);
    c.verdict = sign == Sign::harmonic ? c.harmonic : (sign == Sign::sub ? c.sub : c.super);
    c.worst = {family[w].center(), family[w].radius(), results[w].value, results[w].score};
    if (members) {
        members->clear();
        for (std::size_t k = 0; k < family.size(); ++k)
            members->push_back({family[k].center(), family[k].radius(), results[k].value, results[k].score});
    }
    return c;
}

inline Certificate certify_very_weak(const SampledFunction& u, const Ball& region, Sign sign, const CertifyOptions& opt = {}) {
    return certify_very_weak(u, Geometry::flat(static_cast<int>(region.center.size())), region, sign, opt);
}

// ---------------------------------------------------------------------------
// Cone data lifted to the plane

/// For theta = 2 pi / m the circle cone is the quotient of the plane by rotations
/// through theta; u(r, xi) lifts to U(x) = u(|x|, arg x mod theta).
inline SampledFunction lift_to_plane(const std::function<double(const Point&)>& u_cone, const CrossSectionSpectrum& s,
                                     std::string label = "lift") {
    if (s.kind() != CrossSectionSpectrum::Kind::circle) throw InvalidArgument("lift_to_plane: circle cones only");
    const double theta = s.parameter();
    const double m = 2.0 * std::numbers::pi / theta;
    if (std::abs(m - std::round(m)) > 1e-9)
        throw InvalidArgument("lift_to_plane: theta must be 2 pi / m for an integer m");
    return SampledFunction::exact(
        [u_cone, theta](const Point& x) {
            double xi = std::fmod(std::atan2(x[1], x[0]), theta);
            if (xi < 0.0) xi += theta;
            return u_cone(point({x.norm(), xi}));
        },
        std::move(label));
}

// ---------------------------------------------------------------------------
// Cutoff and smoothing

struct WeylOptions {
    double h = 0.0;  ///< grid spacing, 0 -> sqrt(t_min) / 2
    std::vector<double> t_grid = geometric_times(1e-1, 1e-3, 12);
    CertifyOptions certify;
    PipelineOptions pipeline;
};

struct WeylReport {
    Certificate certificate;
    PipelineReport pipeline;
    double lipschitz_constant = 0.0;          ///< sup over B_{R/8} of |grad| at the smallest t
    std::optional<double> recovery_error;     ///< sup over B_{R/8} of |recovered - truth|
    std::size_t grid_nodes = 0;
    double h = 0.0;
};

/// chi = 1 on B_{R/2}, 0 off B_R, linear in |x - x0| between.
inline double weyl_cutoff(const Point& x, const Point& x0, double R) {
    return std::clamp((R - (x - x0).norm()) / (R / 2.0), 0.0, 1.0);
}

namespace detail {

inline WeylReport smooth_certified(const SampledFunction& u, double R, const Point& x0, const WeylOptions& opt,
                                   const std::function<double(const Point&)>& truth, Certificate cert) {
    if (!cert.verdict || !cert.harmonic)
        throw CertificationError("weyl_demo: input is not very-weak harmonic on B_{R/2}; worst score " +
                                 std::to_string(cert.worst.score) + " exceeds " + std::to_string(cert.tol));
    WeylReport rep;
    rep.certificate = std::move(cert);
    const double t_max = *std::max_element(opt.t_grid.begin(), opt.t_grid.end());
    const double t_min = *std::min_element(opt.t_grid.begin(), opt.t_grid.end());
    rep.h = opt.h > 0.0 ? opt.h : std::sqrt(t_min) / 2.0;
    const Grid grid = centered_grid(x0, R + kTrustSigmas * std::sqrt(t_max), rep.h);
    rep.grid_nodes = grid.size();
    const GridFunction v = GridFunction::sample(grid, [&](const Point& x) {
        const double c = weyl_cutoff(x, x0, R);
        return c > 0.0 ? c * u(x) : 0.0;
    });
    rep.pipeline = smoothing_pipeline(v, x0, R, opt.t_grid, &rep.certificate, opt.pipeline);
    rep.lipschitz_constant = rep.pipeline.lipschitz_constant;
    if (truth) {
        double err = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const Point x = grid.point(i);
            if ((x - x0).norm() <= R / 8.0) err = std::max(err, std::abs(rep.pipeline.recovered[i] - truth(x)));
        }
        rep.recovery_error = err;
    }
    return rep;
}

inline void check_demo_args(double R, const WeylOptions& opt) {
    if (!(R > 0.0)) throw InvalidArgument("weyl_demo: R must be positive");
    if (opt.t_grid.size() < 2) throw InvalidArgument("weyl_demo: need at least two times");
}

}  // namespace detail

/// Certifies u on B_{R/2}(x0), smooths v = u chi and reports the recovered field
/// on B_{R/8}(x0). A failed certificate is refused with CertificationError.
inline WeylReport weyl_demo(const SampledFunction& u, double R, const Point& x0, const WeylOptions& opt = {},
                            const std::function<double(const Point&)>& truth = nullptr) {
    detail::check_demo_args(R, opt);
    const Geometry g = Geometry::flat(static_cast<int>(x0.size()));
    return detail::smooth_certified(u, R, x0, opt, truth,
                                    certify_very_weak(u, g, {x0, R / 2.0}, Sign::harmonic, opt.certify));
}

/// Cone data for theta = 2 pi / m: certified with cone bumps on B_{R/2}(vertex),
/// smoothed through the planar lift, which is a local isometry off the vertex.
inline WeylReport weyl_demo_cone(const std::function<double(const Point&)>& u_cone,
                                 std::shared_ptr<const CrossSectionSpectrum> s, double R, const WeylOptions& opt = {},
                                 const std::function<double(const Point&)>& truth_cone = nullptr) {
    detail::check_demo_args(R, opt);
    const Geometry g = Geometry::cone(s);
    const SampledFunction lifted = lift_to_plane(u_cone, *s);
    Certificate cert = certify_very_weak(SampledFunction::exact(u_cone, "cone"), g, {Point::Zero(g.coord_dim()), R / 2.0},
                                         Sign::harmonic, opt.certify);
    std::function<double(const Point&)> truth;
    if (truth_cone) truth = lift_to_plane(truth_cone, *s).eval;
    return detail::smooth_certified(lifted, R, point({0.0, 0.0}), opt, truth, std::move(cert));
}

// ---------------------------------------------------------------------------
// Poisson decomposition

struct DecompositionReport {
    DiscreteField w;
    double source_residual = 0.0;   ///< max over the family of |int u Lap phi - int f phi| / (|u|_{L1} |phi|_E)
    Certificate remainder;          ///< harmonic certificate of u - w
    Certificate original;           ///< harmonic certificate of u itself
};

/// w solves Laplacian(w) = f (div(A grad w) = f with A = I) with zero trace on
/// the mesh boundary; u - w is tested for very-weak harmonicity on `region`.
inline DecompositionReport poisson_decomposition(const SampledFunction& u, const std::function<double(const Point&)>& f,
                                                 std::shared_ptr<const Mesh> mesh, const Ball& region,
                                                 const CertifyOptions& opt = {}) {
    const int n = mesh->dim;
    DecompositionReport rep;
    rep.w = solve_poisson_dirichlet(identity_coefficient(n), f, mesh);
    const Geometry g = Geometry::flat(n);
    const SampledFunction fs = SampledFunction::exact(f, "f");
    CertifyOptions o = opt;
    if (o.h < 0.0) o.h = mesh->h;
    for (const TestFunction& phi : bump_family(g, region, o.family_size, o.h, o.seed)) {
        const Pairing p = pair(u, phi, o.quadrature);
        const double rhs = integrate_against(fs, phi, o.quadrature);
        if (p.u_l1 > 0.0) rep.source_residual = std::max(rep.source_residual, std::abs(p.value - rhs) / (p.u_l1 * phi.e_norm()));
    }
    rep.remainder = certify_very_weak(u - SampledFunction::field(rep.w, "w"), g, region, Sign::harmonic, o);
    rep.original = certify_very_weak(u, g, region, Sign::harmonic, o);
    return rep;
}

}  // namespace conelab
