#pragma once

// Euclidean heat semigroup on uniform grids (dimension 1 to 3), the Gaussian
// kernel envelopes, the heat-flow cutoff and the smoothing pipeline.

#include "conelab/certificate.hpp"
#include "conelab/sampling.hpp"
#include "conelab/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace conelab {

/// Truncation radius of the kernel and width of the untrusted boundary layer, in units of sqrt(t).
inline constexpr double kTrustSigmas = 10.0;

struct Grid {
    int dim = 2;
    std::array<int, 3> n{1, 1, 1};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    double h = 1.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
    std::size_t index(int i, int j = 0, int k = 0) const noexcept {
        return (static_cast<std::size_t>(k) * n[1] + j) * n[0] + i;
    }
    std::array<int, 3> ijk(std::size_t idx) const noexcept {
        std::array<int, 3> c{0, 0, 0};
        c[0] = static_cast<int>(idx % n[0]);
        idx /= n[0];
        c[1] = static_cast<int>(idx % n[1]);
        c[2] = static_cast<int>(idx / n[1]);
        return c;
    }
    Point point(std::size_t idx) const {
        const auto c = ijk(idx);
        Point x(dim);
        for (int d = 0; d < dim; ++d) x[d] = origin[d] + h * c[d];
        return x;
    }
    double lower(int d) const { return origin[d]; }
    double upper(int d) const { return origin[d] + h * (n[d] - 1); }
    /// Distance from x to the nearest face of the box (negative outside).
    double depth(const Point& x) const {
        double m = std::numeric_limits<double>::infinity();
        for (int d = 0; d < dim; ++d) m = std::min({m, x[d] - lower(d), upper(d) - x[d]});
        return m;
    }
    double cell_volume() const { return std::pow(h, dim); }
};

/// Cube centered at `center` with half-width at least `half_width`, spacing h.
inline Grid centered_grid(const Point& center, double half_width, double h) {
    const int dim = static_cast<int>(center.size());
    if (dim < 1 || dim > 3) throw InvalidArgument("grid dimension must be 1, 2 or 3");
    if (!(h > 0.0) || !(half_width > 0.0)) throw InvalidArgument("grid spacing and width must be positive");
    const int half = static_cast<int>(std::ceil(half_width / h - 1e-9));
    Grid g;
    g.dim = dim;
    g.h = h;
    for (int d = 0; d < dim; ++d) {
        g.n[d] = 2 * half + 1;
        g.origin[d] = center[d] - half * h;
    }
    return g;
}

class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(Grid g) : grid_(g), values_(g.size(), 0.0) {}
    GridFunction(Grid g, std::vector<double> v) : grid_(g), values_(std::move(v)) {
        if (values_.size() != grid_.size()) throw InvalidArgument("GridFunction: value count does not match the grid");
        for (double x : values_)
            if (!std::isfinite(x)) throw InvalidArgument("GridFunction: non-finite value");
    }

    static GridFunction sample(const Grid& g, const std::function<double(const Point&)>& f) {
        std::vector<double> v(g.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(g.point(i));
        return GridFunction(g, std::move(v));
    }

    const Grid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t size() const noexcept { return values_.size(); }

    /// Multilinear interpolation; zero outside the box.
    double interpolate(const Point& x) const {
        const Grid& g = grid_;
        std::array<int, 3> base{0, 0, 0};
        std::array<double, 3> frac{0, 0, 0};
        for (int d = 0; d < g.dim; ++d) {
            const double s = (x[d] - g.origin[d]) / g.h;
            if (s < 0.0 || s > g.n[d] - 1) return 0.0;
            base[d] = std::min(static_cast<int>(std::floor(s)), std::max(g.n[d] - 2, 0));
            frac[d] = s - base[d];
        }
        double acc = 0.0;
        const int corners = 1 << g.dim;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            std::array<int, 3> q = base;
            for (int d = 0; d < g.dim; ++d) {
                const int bit = (c >> d) & 1;
                w *= bit ? frac[d] : 1.0 - frac[d];
                q[d] += bit;
                if (q[d] >= g.n[d]) q[d] = g.n[d] - 1;
            }
            if (w != 0.0) acc += w * values_[g.index(q[0], q[1], q[2])];
        }
        return acc;
    }

    GridFunction& operator+=(const GridFunction& o) {
        check_same(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    GridFunction& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) {
        a.check_same(b);
        for (std::size_t i = 0; i < a.values_.size(); ++i) a.values_[i] -= b.values_[i];
        return a;
    }

private:
    void check_same(const GridFunction& o) const {
        if (o.grid_.n != grid_.n || o.grid_.h != grid_.h || o.grid_.origin != grid_.origin)
            throw InvalidArgument("GridFunction: grids differ");
    }
    Grid grid_;
    std::vector<double> values_;
};

inline double integral(const GridFunction& v) {
    double s = 0.0;
    for (double x : v.values()) s += x;
    return s * v.grid().cell_volume();
}

/// L^p norm for p = 1, 2 or infinity.
inline double lp_norm(const GridFunction& v, double p) {
    if (std::isinf(p)) {
        double m = 0.0;
        for (double x : v.values()) m = std::max(m, std::abs(x));
        return m;
    }
    if (p != 1.0 && p != 2.0) throw InvalidArgument("lp_norm: p must be 1, 2 or infinity");
    double s = 0.0;
    for (double x : v.values()) s += p == 1.0 ? std::abs(x) : x * x;
    s *= v.grid().cell_volume();
    return p == 1.0 ? s : std::sqrt(s);
}

/// Central-difference partial derivative along axis d (one-sided at the faces).
inline double partial(const GridFunction& v, std::size_t idx, int d) {
    const Grid& g = v.grid();
    const auto c = g.ijk(idx);
    if (g.n[d] < 2) return 0.0;
    std::array<int, 3> lo = c;
    std::array<int, 3> hi = c;
    double span = 2.0 * g.h;
    if (c[d] == 0) {
        hi[d] += 1;
        span = g.h;
    } else if (c[d] == g.n[d] - 1) {
        lo[d] -= 1;
        span = g.h;
    } else {
        lo[d] -= 1;
        hi[d] += 1;
    }
    return (v[g.index(hi[0], hi[1], hi[2])] - v[g.index(lo[0], lo[1], lo[2])]) / span;
}

inline double gradient_norm(const GridFunction& v, std::size_t idx) {
    double s = 0.0;
    for (int d = 0; d < v.grid().dim; ++d) s += std::pow(partial(v, idx, d), 2);
    return std::sqrt(s);
}

/// (2 dim + 1)-point Laplacian; NaN on the faces where it is undefined.
inline double laplacian(const GridFunction& v, std::size_t idx) {
    const Grid& g = v.grid();
    const auto c = g.ijk(idx);
    double s = 0.0;
    for (int d = 0; d < g.dim; ++d) {
        if (c[d] == 0 || c[d] == g.n[d] - 1) return std::numeric_limits<double>::quiet_NaN();
        std::array<int, 3> lo = c;
        std::array<int, 3> hi = c;
        lo[d] -= 1;
        hi[d] += 1;
        s += v[g.index(lo[0], lo[1], lo[2])] + v[g.index(hi[0], hi[1], hi[2])] - 2.0 * v[idx];
    }
    return s / (g.h * g.h);
}

inline GridFunction gradient_norm(const GridFunction& v) {
    GridFunction out(v.grid());
    for (std::size_t i = 0; i < v.size(); ++i) out.values()[i] = gradient_norm(v, i);
    return out;
}

// ---------------------------------------------------------------------------
// Kernel

struct HeatKernel {
    int n = 2;

    double value(const Point& x, const Point& y, double t) const {
        return std::pow(4.0 * std::numbers::pi * t, -0.5 * n) * std::exp(-(x - y).squaredNorm() / (4.0 * t));
    }
    /// Gradient in x.
    Point gradient(const Point& x, const Point& y, double t) const { return -value(x, y, t) / (2.0 * t) * (x - y); }
    /// d/dt p_t(x, y), equal to the Laplacian in y.
    double time_derivative(const Point& x, const Point& y, double t) const {
        const double d2 = (x - y).squaredNorm();
        return value(x, y, t) * (d2 / (4.0 * t * t) - 0.5 * n / t);
    }
};

struct KernelBoundsReport {
    int n = 2;
    double c1_value = 0.0;      ///< smallest C1 for the two-sided value envelope with C2 = 0
    double c1_gradient = 0.0;   ///< smallest C1 for the gradient envelope
    double c1_time = 0.0;       ///< smallest C1 for the time-derivative envelope
    double sampled_value = 0.0; ///< largest sampled ratio for each envelope (<= the analytic constant)
    double sampled_gradient = 0.0;
    double sampled_time = 0.0;
    std::size_t samples = 0;
    std::size_t violations = 0;
    double max_mass_error = 0.0;
    std::vector<double> t;
    std::vector<double> mass;
    bool ordering_ok = false;
    bool mass_ok = false;
};

/// int p_t(x, .) over R^n by radial Gauss-Legendre on [0, 12 sqrt t].
inline double kernel_mass(int n, double t, int nodes = 64) {
    const HeatKernel k{n};
    const GaussRule r = gauss_legendre(nodes, 0.0, 12.0 * std::sqrt(t));
    const double sphere = n * unit_ball_volume(n);
    double s = 0.0;
    Point o = Point::Zero(n);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        Point y = Point::Zero(n);
        y[0] = r.nodes[i];
        s += r.weights[i] * sphere * std::pow(r.nodes[i], n - 1) * k.value(o, y, t);
    }
    return s;
}

/// Checks p_t, |grad p_t| and |dp_t/dt| against the Li-Yau type envelopes with
/// C2 = 0 on random pairs, using the closed-form smallest admissible C1.
inline KernelBoundsReport kernel_bounds_check(int n, const std::vector<double>& t_grid, std::size_t samples = 1000,
                                              unsigned seed = 1, double mass_tol = 1e-8) {
    if (n < 1 || n > kMaxDim) throw InvalidArgument("kernel_bounds_check: dimension out of range");
    for (double t : t_grid)
        if (!(t > 0.0)) throw InvalidArgument("kernel_bounds_check: times must be positive");
    KernelBoundsReport rep;
    rep.n = n;
    const double wn = unit_ball_volume(n);
    const double g = wn * std::pow(4.0 * std::numbers::pi, -0.5 * n);  // omega_n / (4 pi)^(n/2)
    rep.c1_value = std::max(g, 1.0 / g);
    rep.c1_gradient = g * std::sqrt(10.0) / 2.0 * std::exp(-0.5);
    rep.c1_time = g * std::max(0.5 * n, 5.0 * std::exp(-1.0 - 0.1 * n));
    const HeatKernel k{n};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> spread(0.0, 8.0);
    for (std::size_t s = 0; s < samples && !t_grid.empty(); ++s) {
        const double t = t_grid[s % t_grid.size()];
        Point x(n), dir(n);
        for (int d = 0; d < n; ++d) {
            x[d] = unit(rng);
            dir[d] = unit(rng);
        }
        if (dir.norm() == 0.0) dir[0] = 1.0;
        // every 10th pair is diagonal; the others spread d / sqrt t over [0, 8]
        const Point y = s % 10 == 0 ? x : Point(x + spread(rng) * std::sqrt(t) * dir.normalized());
        const double d2 = (x - y).squaredNorm();
        const double m = wn * std::pow(t, 0.5 * n);
        const double p = k.value(x, y, t);
        const double lower = std::exp(-d2 / (3.0 * t)) / (rep.c1_value * m);
        const double upper = rep.c1_value * std::exp(-d2 / (5.0 * t)) / m;
        const double gnorm = k.gradient(x, y, t).norm();
        const double gup = rep.c1_gradient * std::exp(-d2 / (5.0 * t)) / (std::sqrt(t) * m);
        const double dt = std::abs(k.time_derivative(x, y, t));
        const double tup = rep.c1_time * std::exp(-d2 / (5.0 * t)) / (t * m);
        const double rel = 1.0 + 1e-12;
        if (!(lower <= p * rel && p <= upper * rel && gnorm <= gup * rel && dt <= tup * rel)) ++rep.violations;
        rep.sampled_value = std::max({rep.sampled_value, p * m / std::exp(-d2 / (5.0 * t)),
                                      std::exp(-d2 / (3.0 * t)) / (p * m)});
        rep.sampled_gradient = std::max(rep.sampled_gradient, gnorm * std::sqrt(t) * m / std::exp(-d2 / (5.0 * t)));
        rep.sampled_time = std::max(rep.sampled_time, dt * t * m / std::exp(-d2 / (5.0 * t)));
        ++rep.samples;
    }
    rep.ordering_ok = rep.violations == 0;
    for (double t : t_grid) {
        const double mass = kernel_mass(n, t);
        rep.t.push_back(t);
        rep.mass.push_back(mass);
        rep.max_mass_error = std::max(rep.max_mass_error, std::abs(mass - 1.0));
    }
    rep.mass_ok = rep.max_mass_error <= mass_tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Semigroup on grids

enum class HeatMethod { automatic, dense, separable };

namespace detail {

inline std::vector<double> gaussian_taps(double t, double h) {
    const int K = static_cast<int>(std::ceil(kTrustSigmas * std::sqrt(t) / h));
    std::vector<double> w(K + 1);
    const double c = h / std::sqrt(4.0 * std::numbers::pi * t);
    for (int k = 0; k <= K; ++k) w[k] = c * std::exp(-(k * h) * (k * h) / (4.0 * t));
    return w;
}

inline void convolve_axis(const Grid& g, int axis, const std::vector<double>& w, const std::vector<double>& in,
                          std::vector<double>& out) {
    const int K = static_cast<int>(w.size()) - 1;
    const int len = g.n[axis];
    std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(g.n[0]),
                                      static_cast<std::size_t>(g.n[0]) * g.n[1]};
    const std::size_t s = stride[axis];
    std::array<int, 3> ext = g.n;
    ext[axis] = 1;
    std::vector<double> line(len), res(len);
    for (int k = 0; k < ext[2]; ++k)
        for (int j = 0; j < ext[1]; ++j)
            for (int i = 0; i < ext[0]; ++i) {
                const std::size_t base = g.index(i, j, k);
                for (int q = 0; q < len; ++q) line[q] = in[base + q * s];
                for (int q = 0; q < len; ++q) {
                    double acc = w[0] * line[q];
                    const int reach = std::min(K, std::max(q, len - 1 - q));
                    for (int m = 1; m <= reach; ++m) {
                        if (q - m >= 0) acc += w[m] * line[q - m];
                        if (q + m < len) acc += w[m] * line[q + m];
                    }
                    res[q] = acc;
                }
                for (int q = 0; q < len; ++q) out[base + q * s] = res[q];
            }
}

}  // namespace detail

/// Smallest t the grid resolves: sqrt t >= 2 h.
inline double min_resolved_time(const Grid& g) { return 4.0 * g.h * g.h; }

/// v_t = P_t v by discrete convolution with the sampled Gaussian; zero padding.
inline GridFunction heat_apply(const GridFunction& v, double t, HeatMethod method = HeatMethod::automatic) {
    const Grid& g = v.grid();
    if (!(t > 0.0)) throw InvalidArgument("heat_apply: t must be positive");
    if (t < min_resolved_time(g) * (1 - 1e-12))
        throw ResolutionError("heat_apply: sqrt(t) = " + std::to_string(std::sqrt(t)) + " is below twice the spacing " +
                                  std::to_string(g.h),
                              min_resolved_time(g));
    const std::vector<double> w = detail::gaussian_taps(t, g.h);
    const int K = static_cast<int>(w.size()) - 1;
    if (method == HeatMethod::automatic) {
        const double work = std::pow(2.0 * K + 1, 2) * static_cast<double>(g.size());
        method = (g.dim == 2 && g.n[0] <= 256 && g.n[1] <= 256 && work <= 2e8) ? HeatMethod::dense
                                                                               : HeatMethod::separable;
    }
    GridFunction out(g);
    if (method == HeatMethod::dense) {
        if (g.dim != 2) throw InvalidArgument("heat_apply: dense convolution is implemented for 2D grids");
        const auto& in = v.values();
        auto& o = out.values();
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i) {
                double acc = 0.0;
                for (int b = std::max(0, j - K); b <= std::min(g.n[1] - 1, j + K); ++b) {
                    double row = 0.0;
                    for (int a = std::max(0, i - K); a <= std::min(g.n[0] - 1, i + K); ++a)
                        row += w[std::abs(a - i)] * in[g.index(a, b)];
                    acc += w[std::abs(b - j)] * row;
                }
                o[g.index(i, j)] = acc;
            }
        return out;
    }
    std::vector<double> a = v.values();
    std::vector<double> b(a.size());
    for (int d = 0; d < g.dim; ++d) {
        detail::convolve_axis(g, d, w, a, b);
        std::swap(a, b);
    }
    out.values() = std::move(a);
    return out;
}

/// Geometric grid of `count` times from t_max down to t_min.
inline std::vector<double> geometric_times(double t_max = 1e-1, double t_min = 1e-3, int count = 12) {
    if (!(t_max > t_min && t_min > 0.0) || count < 2) throw InvalidArgument("geometric_times: bad range");
    std::vector<double> t(count);
    for (int k = 0; k < count; ++k) t[k] = t_max * std::pow(t_min / t_max, double(k) / (count - 1));
    return t;
}

// ---------------------------------------------------------------------------
// Cutoff

/// Ramp: 0 on [0, 1/4], 1 on [3/4, 1], quintic smoothstep between (C^2).
struct Ramp {
    double operator()(double s) const {
        const double u = std::clamp((s - 0.25) / 0.5, 0.0, 1.0);
        return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    }
};

struct CutoffPolicy {
    enum class Kind { fixed, scaled };
    Kind kind = Kind::fixed;
    double r0 = 1.0;  ///< lower bound on admissible radii (fixed policy)
};

struct CutoffResult {
    GridFunction eta;
    double R = 0.0;
    double t = 0.0;
    double drift = 0.0;        ///< max |phi_t - phi|
    double drift_bound = 0.0;  ///< sqrt(2 n t) / R
    double grad_sup = 0.0;
    double lap_sup = 0.0;
    double sum_sup = 0.0;      ///< sup(|grad eta| + |Laplacian eta|)
    double constant = 0.0;     ///< sum_sup * R
    bool range_ok = false;     ///< 0 <= eta <= 1
    bool inner_ok = false;     ///< eta = 1 on B_R
    bool support_ok = false;   ///< eta = 0 off B_2R
    double bakry_ledoux_excess = 0.0;  ///< max of |grad phi_t|^2 + 2t/n (Lap phi_t)^2 - P_t|grad phi|^2
    bool bakry_ledoux_ok = false;
};

/// Smoothing time with drift sqrt(2 n t) / R <= 1/4 at every R >= r0 (fixed) or at R itself (scaled).
inline double cutoff_time(int n, double R, const CutoffPolicy& p) {
    const double r = p.kind == CutoffPolicy::Kind::fixed ? p.r0 : R;
    return r * r / (32.0 * n);
}

inline CutoffResult build_cutoff(const Point& x0, double R, const CutoffPolicy& policy = {}, double h = 0.0) {
    const int n = static_cast<int>(x0.size());
    if (!(R > 0.0)) throw InvalidArgument("build_cutoff: R must be positive");
    if (policy.kind == CutoffPolicy::Kind::fixed && R < policy.r0 * (1 - 1e-12))
        throw InvalidArgument("build_cutoff: R is below the policy radius r0");
    CutoffResult res;
    res.R = R;
    res.t = cutoff_time(n, R, policy);
    if (h == 0.0) h = std::sqrt(res.t) / 8.0;
    const Grid g = centered_grid(x0, 2.0 * R + kTrustSigmas * std::sqrt(res.t) + 2.0 * h, h);
    if (res.t < min_resolved_time(g))
        throw ResolutionError("build_cutoff: grid too coarse for the smoothing time", min_resolved_time(g));
    auto dist = [&x0](const Point& x) { return (x - x0).norm(); };
    const GridFunction phi = GridFunction::sample(g, [&](const Point& x) { return std::clamp((2.0 * R - dist(x)) / R, 0.0, 1.0); });
    const GridFunction grad2 = GridFunction::sample(g, [&](const Point& x) {
        const double r = dist(x);
        return (r > R && r < 2.0 * R) ? 1.0 / (R * R) : 0.0;
    });
    const GridFunction phit = heat_apply(phi, res.t);
    const GridFunction pgrad = heat_apply(grad2, res.t);
    const Ramp f;
    res.eta = GridFunction(g);
    res.range_ok = res.inner_ok = res.support_ok = true;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double e = f(phit[i]);
        res.eta.values()[i] = e;
        res.drift = std::max(res.drift, std::abs(phit[i] - phi[i]));
        const double r = dist(g.point(i));
        if (e < 0.0 || e > 1.0) res.range_ok = false;
        if (r <= R && e != 1.0) res.inner_ok = false;
        if (r >= 2.0 * R && e != 0.0) res.support_ok = false;
    }
    res.drift_bound = std::sqrt(2.0 * n * res.t) / R;
    res.bakry_ledoux_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double lap_eta = laplacian(res.eta, i);
        if (std::isnan(lap_eta)) continue;
        const double ge = gradient_norm(res.eta, i);
        res.grad_sup = std::max(res.grad_sup, ge);
        res.lap_sup = std::max(res.lap_sup, std::abs(lap_eta));
        res.sum_sup = std::max(res.sum_sup, ge + std::abs(lap_eta));
        const double gp = gradient_norm(phit, i);
        const double lp = laplacian(phit, i);
        res.bakry_ledoux_excess = std::max(res.bakry_ledoux_excess, gp * gp + 2.0 * res.t / n * lp * lp - pgrad[i]);
    }
    res.constant = res.sum_sup * R;
    // second differences of phi_t carry O(h^2 |D^4 phi_t|) error; 2% of |grad phi|^2 covers it
    res.bakry_ledoux_ok = res.bakry_ledoux_excess <= 0.02 / (R * R);
    return res;
}

/// Relative spread (max - min) / max.
inline double relative_spread(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi > 0.0 ? (*hi - *lo) / *hi : 0.0;
}

/// Least-squares slope of log y against log x over entries with y > 0.
inline double loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(y[i] > 0.0) || !(x[i] > 0.0)) continue;
        const double a = std::log(x[i]);
        const double b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
        ++m;
    }
    if (m < 2) return std::numeric_limits<double>::quiet_NaN();
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Smoothing pipeline

struct PipelineEntry {
    double t = 0.0;
    double sup_grad = 0.0;     ///< sup over B_{R/8}(x0) of |grad v_t|
    double l1_distance = 0.0;  ///< |v_t - v|_1
};

struct PipelineOptions {
    double variation_tol = 0.10;   ///< bounded-gradient criterion on the relative spread
    double blowup_slope = -0.25;   ///< log-log slope of sup_grad in t below which the sequence is unbounded
    double rate_floor = 0.5;       ///< required log-log slope of the L1 distance
    double rate_slack = 0.05;
};

struct PipelineReport {
    std::vector<PipelineEntry> entries;
    bool certified = false;
    double grad_slope = 0.0;
    double grad_variation = 0.0;
    double l1_rate = 0.0;
    bool lipschitz = false;   ///< sup-gradient sequence bounded uniformly in t
    bool stable = false;      ///< spread within variation_tol
    bool converges = false;   ///< L1 distance decays at rate >= sqrt(t)
    GridFunction recovered;   ///< v_t at the smallest t
    double lipschitz_constant = 0.0;
};

/// Runs v -> P_t v over `t_grid`. A certificate must be supplied; a negative one
/// turns the run into a diagnostic (the Lipschitz conclusion is not expected).
inline PipelineReport smoothing_pipeline(const GridFunction& v, const Point& x0, double R, std::vector<double> t_grid,
                                         const Certificate* certificate, const PipelineOptions& opt = {}) {
    if (certificate == nullptr)
        throw CertificationError("smoothing_pipeline: no very-weak certificate supplied for the input");
    if (t_grid.size() < 2) throw InvalidArgument("smoothing_pipeline: need at least two times");
    if (static_cast<int>(x0.size()) != v.grid().dim) throw InvalidArgument("smoothing_pipeline: center dimension");
    std::sort(t_grid.begin(), t_grid.end(), std::greater<>());
    PipelineReport rep;
    rep.certified = certificate->verdict && certificate->harmonic;
    const Grid& g = v.grid();
    std::vector<std::size_t> inner;
    for (std::size_t i = 0; i < g.size(); ++i)
        if ((g.point(i) - x0).norm() <= R / 8.0) inner.push_back(i);
    if (inner.empty()) throw ResolutionError("smoothing_pipeline: B_{R/8} contains no grid node", 8.0 * g.h);
    std::vector<double> ts, grads, dists;
    for (double t : t_grid) {
        GridFunction vt = heat_apply(v, t);
        PipelineEntry e;
        e.t = t;
        for (std::size_t i : inner) e.sup_grad = std::max(e.sup_grad, gradient_norm(vt, i));
        e.l1_distance = lp_norm(vt - v, 1.0);
        rep.entries.push_back(e);
        ts.push_back(t);
        grads.push_back(e.sup_grad);
        dists.push_back(e.l1_distance);
        if (t == t_grid.back()) {
            rep.lipschitz_constant = e.sup_grad;
            rep.recovered = std::move(vt);
        }
    }
    rep.grad_slope = loglog_fit(ts, grads);
    rep.grad_variation = relative_spread(grads);
    rep.l1_rate = loglog_fit(ts, dists);
    rep.lipschitz = !(rep.grad_slope < opt.blowup_slope);
    rep.stable = rep.grad_variation <= opt.variation_tol;
    rep.converges = rep.l1_rate >= opt.rate_floor - opt.rate_slack;
    return rep;
}

// ---------------------------------------------------------------------------
// Monotonicity of P_t u in t

struct MonotonicityCheck {
    std::vector<double> t;             ///< ascending
    std::vector<double> mean_increment;///< window mean of P_t u - u
    std::size_t window_nodes = 0;
    double laplacian_min = 0.0;        ///< of u over the window
    bool subharmonic_input = false;
    double worst_drop = 0.0;           ///< max over the window of P_{t1} u - P_{t2} u, t1 < t2
    double worst_rise = 0.0;           ///< max of P_{t2} u - P_{t1} u
    bool nondecreasing = false;
    bool nonincreasing = false;
    bool mass_applicable = false;      ///< u vanishes within the untrusted layer
    double mass_error = 0.0;           ///< max_t |int P_t u - int u| / int |u|
};

/// Compares P_t u across `t_grid` on nodes at depth >= 10 sqrt(t_max) in the box.
inline MonotonicityCheck subharmonic_monotonicity_check(const GridFunction& u, std::vector<double> t_grid,
                                                        double tol = 1e-6) {
    if (t_grid.empty()) throw InvalidArgument("subharmonic_monotonicity_check: empty time grid");
    std::sort(t_grid.begin(), t_grid.end());
    MonotonicityCheck rep;
    rep.t = t_grid;
    const Grid& g = u.grid();
    const double margin = kTrustSigmas * std::sqrt(t_grid.back());
    std::vector<std::size_t> window;
    rep.mass_applicable = true;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double depth = g.depth(g.point(i));
        if (depth >= margin) window.push_back(i);
        else if (depth < margin && u[i] != 0.0) rep.mass_applicable = false;
    }
    if (window.empty())
        throw ResolutionError("subharmonic_monotonicity_check: the box has no nodes beyond the trust margin", 2.0 * margin);
    rep.window_nodes = window.size();
    rep.laplacian_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : window) {
        const double l = laplacian(u, i);
        if (!std::isnan(l)) rep.laplacian_min = std::min(rep.laplacian_min, l);
    }
    rep.subharmonic_input = rep.laplacian_min >= -tol;
    const double mass0 = integral(u);
    const double abs0 = lp_norm(u, 1.0);
    GridFunction prev = u;
    for (double t : t_grid) {
        const GridFunction ut = heat_apply(u, t);
        double inc = 0.0;
        for (std::size_t i : window) {
            const double d = ut[i] - prev[i];
            rep.worst_drop = std::max(rep.worst_drop, -d);
            rep.worst_rise = std::max(rep.worst_rise, d);
            inc += ut[i] - u[i];
        }
        rep.mean_increment.push_back(inc / window.size());
        if (rep.mass_applicable && abs0 > 0.0)
            rep.mass_error = std::max(rep.mass_error, std::abs(integral(ut) - mass0) / abs0);
        prev = ut;
    }
    rep.nondecreasing = rep.worst_drop <= tol;
    rep.nonincreasing = rep.worst_rise <= tol;
    return rep;
}

}  // namespace conelab
