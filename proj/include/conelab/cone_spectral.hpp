#pragma once

// Separation of variables on metric cones C(Sigma): harmonic functions
// u = sum c_i r^{alpha_i} phi_i with lambda_i = alpha_i (N + alpha_i - 2).

#include "conelab/coefficient.hpp"
#include "conelab/sampling.hpp"
#include "conelab/types.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace conelab {

/// Nonnegative root of alpha (N + alpha - 2) = lambda.
inline double exponent_from_eigenvalue(double lambda, double N) {
    if (!(lambda >= 0.0)) throw InvalidArgument("exponent_from_eigenvalue: lambda must be >= 0");
    if (!(N >= 2.0)) throw InvalidArgument("exponent_from_eigenvalue: N must be >= 2");
    if (lambda == 0.0) return 0.0;
    // Rationalized root, free of cancellation when lambda << (N-2)^2.
    const double b = N - 2.0;
    return 2.0 * lambda / (b + std::sqrt(b * b + 4.0 * lambda));
}

/// m_c(B_r(o)) = r^N / N * m_Sigma(Sigma).
inline double cone_ball_volume(double r, double N, double cross_measure) {
    if (!(r > 0.0)) throw InvalidArgument("cone_ball_volume: r must be positive");
    return std::pow(r, N) / N * cross_measure;
}

/// One L2-orthonormal eigenfunction of the cross-section. Points of Sigma are
/// sigma in [0, theta) on circles and (polar, azimuth) on spheres; gradients are
/// given in an orthonormal tangent frame.
struct CrossMode {
    double lambda = 0.0;
    int degree = 0;
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> grad;
};

struct CrossQuadrature {
    std::vector<Point> nodes;
    std::vector<double> weights;
};

class CrossSectionSpectrum {
public:
    enum class Kind { circle, sphere };

    static CrossSectionSpectrum circle(double theta, int modes = 16);
    static CrossSectionSpectrum sphere(double s, int modes = 16);

    Kind kind() const noexcept { return kind_; }
    double N() const noexcept { return N_; }
    double parameter() const noexcept { return param_; }
    double total_measure() const noexcept { return measure_; }
    int intrinsic_dim() const noexcept { return kind_ == Kind::circle ? 1 : 2; }
    std::size_t size() const noexcept { return modes_.size(); }
    const CrossMode& mode(std::size_t i) const { return modes_.at(i); }
    const std::vector<CrossMode>& modes() const noexcept { return modes_; }

    double alpha(std::size_t i) const { return exponent_from_eigenvalue(modes_.at(i).lambda, N_); }

    /// Distinct eigenvalues with multiplicities as realized in the truncation.
    std::vector<std::pair<double, int>> distinct() const {
        std::vector<std::pair<double, int>> out;
        for (const CrossMode& m : modes_) {
            if (!out.empty() && std::abs(out.back().first - m.lambda) <= 1e-12 * (1.0 + m.lambda))
                ++out.back().second;
            else
                out.emplace_back(m.lambda, 1);
        }
        return out;
    }

    /// Tensor quadrature on Sigma, exact for the retained modes' products at
    /// `resolution` >= 2 * (max degree + 1).
    CrossQuadrature quadrature(int resolution = 64) const {
        CrossQuadrature q;
        if (kind_ == Kind::circle) {
            for (int j = 0; j < resolution; ++j) {
                q.nodes.push_back(point({param_ * (j + 0.5) / resolution}));
                q.weights.push_back(param_ / resolution);
            }
        } else {
            const GaussRule g = gauss_legendre(resolution, -1.0, 1.0);
            const int naz = 2 * resolution;
            for (int i = 0; i < resolution; ++i) {
                const double polar = std::acos(g.nodes[i]);
                for (int j = 0; j < naz; ++j) {
                    q.nodes.push_back(point({polar, 2.0 * std::numbers::pi * (j + 0.5) / naz}));
                    q.weights.push_back(g.weights[i] * 2.0 * std::numbers::pi / naz * param_ * param_);
                }
            }
        }
        return q;
    }

    /// max |<phi_i, phi_j> - delta_ij| under the given quadrature.
    double gram_residual(int resolution = 64) const {
        const CrossQuadrature q = quadrature(resolution);
        const std::size_t M = modes_.size();
        std::vector<std::vector<double>> vals(M, std::vector<double>(q.nodes.size()));
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t p = 0; p < q.nodes.size(); ++p) vals[i][p] = modes_[i].value(q.nodes[p]);
        double worst = 0.0;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = i; j < M; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < q.nodes.size(); ++p) s += q.weights[p] * vals[i][p] * vals[j][p];
                worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
            }
        return worst;
    }

    std::string describe() const {
        return kind_ == Kind::circle ? "cone:circle:theta=" + std::to_string(param_)
                                     : "cone:sphere:s=" + std::to_string(param_);
    }

private:
    Kind kind_ = Kind::circle;
    double N_ = 2.0;
    double param_ = 0.0;
    double measure_ = 0.0;
    std::vector<CrossMode> modes_;
};

inline CrossSectionSpectrum circle_spectrum(double theta, int modes = 16) {
    return CrossSectionSpectrum::circle(theta, modes);
}

inline CrossSectionSpectrum sphere_spectrum(double s, int modes = 16) {
    return CrossSectionSpectrum::sphere(s, modes);
}

inline CrossSectionSpectrum CrossSectionSpectrum::circle(double theta, int modes) {
    if (!(theta > 0.0)) throw InvalidArgument("circle_spectrum: theta must be positive");
    if (theta > 2.0 * std::numbers::pi * (1.0 + 1e-12))
        throw InvalidArgument("circle_spectrum: theta > 2pi gives a cone of negative curvature");
    if (modes < 1) throw InvalidArgument("circle_spectrum: need at least one mode");
    CrossSectionSpectrum s;
    s.kind_ = Kind::circle;
    s.N_ = 2.0;
    s.param_ = theta;
    s.measure_ = theta;
    const double c0 = 1.0 / std::sqrt(theta);
    s.modes_.push_back({0.0, 0, [c0](const Point&) { return c0; }, [](const Point&) { return point({0.0}); }});
    const double amp = std::sqrt(2.0 / theta);
    for (int k = 1; static_cast<int>(s.modes_.size()) < modes; ++k) {
        const double w = 2.0 * std::numbers::pi * k / theta;
        const double lambda = w * w;
        s.modes_.push_back({lambda, k, [amp, w](const Point& p) { return amp * std::cos(w * p[0]); },
                            [amp, w](const Point& p) { return point({-amp * w * std::sin(w * p[0])}); }});
        if (static_cast<int>(s.modes_.size()) == modes) break;
        s.modes_.push_back({lambda, k, [amp, w](const Point& p) { return amp * std::sin(w * p[0]); },
                            [amp, w](const Point& p) { return point({amp * w * std::cos(w * p[0])}); }});
    }
    return s;
}

namespace detail {

/// Normalized associated Legendre part Y_l^m(polar, 0), Condon-Shortley phase included.
inline double legendre_part(int l, int m, double polar) {
    if (m > l) return 0.0;
    return std::sph_legendre(static_cast<unsigned>(l), static_cast<unsigned>(m), polar);
}

inline double legendre_part_dpolar(int l, int m, double polar) {
    const double head = m == 0 ? 0.0 : m * std::cos(polar) / std::sin(polar) * legendre_part(l, m, polar);
    return head + std::sqrt(static_cast<double>((l - m) * (l + m + 1))) * legendre_part(l, m + 1, polar);
}

}  // namespace detail

inline CrossSectionSpectrum CrossSectionSpectrum::sphere(double s, int modes) {
    if (!(s > 0.0)) throw InvalidArgument("sphere_spectrum: radius must be positive");
    if (s > 1.0 + 1e-12) throw InvalidArgument("sphere_spectrum: radius > 1 gives negative curvature");
    if (modes < 1) throw InvalidArgument("sphere_spectrum: need at least one mode");
    CrossSectionSpectrum sp;
    sp.kind_ = Kind::sphere;
    sp.N_ = 3.0;
    sp.param_ = s;
    sp.measure_ = 4.0 * std::numbers::pi * s * s;
    const double sqrt2 = std::sqrt(2.0);
    for (int l = 0; static_cast<int>(sp.modes_.size()) < modes; ++l) {
        const double lambda = l * (l + 1) / (s * s);
        for (int m = -l; m <= l && static_cast<int>(sp.modes_.size()) < modes; ++m) {
            const int am = std::abs(m);
            const double scale = (m == 0 ? 1.0 : sqrt2) / s;
            auto angular = [m](double az) { return m > 0 ? std::cos(m * az) : (m < 0 ? std::sin(-m * az) : 1.0); };
            auto dangular = [m](double az) {
                return m > 0 ? -m * std::sin(m * az) : (m < 0 ? -m * std::cos(-m * az) : 0.0);
            };
            CrossMode mode;
            mode.lambda = lambda;
            mode.degree = l;
            mode.value = [=](const Point& p) { return scale * detail::legendre_part(l, am, p[0]) * angular(p[1]); };
            mode.grad = [=](const Point& p) {
                const double th = detail::legendre_part(l, am, p[0]);
                const double dth = detail::legendre_part_dpolar(l, am, p[0]);
                return point({scale * dth * angular(p[1]) / s,
                              scale * th * dangular(p[1]) / (s * std::sin(p[0]))});
            };
            sp.modes_.push_back(std::move(mode));
        }
    }
    return sp;
}

/// Parses `cone:circle:theta=<v>` or `cone:sphere:s=<v>`.
inline CrossSectionSpectrum parse_cone(const std::string& spec, int modes = 16) {
    const auto parts = detail::split(spec, ':');
    if (parts.size() == 3 && parts[0] == "cone") {
        const auto kv = detail::split(parts[2], '=');
        if (kv.size() == 2 && parts[1] == "circle" && kv[0] == "theta")
            return circle_spectrum(detail::parse_double(kv[1], "theta"), modes);
        if (kv.size() == 2 && parts[1] == "sphere" && kv[0] == "s")
            return sphere_spectrum(detail::parse_double(kv[1], "s"), modes);
    }
    throw InvalidArgument("unknown cone '" + spec + "' (cone:circle:theta=<v> or cone:sphere:s=<v>)");
}

/// u(r, sigma) = sum_i c_i r^{alpha_i} phi_i(sigma).
class ConeHarmonic {
public:
    ConeHarmonic(std::shared_ptr<const CrossSectionSpectrum> spectrum, std::vector<double> c)
        : spec_(std::move(spectrum)), c_(std::move(c)) {
        if (!spec_) throw InvalidArgument("ConeHarmonic: missing spectrum");
        if (c_.size() > spec_->size()) throw InvalidArgument("ConeHarmonic: more coefficients than modes");
        alpha_.resize(c_.size());
        for (std::size_t i = 0; i < c_.size(); ++i) alpha_[i] = spec_->alpha(i);
    }

    /// Explicit exponents; used for negative controls that break the exponent relation.
    ConeHarmonic(std::shared_ptr<const CrossSectionSpectrum> spectrum, std::vector<double> c,
                 std::vector<double> alpha)
        : spec_(std::move(spectrum)), c_(std::move(c)), alpha_(std::move(alpha)) {
        if (!spec_) throw InvalidArgument("ConeHarmonic: missing spectrum");
        if (c_.size() != alpha_.size() || c_.size() > spec_->size())
            throw InvalidArgument("ConeHarmonic: coefficient/exponent size mismatch");
    }

    const CrossSectionSpectrum& spectrum() const noexcept { return *spec_; }
    std::shared_ptr<const CrossSectionSpectrum> spectrum_ptr() const noexcept { return spec_; }
    const std::vector<double>& coefficients() const noexcept { return c_; }
    const std::vector<double>& exponents() const noexcept { return alpha_; }
    std::size_t truncation() const noexcept { return c_.size(); }
    double spectral_tail() const noexcept { return tail_; }
    void set_spectral_tail(double t) noexcept { tail_ = t; }

    /// max_i |alpha_i (N + alpha_i - 2) - lambda_i|.
    double exponent_residual() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < c_.size(); ++i) {
            const double a = alpha_[i];
            worst = std::max(worst, std::abs(a * (spec_->N() + a - 2.0) - spec_->mode(i).lambda));
        }
        return worst;
    }

    double value(double r, const Point& sigma) const {
        double u = 0.0;
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (c_[i] != 0.0) u += c_[i] * std::pow(r, alpha_[i]) * spec_->mode(i).value(sigma);
        return u;
    }

    /// |du/dr|^2 + r^{-2} |grad_Sigma u|^2 at (r, sigma).
    double grad_sq(double r, const Point& sigma) const {
        double ur = 0.0;
        Point gs = Point::Zero(spec_->intrinsic_dim());
        for (std::size_t i = 0; i < c_.size(); ++i) {
            if (c_[i] == 0.0) continue;
            const CrossMode& m = spec_->mode(i);
            ur += c_[i] * alpha_[i] * std::pow(r, alpha_[i] - 1.0) * m.value(sigma);
            gs += c_[i] * std::pow(r, alpha_[i] - 1.0) * m.grad(sigma);
        }
        return ur * ur + gs.squaredNorm();
    }

private:
    std::shared_ptr<const CrossSectionSpectrum> spec_;
    std::vector<double> c_;
    std::vector<double> alpha_;
    double tail_ = 0.0;
};

struct Expansion {
    ConeHarmonic harmonic;
    double norm_sq = 0.0;          ///< |g|^2 in L2(Sigma)
    double spectral_tail = 0.0;    ///< |g|^2 - sum c_i^2
    double quadrature_delta = 0.0; ///< max coefficient change under quadrature refinement
};

/// c_i = int_Sigma g phi_i dm_Sigma by tensor quadrature; the quadrature is
/// refined once and the change reported.
inline Expansion expand_boundary_data(const std::function<double(const Point&)>& g,
                                      std::shared_ptr<const CrossSectionSpectrum> spec, int M = 16,
                                      int resolution = 96, double quadrature_tol = 1e-8) {
    if (!spec) throw InvalidArgument("expand_boundary_data: missing spectrum");
    if (M < 1 || static_cast<std::size_t>(M) > spec->size())
        throw InvalidArgument("expand_boundary_data: truncation exceeds the spectrum");
    auto project = [&](int res, double& norm_sq) {
        const CrossQuadrature q = spec->quadrature(res);
        std::vector<double> c(M, 0.0);
        norm_sq = 0.0;
        for (std::size_t p = 0; p < q.nodes.size(); ++p) {
            const double gv = g(q.nodes[p]);
            norm_sq += q.weights[p] * gv * gv;
            for (int i = 0; i < M; ++i) c[i] += q.weights[p] * gv * spec->mode(i).value(q.nodes[p]);
        }
        return c;
    };
    double n1 = 0.0;
    double n2 = 0.0;
    const std::vector<double> c1 = project(resolution, n1);
    const std::vector<double> c2 = project(2 * resolution, n2);
    double delta = std::abs(n2 - n1);
    for (int i = 0; i < M; ++i) delta = std::max(delta, std::abs(c2[i] - c1[i]));
    if (delta > quadrature_tol)
        throw SolverError("expand_boundary_data: quadrature not converged", delta, 2 * resolution);
    double captured = 0.0;
    for (double c : c2) captured += c * c;
    Expansion e{ConeHarmonic(spec, c2), n2, std::max(0.0, n2 - captured), delta};
    e.harmonic.set_spectral_tail(e.spectral_tail);
    return e;
}

/// fint_{B_r(o)} |grad u|^2 dm_c = (N / m_Sigma) sum_{i>=1} c_i^2 alpha_i r^{2 alpha_i - 2}.
inline double energy_average(const ConeHarmonic& h, double r) {
    if (!(r >= 0.0)) throw InvalidArgument("energy_average: r must be nonnegative");
    const CrossSectionSpectrum& s = h.spectrum();
    double sum = 0.0;
    for (std::size_t i = 0; i < h.truncation(); ++i) {
        const double a = h.exponents()[i];
        if (a == 0.0) continue;
        const double c = h.coefficients()[i];
        sum += c * c * a * std::pow(r, 2.0 * a - 2.0);
    }
    return s.N() / s.total_measure() * sum;
}

struct MonotonicityReport {
    bool monotone = true;
    std::size_t pairs_checked = 0;
    double worst_drop = 0.0;              ///< largest relative decrease seen
    std::optional<std::size_t> bad_pair;  ///< index k with avg(r_{k+1}) < avg(r_k)
    std::optional<std::size_t> bad_mode;  ///< a mode with 0 < alpha < 1, when present
    std::vector<double> averages;
};

inline MonotonicityReport check_monotonicity(const ConeHarmonic& h, const std::vector<double>& radii,
                                             double tol = 1e-10) {
    for (std::size_t k = 0; k < radii.size(); ++k) {
        if (!(radii[k] > 0.0)) throw InvalidArgument("check_monotonicity: radii must be positive");
        if (k && !(radii[k] > radii[k - 1])) throw InvalidArgument("check_monotonicity: radii must increase");
    }
    MonotonicityReport rep;
    for (double r : radii) rep.averages.push_back(energy_average(h, r));
    for (std::size_t k = 0; k + 1 < radii.size(); ++k) {
        ++rep.pairs_checked;
        const double a = rep.averages[k];
        const double b = rep.averages[k + 1];
        const double drop = (a - b) / std::max(std::abs(a), 1e-300);
        if (a - b > tol * std::max(1.0, std::abs(a))) {
            if (rep.monotone) rep.bad_pair = k;
            rep.monotone = false;
        }
        rep.worst_drop = std::max(rep.worst_drop, drop);
    }
    for (std::size_t i = 0; i < h.truncation(); ++i) {
        const double a = h.exponents()[i];
        if (h.coefficients()[i] != 0.0 && a > 0.0 && a < 1.0) {
            rep.bad_mode = i;
            break;
        }
    }
    return rep;
}

/// Direct quadrature of fint_{B_r} |grad u|^2 in polar form, for cross-validation.
inline double energy_average_quadrature(const ConeHarmonic& h, double r, int radial = 48, int angular = 48) {
    const CrossSectionSpectrum& s = h.spectrum();
    const CrossQuadrature q = s.quadrature(angular);
    const GaussRule g = gauss_legendre(radial, 0.0, r);
    double sum = 0.0;
    for (int k = 0; k < radial; ++k) {
        const double rk = g.nodes[k];
        const double w = g.weights[k] * std::pow(rk, s.N() - 1.0);
        for (std::size_t p = 0; p < q.nodes.size(); ++p) sum += w * q.weights[p] * h.grad_sq(rk, q.nodes[p]);
    }
    return sum / cone_ball_volume(r, s.N(), s.total_measure());
}

}  // namespace conelab
