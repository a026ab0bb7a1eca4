#pragma once

// Coefficient fields A(x) of divergence-form operators, the Riemannian metric they
// induce in dimension n >= 3, and the explicit conical families used throughout.

#include "conelab/sampling.hpp"
#include "conelab/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace conelab {

struct Ellipticity {
    double lambda = 0.0;  ///< smallest eigenvalue over the sampled set
    double Lambda = 0.0;  ///< largest operator norm over the sampled set
};

/// Symmetric, uniformly elliptic matrix field on a ball about the origin.
/// Immutable; copies share the evaluator.
class CoefficientField {
public:
    using Evaluator = std::function<Matrix(const Point&)>;

    CoefficientField(int dim, Evaluator eval, std::string name, bool singular_at_origin = false,
                     std::optional<Ellipticity> known = std::nullopt, double radius = 1.0)
        : dim_(dim),
          eval_(std::make_shared<Evaluator>(std::move(eval))),
          name_(std::move(name)),
          singular_(singular_at_origin),
          known_(known),
          radius_(radius) {
        if (dim_ < 1 || dim_ > kMaxDim) throw InvalidArgument("coefficient dimension out of range");
        if (!(radius_ > 0.0)) throw InvalidArgument("coefficient domain radius must be positive");
    }

    Matrix operator()(const Point& x) const {
        if (singular_ && x.squaredNorm() == 0.0)
            throw DegenerateError(name_ + " is discontinuous at the origin; it is never sampled there",
                                  x);
        return (*eval_)(x);
    }

    int dimension() const noexcept { return dim_; }
    double radius() const noexcept { return radius_; }
    const std::string& name() const noexcept { return name_; }
    bool singular_at_origin() const noexcept { return singular_; }
    const std::optional<Ellipticity>& known_ellipticity() const noexcept { return known_; }

    CoefficientField with_radius(double r) const {
        CoefficientField copy = *this;
        if (!(r > 0.0)) throw InvalidArgument("coefficient domain radius must be positive");
        copy.radius_ = r;
        return copy;
    }

private:
    int dim_;
    std::shared_ptr<const Evaluator> eval_;
    std::string name_;
    bool singular_;
    std::optional<Ellipticity> known_;
    double radius_;
};

/// Riemannian metric g_ij(x) with derived inverse and determinant G.
class MetricField {
public:
    using Evaluator = std::function<Matrix(const Point&)>;

    MetricField(int dim, Evaluator eval, std::string name, bool singular_at_origin = false)
        : dim_(dim),
          eval_(std::make_shared<Evaluator>(std::move(eval))),
          name_(std::move(name)),
          singular_(singular_at_origin) {}

    Matrix metric(const Point& x) const {
        if (singular_ && x.squaredNorm() == 0.0)
            throw DegenerateError(name_ + " is singular at the origin", x);
        return (*eval_)(x);
    }

    Matrix inverse(const Point& x) const {
        const Matrix g = metric(x);
        Eigen::LLT<Matrix> llt(g);
        if (llt.info() != Eigen::Success)
            throw DegenerateError("metric " + name_ + " is not positive definite at " +
                                      detail::format_point(x),
                                  x);
        return llt.solve(Matrix::Identity(dim_, dim_));
    }

    double det(const Point& x) const { return metric(x).determinant(); }

    int dimension() const noexcept { return dim_; }
    const std::string& name() const noexcept { return name_; }
    bool singular_at_origin() const noexcept { return singular_; }

private:
    int dim_;
    std::shared_ptr<const Evaluator> eval_;
    std::string name_;
    bool singular_;
};

namespace detail {

inline double spectral_norm_symmetric(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& m, double rel = 1e-12) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel * scale;
}

}  // namespace detail

/// Operator (spectral) norm; the matrix need not be symmetric.
inline double spectral_norm(const Matrix& m) {
    if (detail::is_symmetric(m, 1e-14)) return detail::spectral_norm_symmetric(m);
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

/// Induced metric: g^{ij} = a^{ij} / det(a)^{1/(n-2)}, g_ij its inverse.
inline MetricField metric_from_coefficient(const CoefficientField& a) {
    const int n = a.dimension();
    if (n < 3)
        throw InvalidArgument("metric_from_coefficient: dimension " + std::to_string(n) +
                              " < 3, the exponent 1/(n-2) is undefined");
    auto eval = [a, n](const Point& x) -> Matrix {
        const Matrix m = a(x);
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success)
            throw DegenerateError("coefficient " + a.name() + " is not SPD at " +
                                      detail::format_point(x),
                                  x);
        const Matrix L = llt.matrixL();
        const double det = L.diagonal().prod() * L.diagonal().prod();
        const double factor = std::pow(det, 1.0 / (n - 2));
        return llt.solve(Matrix::Identity(n, n)) * factor;
    };
    return MetricField(n, eval, "metric(" + a.name() + ")", a.singular_at_origin());
}

/// Inverse transform: a^{ij} = g^{ij} sqrt(G). Valid for every n >= 2.
inline CoefficientField coefficient_from_metric(const MetricField& g, double radius = 1.0) {
    const int n = g.dimension();
    auto eval = [g, n](const Point& x) -> Matrix {
        const Matrix m = g.metric(x);
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success)
            throw DegenerateError("metric " + g.name() + " is degenerate at " +
                                      detail::format_point(x),
                                  x);
        const Matrix L = llt.matrixL();
        const double sqrtG = L.diagonal().prod();
        if (!(sqrtG > 0.0))
            throw DegenerateError("metric " + g.name() + " has G <= 0 at " + detail::format_point(x),
                                  x);
        return llt.solve(Matrix::Identity(n, n)) * sqrtG;
    };
    return CoefficientField(n, eval, "coefficient(" + g.name() + ")", g.singular_at_origin(),
                            std::nullopt, radius);
}

/// sup_x max(sqrt(max eig g), 1/sqrt(min eig g)) over samples of the ball.
inline double bilipschitz_constant(const MetricField& g, double radius, std::size_t samples = 4096) {
    double c1 = 1.0;
    for (const Point& u : sobol_unit_ball(g.dimension(), samples)) {
        const Point x = radius * u;
        Eigen::SelfAdjointEigenSolver<Matrix> es(g.metric(x), Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (!(lo > 0.0)) throw DegenerateError("degenerate metric sample", x);
        c1 = std::max({c1, std::sqrt(hi), 1.0 / std::sqrt(lo)});
    }
    return c1;
}

/// (lambda, Lambda) from quasi-random samples of B_radius(center).
inline Ellipticity ellipticity_constants(const CoefficientField& a, const Point& center, double radius,
                                         std::size_t samples = 4096) {
    if (samples == 0) throw InvalidArgument("ellipticity_constants: empty sample set");
    Ellipticity e{std::numeric_limits<double>::infinity(), 0.0};
    for (const Point& u : sobol_unit_ball(a.dimension(), samples)) {
        const Point x = center + radius * u;
        if (a.singular_at_origin() && x.squaredNorm() == 0.0) continue;
        const Matrix m = a(x);
        if (!detail::is_symmetric(m))
            throw DegenerateError("coefficient " + a.name() + " is not symmetric at " +
                                      detail::format_point(x),
                                  x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        if (!(lo > 0.0))
            throw DegenerateError("degenerate ellipticity: smallest eigenvalue " + std::to_string(lo) +
                                      " at " + detail::format_point(x),
                                  x);
        e.lambda = std::min(e.lambda, lo);
        e.Lambda = std::max(e.Lambda, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    return e;
}

inline Ellipticity ellipticity_constants(const CoefficientField& a) {
    return ellipticity_constants(a, Point::Zero(a.dimension()), a.radius());
}

// ---------------------------------------------------------------------------
// Families

inline CoefficientField constant_coefficient(const Matrix& m, std::string name) {
    if (m.rows() != m.cols()) throw InvalidArgument("constant coefficient must be square");
    if (!detail::is_symmetric(m)) throw InvalidArgument("constant coefficient must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
        throw DegenerateError("constant coefficient " + name + " is not positive definite");
    const Ellipticity e{es.eigenvalues().minCoeff(), es.eigenvalues().cwiseAbs().maxCoeff()};
    return CoefficientField(static_cast<int>(m.rows()), [m](const Point&) { return m; },
                            std::move(name), false, e);
}

inline CoefficientField identity_coefficient(int n) {
    return constant_coefficient(Matrix::Identity(n, n), "identity");
}

inline CoefficientField scalar_coefficient(int n, double c) {
    if (!(c > 0.0)) throw InvalidArgument("scalar coefficient must be positive");
    return constant_coefficient(c * Matrix::Identity(n, n), "scalar:" + std::to_string(c));
}

inline CoefficientField diagonal_coefficient(const std::vector<double>& d) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return constant_coefficient(m, "diag");
}

/// Coefficient of the graph of f(x) = (sum a_i x_i^2)^{1/2}: with v_i = a_i x_i / f,
/// a(x) = (1 + |v|^2)^{1/2} (I + v v^T)^{-1}. Discontinuous at the origin.
inline CoefficientField convex_graph_coefficient(const std::vector<double>& a) {
    const int n = static_cast<int>(a.size());
    if (n < 3) throw InvalidArgument("convex_graph_coefficient: need n >= 3 weights");
    for (double ai : a)
        if (!(ai > 0.0)) throw InvalidArgument("convex_graph_coefficient: weights must be positive");
    const double amax = *std::max_element(a.begin(), a.end());
    // |v|^2 is a weighted mean of the a_i, so the eigenvalues (1+|v|^2)^{-1/2} and
    // (1+|v|^2)^{1/2} are bracketed by the largest weight.
    const Ellipticity e{1.0 / std::sqrt(1.0 + amax), std::sqrt(1.0 + amax)};
    auto eval = [a, n](const Point& x) -> Matrix {
        double f2 = 0.0;
        for (int i = 0; i < n; ++i) f2 += a[i] * x[i] * x[i];
        const double f = std::sqrt(f2);
        Point v(n);
        for (int i = 0; i < n; ++i) v[i] = a[i] * x[i] / f;
        const double s = 1.0 + v.squaredNorm();
        // Sherman-Morrison: (I + v v^T)^{-1} = I - v v^T / (1 + |v|^2).
        Matrix m = Matrix::Identity(n, n) - (v * v.transpose()) / s;
        return std::sqrt(s) * m;
    };
    std::string name = "convex_graph:";
    for (int i = 0; i < n; ++i) name += (i ? "," : "") + std::to_string(a[i]);
    return CoefficientField(n, eval, name, true, e);
}

/// Metric of the two-dimensional cone of total angle theta written in Cartesian
/// coordinates of the plane: g = r^ r^T + k^2 (I - r^ r^T), k = theta / 2pi.
inline MetricField cone2d_metric(double theta) {
    if (!(theta > 0.0) || theta > 2.0 * std::numbers::pi + 1e-12)
        throw InvalidArgument("cone angle must lie in (0, 2pi]");
    const double k = theta / (2.0 * std::numbers::pi);
    auto eval = [k](const Point& x) -> Matrix {
        const Point rhat = x / x.norm();
        const Matrix P = rhat * rhat.transpose();
        return P + k * k * (Matrix::Identity(2, 2) - P);
    };
    return MetricField(2, eval, "cone2d:" + std::to_string(theta), theta < 2.0 * std::numbers::pi);
}

/// Coefficient k r^r^T + k^{-1}(I - r^r^T) whose harmonic functions are those of
/// the cone of angle theta, radius and polar angle scaled by k.
inline CoefficientField cone2d_coefficient(double theta) {
    const double k = theta / (2.0 * std::numbers::pi);
    CoefficientField c = coefficient_from_metric(cone2d_metric(theta));
    const Ellipticity e{std::min(k, 1.0 / k), std::max(k, 1.0 / k)};
    return CoefficientField(2, [c](const Point& x) { return c(x); },
                            "cone2d:" + std::to_string(theta), c.singular_at_origin(), e);
}

/// Scalar-profile perturbations A(x) = Abar(x) m(|x|) or Abar + eps I.
struct Perturbation {
    enum class Kind { power, log, offset };
    Kind kind = Kind::power;
    double eps = 0.0;
    double beta = 0.5;

    /// Analytic envelope of |A - Abar| relative to |Abar| (power, log) or absolute (offset).
    double profile(double r) const {
        switch (kind) {
            case Kind::power: return eps * std::pow(r, beta);
            case Kind::log: return r > 0.0 ? eps / std::log(std::numbers::e / r) : 0.0;
            case Kind::offset: return eps;
        }
        return 0.0;
    }

    std::string describe() const {
        switch (kind) {
            case Kind::power: return "power:" + std::to_string(eps) + ":" + std::to_string(beta);
            case Kind::log: return "log:" + std::to_string(eps);
            case Kind::offset: return "offset:" + std::to_string(eps);
        }
        return {};
    }
};

inline CoefficientField perturbed_coefficient(const CoefficientField& base, const Perturbation& p) {
    const int n = base.dimension();
    auto eval = [base, p, n](const Point& x) -> Matrix {
        const Matrix b = base(x);
        if (p.kind == Perturbation::Kind::offset) return b + p.eps * Matrix::Identity(n, n);
        return b * (1.0 + p.profile(x.norm()));
    };
    const bool singular = base.singular_at_origin() || p.kind == Perturbation::Kind::log;
    return CoefficientField(n, eval, "perturbed:" + base.name() + "," + p.describe(), singular,
                            std::nullopt, base.radius());
}

namespace detail {

inline double parse_double(const std::string& text, const std::string& context) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw InvalidArgument(context + ": '" + text + "' is not a number");
    }
    if (used != text.size()) throw InvalidArgument(context + ": '" + text + "' is not a number");
    return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(sep, start);
        out.push_back(text.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<double> parse_list(const std::string& text, const std::string& context) {
    std::vector<double> out;
    for (const std::string& tok : split(text, ',')) out.push_back(parse_double(tok, context));
    return out;
}

}  // namespace detail

inline Perturbation parse_perturbation(const std::string& spec) {
    const auto parts = detail::split(spec, ':');
    Perturbation p;
    if (parts[0] == "power" && parts.size() == 3) {
        p.kind = Perturbation::Kind::power;
        p.eps = detail::parse_double(parts[1], "power modulus eps");
        p.beta = detail::parse_double(parts[2], "power modulus beta");
        if (!(p.beta > 0.0)) throw InvalidArgument("power modulus needs beta > 0");
    } else if (parts[0] == "log" && parts.size() == 2) {
        p.kind = Perturbation::Kind::log;
        p.eps = detail::parse_double(parts[1], "log modulus eps");
    } else if (parts[0] == "offset" && parts.size() == 2) {
        p.kind = Perturbation::Kind::offset;
        p.eps = detail::parse_double(parts[1], "offset modulus eps");
    } else {
        throw InvalidArgument("unknown modulus '" + spec + "' (power:eps:beta, log:eps, offset:eps)");
    }
    if (p.eps < 0.0) throw InvalidArgument("modulus eps must be nonnegative");
    return p;
}

/// Builds a field from its config identifier. `dim` fixes the dimension of
/// identity and scalar fields and is checked against the others (0 = infer).
inline CoefficientField parse_coefficient(const std::string& spec, int dim = 0) {
    const std::size_t colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    const std::string body = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
    auto need_dim = [&]() {
        if (dim < 1) throw InvalidArgument("coefficient '" + spec + "' needs an explicit dimension");
        return dim;
    };
    auto check_dim = [&](const CoefficientField& c) {
        if (dim > 0 && c.dimension() != dim)
            throw InvalidArgument("coefficient '" + spec + "' has dimension " +
                                  std::to_string(c.dimension()) + ", expected " + std::to_string(dim));
        return c;
    };
    if (head == "identity" && body.empty()) return identity_coefficient(need_dim());
    if (head == "scalar") return scalar_coefficient(need_dim(), detail::parse_double(body, "scalar"));
    if (head == "diag") return check_dim(diagonal_coefficient(detail::parse_list(body, "diag")));
    if (head == "convex_graph")
        return check_dim(convex_graph_coefficient(detail::parse_list(body, "convex_graph")));
    if (head == "cone2d") return check_dim(cone2d_coefficient(detail::parse_double(body, "cone2d")));
    if (head == "perturbed") {
        const std::size_t comma = body.rfind(',');
        if (comma == std::string::npos)
            throw InvalidArgument("perturbed coefficient needs 'perturbed:<base>,<modulus>'");
        return perturbed_coefficient(parse_coefficient(body.substr(0, comma), dim),
                                     parse_perturbation(body.substr(comma + 1)));
    }
    throw InvalidArgument("unknown coefficient '" + spec + "'");
}

}  // namespace conelab
