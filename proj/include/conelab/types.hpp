#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace conelab {

/// Largest ambient dimension handled by the coefficient machinery.
inline constexpr int kMaxDim = 6;

using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A coefficient or metric sample is not symmetric positive definite.
class DegenerateError : public Error {
public:
    DegenerateError(const std::string& what, Point where)
        : Error(what), point_(std::move(where)) {}
    explicit DegenerateError(const std::string& what) : Error(what) {}

    const Point& point() const noexcept { return point_; }

private:
    Point point_;
};

/// The requested quantity is below what the discretization can resolve.
class ResolutionError : public Error {
public:
    ResolutionError(const std::string& what, double minimum_admissible)
        : Error(what), minimum_(minimum_admissible) {}

    double minimum_admissible() const noexcept { return minimum_; }

private:
    double minimum_;
};

/// The iterative solver hit its iteration cap.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// An input that must come with a harmonicity certificate did not.
class CertificationError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string format_point(const Point& x) {
    std::ostringstream os;
    os << '(';
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i) os << ", ";
        os << x[i];
    }
    os << ')';
    return os.str();
}

inline Point make_point(std::initializer_list<double> values) {
    Point p(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) p[i++] = v;
    return p;
}

}  // namespace detail

inline Point point(std::initializer_list<double> values) { return detail::make_point(values); }

/// Volume of the Euclidean unit ball in dimension n.
inline double unit_ball_volume(int n) {
    return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

}  // namespace conelab
