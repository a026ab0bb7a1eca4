#pragma once

#include "conelab/types.hpp"

#include <boost/random/sobol.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace conelab {

/// Low-discrepancy points of the unit cube [0,1)^dim (Sobol sequence).
/// `skip` discards that many leading points, which is how seeds enter.
inline std::vector<Point> sobol_cube(int dim, std::size_t count, std::uint64_t skip = 0) {
    boost::random::sobol engine(static_cast<std::size_t>(dim));
    if (skip > 0) engine.discard(skip * static_cast<std::uint64_t>(dim));
    const double scale = 1.0 / (static_cast<double>(engine.max()) + 1.0);
    std::vector<Point> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Point p(dim);
        for (int i = 0; i < dim; ++i) p[i] = static_cast<double>(engine()) * scale;
        out.push_back(p);
    }
    return out;
}

/// Sobol points under a random toroidal shift drawn from `seed`; seed 0 is unshifted.
inline std::vector<Point> shifted_sobol_cube(int dim, std::size_t count, std::uint64_t seed, std::uint64_t skip = 0) {
    std::vector<Point> pts = sobol_cube(dim, count, skip);
    if (seed == 0) return pts;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Point shift(dim);
    for (int i = 0; i < dim; ++i) shift[i] = u(rng);
    for (Point& p : pts)
        for (int i = 0; i < dim; ++i) p[i] = std::fmod(p[i] + shift[i], 1.0);
    return pts;
}

/// Low-discrepancy points filling the closed unit ball, the origin excluded.
/// The cube sequence is rejection-sampled; a quarter of the budget is placed on
/// the bounding sphere so that sup-norms over closed balls see the rim.
inline std::vector<Point> sobol_unit_ball(int dim, std::size_t count) {
    const std::size_t on_sphere = count / 4;
    const std::size_t inside = count - on_sphere;
    std::vector<Point> out;
    out.reserve(count);

    boost::random::sobol engine(static_cast<std::size_t>(dim));
    const double scale = 1.0 / (static_cast<double>(engine.max()) + 1.0);
    Point p(dim);
    while (out.size() < inside) {
        for (int i = 0; i < dim; ++i) p[i] = 2.0 * static_cast<double>(engine()) * scale - 1.0;
        const double r2 = p.squaredNorm();
        if (r2 <= 1.0 && r2 > 1e-24) out.push_back(p);
    }
    while (out.size() < count) {
        for (int i = 0; i < dim; ++i) p[i] = 2.0 * static_cast<double>(engine()) * scale - 1.0;
        const double r2 = p.squaredNorm();
        if (r2 <= 1.0 && r2 > 1e-6) out.push_back(p / std::sqrt(r2));
    }
    return out;
}

/// Gauss-Legendre nodes and weights on [a, b].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
    if (n < 1) throw InvalidArgument("gauss_legendre: need at least one node");
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        double p0 = 1.0;
        double p1 = z;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.nodes[i] = mid - half * z;
        rule.nodes[n - 1 - i] = mid + half * z;
        rule.weights[i] = half * w;
        rule.weights[n - 1 - i] = half * w;
    }
    return rule;
}

}  // namespace conelab
