#include "conelab/metric_ball.hpp"

#include <gtest/gtest.h>

using namespace conelab;

namespace {

double worst_relative(const Mesh& m, const std::vector<double>& d, const std::function<double(const Point&)>& exact,
                      double r_lo, double r_hi) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        const double e = exact(m.node(i));
        if (e < r_lo || e > r_hi) continue;
        worst = std::max(worst, std::abs(d[i] / e - 1.0));
    }
    return worst;
}

}  // namespace

TEST(MetricBall, EuclideanDistance) {
    const Mesh m = ball_grid_mesh(3, 1.0, 32);
    const MetricField g(3, [](const Point&) { return Matrix(Matrix::Identity(3, 3)); }, "I");
    const auto d = metric_distances(m, g, Point::Zero(3));
    // Reach-3 stencil: path directions are quantised, worst overshoot a few percent.
    EXPECT_LT(worst_relative(m, d, [](const Point& x) { return x.norm(); }, 0.2, 0.9), 0.03);
}

TEST(MetricBall, ConvexGraphConeDistance) {
    const Mesh m = ball_grid_mesh(3, 0.52, 48);
    const MetricField g = metric_from_coefficient(convex_graph_coefficient({1.0, 1.0, 1.0}));
    const auto d = metric_distances(m, g, Point::Zero(3), 0.6);
    // Rays from the vertex are geodesics of the cone and have length sqrt(2)|x|.
    EXPECT_LT(worst_relative(m, d, [](const Point& x) { return std::sqrt(2.0) * x.norm(); }, 0.1, 0.55), 0.03);
}

TEST(MetricBall, AnisotropicConstantMetric) {
    const Mesh m = box_mesh(2, -1.0, 1.0, 40);
    Matrix G = Matrix::Zero(2, 2);
    G.diagonal() << 0.25, 1.0;
    const MetricField g(2, [G](const Point&) { return G; }, "diag");
    const auto d = metric_distances(m, g, Point::Zero(2));
    EXPECT_LT(worst_relative(m, d, [G](const Point& x) { return std::sqrt(x.dot(G * x)); }, 0.2, 0.9), 0.05);
    EXPECT_NEAR(bilipschitz_constant(g, 1.0), 2.0, 1e-12);
}

TEST(MetricBall, EarlyTermination) {
    const Mesh m = box_mesh(2, -1.0, 1.0, 20);
    const MetricField g(2, [](const Point&) { return Matrix(Matrix::Identity(2, 2)); }, "I");
    const auto d = metric_distances(m, g, Point::Zero(2), 0.3);
    for (std::size_t i = 0; i < m.num_nodes(); ++i)
        if (m.node(i).norm() > 0.5) EXPECT_TRUE(std::isinf(d[i]));
    EXPECT_THROW(metric_distances(m, g, point({0.01, 0.0})), InvalidArgument);
}
