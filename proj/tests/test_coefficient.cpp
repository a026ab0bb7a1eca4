#include "conelab/coefficient.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace conelab;

namespace {

// Reference transform written with generic dense routines, independent of the
// Cholesky path used by the library.
Matrix reference_metric(const Matrix& a) {
    const int n = static_cast<int>(a.rows());
    const Matrix ginv = a / std::pow(a.determinant(), 1.0 / (n - 2));
    return ginv.inverse();
}

Matrix random_spd(std::mt19937_64& rng, int n, double spread) {
    std::normal_distribution<double> nd;
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i, j) = nd(rng);
    Matrix m = spread * b * b.transpose() / n + Matrix::Identity(n, n);
    return 0.5 * (m + m.transpose());
}

// Smooth SPD field x -> M0 + |x|^2 M1 + sin(x_0) M2 M2^T.
CoefficientField random_field(std::mt19937_64& rng, int n) {
    const Matrix m0 = random_spd(rng, n, 2.0);
    const Matrix m1 = random_spd(rng, n, 1.0);
    const Matrix m2 = random_spd(rng, n, 0.5) * 0.3;
    return CoefficientField(n, [=](const Point& x) {
        Matrix m = m0 + x.squaredNorm() * m1 + (0.5 + 0.5 * std::sin(x[0])) * (m2 * m2.transpose());
        return Matrix(0.5 * (m + m.transpose()));
    }, "random");
}

double rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

Matrix rotation(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> nd;
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i, j) = nd(rng);
    Eigen::HouseholderQR<Matrix> qr(b);
    Matrix q = qr.householderQ();
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return q;
}

}  // namespace

TEST(Metric, IdentityIsFixed) {
    const MetricField g = metric_from_coefficient(identity_coefficient(3));
    const Point x = point({0.3, -0.2, 0.1});
    EXPECT_LT((g.metric(x) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Metric, ScalarFourGivesSixteen) {
    const MetricField g = metric_from_coefficient(scalar_coefficient(3, 4.0));
    const Point x = point({0.1, 0.2, 0.3});
    EXPECT_LT(rel_err(g.metric(x), 16.0 * Matrix::Identity(3, 3)), 1e-14);
    const CoefficientField back = coefficient_from_metric(g);
    EXPECT_LT(rel_err(back(x), 4.0 * Matrix::Identity(3, 3)), 1e-14);
}

TEST(Metric, SixteenIdentityMetricGivesFour) {
    const MetricField g(3, [](const Point&) { return Matrix(16.0 * Matrix::Identity(3, 3)); }, "16I");
    const CoefficientField a = coefficient_from_metric(g);
    EXPECT_LT(rel_err(a(point({0.5, 0.0, 0.0})), 4.0 * Matrix::Identity(3, 3)), 1e-14);
}

TEST(Metric, RejectsLowDimension) {
    EXPECT_THROW(metric_from_coefficient(identity_coefficient(2)), InvalidArgument);
}

TEST(Metric, RejectsNonSpdSample) {
    CoefficientField bad(3, [](const Point& x) {
        Matrix m = Matrix::Identity(3, 3);
        if (x[0] > 0.5) m(0, 0) = -1.0;
        return m;
    }, "bad");
    const MetricField g = metric_from_coefficient(bad);
    EXPECT_NO_THROW(g.metric(point({0.1, 0.0, 0.0})));
    try {
        g.metric(point({0.7, 0.0, 0.0}));
        FAIL() << "expected DegenerateError";
    } catch (const DegenerateError& e) {
        EXPECT_DOUBLE_EQ(e.point()[0], 0.7);
    }
}

TEST(Metric, DegenerateMetricRejected) {
    const MetricField g(3, [](const Point&) {
        Matrix m = Matrix::Identity(3, 3);
        m(2, 2) = 0.0;
        return m;
    }, "flat");
    EXPECT_THROW(coefficient_from_metric(g)(point({0.1, 0.1, 0.1})), DegenerateError);
}

TEST(Metric, MatchesReferenceAndRoundTripsConvexGraph) {
    const CoefficientField a = convex_graph_coefficient({1.0, 1.0, 1.0});
    const Point x = point({1.0, 0.0, 0.0});
    const MetricField g = metric_from_coefficient(a);
    EXPECT_LT(rel_err(g.metric(x), reference_metric(a(x))), 1e-13);
    EXPECT_LT(rel_err(coefficient_from_metric(g)(x), a(x)), 1e-10);
}

TEST(Metric, RoundTripRandomFields) {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int n : {3, 4, 5}) {
        for (int f = 0; f < 100; ++f) {
            const CoefficientField a = random_field(rng, n);
            const CoefficientField back = coefficient_from_metric(metric_from_coefficient(a));
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            for (int s = 0; s < 5; ++s) {
                Point x(n);
                for (int i = 0; i < n; ++i) x[i] = u(rng);
                worst = std::max(worst, rel_err(back(x), a(x)));
            }
        }
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Metric, RoundTripRandomMetricsFourD) {
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int f = 0; f < 100; ++f) {
        const CoefficientField a = random_field(rng, 4);
        const MetricField g = metric_from_coefficient(a);
        const MetricField g2 = metric_from_coefficient(coefficient_from_metric(g));
        const Point x = point({0.1 * f / 100.0, -0.3, 0.2, 0.05});
        worst = std::max(worst, rel_err(g2.metric(x), g.metric(x)));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Metric, DeterminantIdentity) {
    std::mt19937_64 rng(3);
    for (int n : {3, 4, 5}) {
        const CoefficientField a = random_field(rng, n);
        const MetricField g = metric_from_coefficient(a);
        Point x = Point::Constant(n, 0.2);
        const double G = g.det(x);
        const double expect = std::pow(a(x).determinant(), 2.0 / (n - 2));
        EXPECT_NEAR(G / expect, 1.0, 1e-12);
        const Matrix prod = g.metric(x) * g.inverse(x);
        EXPECT_LT((prod - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(ConvexGraph, HandEvaluationAtE1) {
    const CoefficientField a = convex_graph_coefficient({1.0, 1.0, 1.0});
    const Point x = point({1.0, 0.0, 0.0});
    Matrix expect = Matrix::Zero(3, 3);
    expect.diagonal() << 0.5, 1.0, 1.0;
    expect *= std::sqrt(2.0);
    EXPECT_LT((a(x) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ConvexGraph, BruteForceFormula) {
    const std::vector<double> w{1.0, 2.0, 0.5};
    const CoefficientField a = convex_graph_coefficient(w);
    const Point x = point({0.3, -0.7, 0.4});
    const double f = std::sqrt(w[0] * 0.09 + w[1] * 0.49 + w[2] * 0.16);
    Matrix m = Matrix::Identity(3, 3);
    double vv = 0.0;
    for (int i = 0; i < 3; ++i) {
        vv += std::pow(w[i] * x[i] / f, 2);
        for (int j = 0; j < 3; ++j) m(i, j) += (w[i] * x[i] / f) * (w[j] * x[j] / f);
    }
    const Matrix expect = std::sqrt(1.0 + vv) * m.inverse();
    EXPECT_LT(rel_err(a(x), expect), 1e-14);
}

TEST(ConvexGraph, RotationEquivariance) {
    const CoefficientField a = convex_graph_coefficient({1.0, 1.0, 1.0});
    std::mt19937_64 rng(5);
    for (int k = 0; k < 20; ++k) {
        const Matrix q = rotation(rng, 3);
        const Point x = point({0.2 + 0.01 * k, -0.1, 0.4});
        const Point qx = q * x;
        EXPECT_LT((a(qx) - q * a(x) * q.transpose()).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(ConvexGraph, DiscontinuousAtOrigin) {
    const CoefficientField a = convex_graph_coefficient({1.0, 1.0, 1.0});
    const Point e1 = point({1.0, 0.0, 0.0});
    const Point d = point({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0.0});
    for (double t : {1e-2, 1e-5, 1e-9}) {
        const double gap = (a(t * e1) - a(t * d)).cwiseAbs().maxCoeff();
        EXPECT_GT(gap, 0.1);
    }
    EXPECT_THROW(a(Point::Zero(3)), DegenerateError);
}

TEST(Ellipticity, Identity) {
    const Ellipticity e = ellipticity_constants(identity_coefficient(3));
    EXPECT_DOUBLE_EQ(e.lambda, 1.0);
    EXPECT_DOUBLE_EQ(e.Lambda, 1.0);
}

TEST(Ellipticity, Diagonal) {
    const Ellipticity e = ellipticity_constants(diagonal_coefficient({1.0, 4.0, 9.0}));
    EXPECT_NEAR(e.lambda, 1.0, 1e-14);
    EXPECT_NEAR(e.Lambda, 9.0, 1e-14);
}

TEST(Ellipticity, ConvexGraphOnPuncturedBall) {
    const CoefficientField a = convex_graph_coefficient({1.0, 1.0, 1.0});
    const Ellipticity e = ellipticity_constants(a);
    EXPECT_NEAR(e.lambda, std::sqrt(2.0) / 2.0, 1e-6);
    EXPECT_NEAR(e.Lambda, std::sqrt(2.0), 1e-6);
    ASSERT_TRUE(a.known_ellipticity().has_value());
    EXPECT_NEAR(a.known_ellipticity()->lambda, e.lambda, 1e-12);
}

TEST(Ellipticity, ScalesLinearly) {
    std::mt19937_64 rng(9);
    const CoefficientField a = random_field(rng, 3);
    const double c = 3.5;
    const CoefficientField ca(3, [a, c](const Point& x) { return Matrix(c * a(x)); }, "ca");
    const Ellipticity e = ellipticity_constants(a);
    const Ellipticity ec = ellipticity_constants(ca);
    EXPECT_NEAR(ec.lambda / e.lambda, c, 1e-12);
    EXPECT_NEAR(ec.Lambda / e.Lambda, c, 1e-12);
    const CoefficientField back = coefficient_from_metric(metric_from_coefficient(ca));
    EXPECT_LT(rel_err(back(point({0.1, 0.2, 0.3})), ca(point({0.1, 0.2, 0.3}))), 1e-12);
}

TEST(Ellipticity, DegenerateRejected) {
    const CoefficientField bad(3, [](const Point& x) {
        Matrix m = Matrix::Identity(3, 3);
        m(1, 1) = x[1];
        return m;
    }, "bad");
    EXPECT_THROW(ellipticity_constants(bad), DegenerateError);
}

TEST(Cone2d, CoefficientEigenvalues) {
    const double theta = std::numbers::pi;
    const CoefficientField a = cone2d_coefficient(theta);
    const Point x = point({0.0, 0.5});
    const Matrix m = a(x);
    // k = 1/2: radial eigenvalue k, angular eigenvalue 1/k.
    EXPECT_NEAR(m(1, 1), 0.5, 1e-14);
    EXPECT_NEAR(m(0, 0), 2.0, 1e-14);
    EXPECT_NEAR(m(0, 1), 0.0, 1e-14);
}

TEST(Parse, Families) {
    EXPECT_EQ(parse_coefficient("identity", 3).dimension(), 3);
    EXPECT_NEAR(parse_coefficient("scalar:2.5", 2)(point({0.1, 0.1}))(0, 0), 2.5, 1e-15);
    const CoefficientField cg = parse_coefficient("convex_graph:1,1,1");
    EXPECT_EQ(cg.dimension(), 3);
    const CoefficientField p = parse_coefficient("perturbed:convex_graph:1,1,1,power:0.2:0.5");
    const Point x = point({0.25, 0.0, 0.0});
    EXPECT_LT(rel_err(p(x), cg(x) * (1.0 + 0.2 * 0.5)), 1e-14);
    const CoefficientField off = parse_coefficient("perturbed:identity,offset:0.1", 3);
    EXPECT_NEAR(off(x)(0, 0), 1.1, 1e-15);
    EXPECT_THROW(parse_coefficient("bogus"), InvalidArgument);
    EXPECT_THROW(parse_coefficient("scalar:abc", 3), InvalidArgument);
    EXPECT_THROW(parse_coefficient("convex_graph:1,1,1", 4), InvalidArgument);
    EXPECT_THROW(parse_coefficient("perturbed:identity,wiggle:1", 3), InvalidArgument);
}
