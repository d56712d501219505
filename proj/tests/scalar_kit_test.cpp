#include <gtest/gtest.h>

#include <cmath>

#include "mmerge/scalar_kit.hpp"

using namespace mmerge;

TEST(Sigma, MidpointValueAndSlope) {
    EXPECT_DOUBLE_EQ(detail::sigma(0.5), 0.5);
    // s(1-s)(1/t^2 + 1/(1-t)^2) at t = 1/2
    EXPECT_NEAR(detail::sigma_deriv(0.5), 2.0, 1e-14);
}

TEST(Sigma, PlateausAreExact) {
    EXPECT_EQ(detail::sigma(0.0), 0.0);
    EXPECT_EQ(detail::sigma(-3.0), 0.0);
    EXPECT_EQ(detail::sigma(1.0), 1.0);
    EXPECT_EQ(detail::sigma(7.0), 1.0);
    EXPECT_EQ(detail::sigma_deriv(1.0), 0.0);
}

TEST(Sigma, Symmetric) {
    for (double t = 0.01; t < 1.0; t += 0.037)
        EXPECT_NEAR(detail::sigma(t) + detail::sigma(1.0 - t), 1.0, 1e-15);
}

TEST(Transition, FallingInverseRoundTrips) {
    auto b = make_transition({0.1, 0.9, Orientation::Falling});
    EXPECT_EQ(b(0.05), 1.0);
    EXPECT_EQ(b(0.95), 0.0);
    EXPECT_NEAR(b.deriv(0.5), -2.5, 1e-13);
    for (double r : {0.001, 0.2, 0.5, 0.77, 0.999}) {
        auto y = b.monotone_inverse(r);
        ASSERT_TRUE(y);
        EXPECT_NEAR(b(*y), r, 1e-10);
    }
    EXPECT_FALSE(b.monotone_inverse(1.0));
    EXPECT_FALSE(b.monotone_inverse(0.0));
}

TEST(Transition, DerivativeMatchesFiniteDifference) {
    auto up = make_transition({-0.3, 0.4, Orientation::Rising});
    for (double x = -0.25; x < 0.4; x += 0.05) {
        const double h = 1e-6;
        EXPECT_NEAR(up.deriv(x), (up(x + h) - up(x - h)) / (2 * h), 1e-6);
    }
}

TEST(Transition, RejectsEmptyBand) {
    EXPECT_THROW(make_transition({0.5, 0.5, Orientation::Rising}), ConfigError);
}

TEST(Window, PlateauAndSupport) {
    auto a = make_window(-0.25, -0.1, 1.1, 1.25);
    EXPECT_EQ(a(0.0), 1.0);
    EXPECT_EQ(a(1.0), 1.0);
    EXPECT_EQ(a(-0.25), 0.0);
    EXPECT_EQ(a(1.3), 0.0);
    EXPECT_GT(a(-0.2), 0.0);
    EXPECT_LT(a(-0.2), 1.0);
}

TEST(HeightFunction, SignPattern) {
    auto w = make_w();
    EXPECT_DOUBLE_EQ(w(0.5), 0.25);
    EXPECT_EQ(w(0.0), 0.0);
    EXPECT_EQ(w(1.0), 0.0);
    EXPECT_LT(w(-0.1), 0.0);
    EXPECT_LT(w(1.1), 0.0);
    EXPECT_DOUBLE_EQ(w.deriv(0.0), 1.0);
    EXPECT_DOUBLE_EQ(w.deriv(1.0), -1.0);
}

TEST(Bump, RadialPlateaus) {
    Vec c(2);
    c << 0.5, 0.5;
    BumpND b(c, 0.05, 0.1);
    Vec p = c;
    p[0] += 0.049;
    EXPECT_EQ(b(p), 1.0);
    p[0] = c[0] + 0.1;
    EXPECT_EQ(b(p), 0.0);
    EXPECT_NEAR(b.of_radius(0.075), 0.5, 1e-15);
}

TEST(Bump, ProductOverCoordinates) {
    ProductBump d(0.5, 1.0);
    Vec u(2);
    u << 0.3, -0.4;
    EXPECT_EQ(d(u), 1.0);
    u << 0.75, 0.0;
    EXPECT_NEAR(d(u), 0.5, 1e-15);
    u << 0.75, -0.75;
    EXPECT_NEAR(d(u), 0.25, 1e-15);
    u << 0.2, 1.0;
    EXPECT_EQ(d(u), 0.0);
}

TEST(Solvers, BisectAndGolden) {
    EXPECT_NEAR(bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0), std::sqrt(2.0), 1e-11);
    EXPECT_NEAR(golden_max([](double x) { return -(x - 0.3) * (x - 0.3); }, 0.0, 1.0), 0.3, 1e-6);
}
