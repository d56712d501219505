#include <gtest/gtest.h>

#include "mmerge/model_chart.hpp"

using namespace mmerge;

TEST(Params, DefaultsBuild) {
    auto P = default_params();
    EXPECT_NEAR(P.c, 0.5, 1e-12);
    EXPECT_EQ(P.window.dim(), 2);
    EXPECT_TRUE(P.inner.strictly_inside(P.window));
}

TEST(Params, HigherDimensionBoxes) {
    auto P = default_params(4, 2);
    EXPECT_EQ(P.window.dim(), 4);
    EXPECT_DOUBLE_EQ(P.window.lo[3], -1.0);
    EXPECT_DOUBLE_EQ(P.inner.hi[2], 1.0);
}

TEST(Params, Rejections) {
    ModelParams p;
    p.k = 2;  // n = 2 allows only k = 1
    EXPECT_THROW(build(p), ConfigError);
    ModelParams q;
    q.beta_hi = 1.7;  // sticks out of U
    EXPECT_THROW(build(q), ConfigError);
    ModelParams r;
    r.alpha_inner_hi = 0.9;
    r.alpha_outer_hi = 1.0;
    EXPECT_THROW(build(r), ConfigError);
}

TEST(Box, ShrinkKeepsBoundaryFace) {
    auto P = default_params();
    Box s = P.window.shrunk(0.01);
    EXPECT_EQ(s.lo[0], 0.0);
    EXPECT_DOUBLE_EQ(s.hi[0], 1.99);
    EXPECT_DOUBLE_EQ(s.lo[1], -0.49);
    Box e = P.window.extended(0.5);
    EXPECT_EQ(e.lo[0], 0.0);
    EXPECT_DOUBLE_EQ(e.hi[1], 2.5);
}

TEST(ExitFace, NamesAndPoint) {
    auto P = default_params();
    auto c = exit_face(P.window, make_point(1.0, 1.4), make_point(1.0, 1.6));
    EXPECT_EQ(c.face.name(), "x-high");
    EXPECT_DOUBLE_EQ(c.point[1], 1.5);
    EXPECT_NEAR(c.fraction, 0.5, 1e-12);
    auto b = exit_face(P.window, make_point(0.1, 0.3), make_point(-0.1, 0.3));
    EXPECT_TRUE(b.face.is_boundary());
    EXPECT_EQ(b.point[0], 0.0);
}

TEST(ExitFace, CornerTieGoesToLowerAxis) {
    auto P = default_params();
    auto c = exit_face(P.window, make_point(1.9, 1.4), make_point(2.1, 1.6));
    EXPECT_EQ(c.face.name(), "y-high");
}

TEST(ExitFace, RejectsBadSegments) {
    auto P = default_params();
    EXPECT_THROW(exit_face(P.window, make_point(1, 0), make_point(1, 0.2)), std::invalid_argument);
    EXPECT_THROW(exit_face(P.window, make_point(3, 0), make_point(1, 0.2)), std::invalid_argument);
}

TEST(Gamma, Endpoints) {
    EXPECT_EQ(segment_point(0.0, 3), make_point(0, 0, 3));
    EXPECT_EQ(segment_point(1.0)[1], 1.0);
    EXPECT_THROW(segment_point(1.5), std::invalid_argument);
}
