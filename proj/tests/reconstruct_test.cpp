#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mmerge/reconstruct.hpp"

using namespace mmerge;

namespace {

const GField& field2() {
    static const GField G{Model(default_params())};
    return G;
}

Vec fpoint(double s, double t) {
    Vec f(2);
    f << s, t;
    return f;
}

}  // namespace

// K(rho, eps) = (rho^4 - eps^4)/4 with rho = 0.08, eps1 = 0.05, eps2 = 0.03 and
// the H2 radius 0.08 * 0.03 / 0.05 = 0.048.
TEST(HSets, BoundsFromRadii) {
    const auto& G = field2();
    EXPECT_NEAR(G.H1().K(), 8.6775e-6, 1e-18);
    EXPECT_NEAR(G.H2().K(), 1.124604e-6, 1e-18);
    EXPECT_NEAR(G.K_fade(), 2.34375e-5, 1e-18);
    EXPECT_NEAR(G.kappa_T(), 2.0 * std::sqrt(1.25), 1e-10);
}

TEST(Frame, EigenDirectionMapsToScaledAxis) {
    const auto& G = field2();
    const auto& z = G.model().z();
    ChartPoint p = z.location;
    p.head(2) += 0.01 * z.v_plus;
    const Vec f = G.to_frame(p);
    EXPECT_NEAR(f[0], 0.03, 1e-14);
    EXPECT_NEAR(f[1], 0.0, 1e-14);
    EXPECT_NEAR(G.to_frame(z.location).norm(), 0.0, 1e-15);
}

TEST(Invariant, PlanarCaseIsProductOfRadii) {
    const auto& G = field2();
    const Vec f = fpoint(0.03, -0.02);
    EXPECT_NEAR(G.T_of(f), 0.03 * 0.03 * 0.02 * 0.02, 1e-16);
}

TEST(Invariant, ConstantAlongLinearFlow) {
    GField G(Model(default_params(5, 2)));
    Vec f(5);
    f << 0.02, 0.03, -0.01, 0.015, 0.005;
    const double T0 = G.T_of(f);
    for (double t : {-0.7, 0.3, 1.1})
        EXPECT_NEAR(G.T_of(G.frame().propagate_frame(f, t)) / T0, 1.0, 1e-12);
}

TEST(Membership, FacesOfH1) {
    const auto& G = field2();
    EXPECT_EQ(G.membership(G.from_frame(fpoint(0.0, 0.05)), G.H1()), HMembership::XIn);
    EXPECT_EQ(G.membership(G.from_frame(fpoint(0.05, 0.0)), G.H1()), HMembership::XOut);
    EXPECT_EQ(G.membership(G.from_frame(fpoint(0.01, 0.01)), G.H1()), HMembership::Inside);
    EXPECT_EQ(G.membership(G.from_frame(fpoint(0.0, 0.06)), G.H1()), HMembership::Outside);
    std::mt19937_64 rng(3);
    auto f = G.sample_face(G.H1(), "x_tan", rng);
    ASSERT_TRUE(f);
    EXPECT_EQ(G.membership(G.from_frame(*f), G.H1()), HMembership::XTan);
}

TEST(Membership, FlowIsTangentToXTan) {
    GField G(Model(default_params(4, 2)));
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        auto f = G.sample_face(G.H1(), "x_tan", rng);
        ASSERT_TRUE(f);
        const Vec v = G.frame().rates().cwiseProduct(*f);
        const Vec grad = G.grad_T_frame(*f);
        EXPECT_LE(std::abs(grad.dot(v)), 1e-8 * grad.norm() * v.norm());
    }
}

TEST(G0, LevelsOnFaces) {
    const auto& G = field2();
    const auto& z = G.model().z();
    EXPECT_EQ(G.g0(z.location), 0.0);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10; ++i) {
        auto fi = G.sample_face(G.H1(), "x_in", rng);
        auto fo = G.sample_face(G.H1(), "x_out", rng);
        ASSERT_TRUE(fi && fo);
        EXPECT_NEAR(G.g0(G.from_frame(*fi)), -0.0025, 1e-12);
        EXPECT_NEAR(G.g0(G.from_frame(*fo)), 0.0025, 1e-12);
    }
}

TEST(Pchip, MonotoneAndInterpolating) {
    Pchip p({0.0, 1.0, 1.5, 4.0, 4.1}, {-1.0, -0.2, -0.1, 0.5, 1.0});
    EXPECT_DOUBLE_EQ(p(1.5), -0.1);
    EXPECT_DOUBLE_EQ(p(4.1), 1.0);
    double prev = p(0.0);
    for (double t = 0.001; t <= 4.1; t += 0.001) {
        const double v = p(t);
        EXPECT_GT(v, prev);
        prev = v;
    }
    Pchip lin({0.0, 2.0, 3.0}, {1.0, 5.0, 7.0});
    EXPECT_NEAR(lin(0.7), 2.4, 1e-14);
    EXPECT_NEAR(lin(-1.0), -1.0, 1e-14);
}

TEST(Schedule, PassThroughHasTwoAnchors) {
    const auto& G = field2();
    const auto p = make_point(1.6, 1.2);
    const auto ks = G.schedule(p);
    ASSERT_EQ(ks.knots.size(), 2u);
    EXPECT_EQ(ks.knots.front().label, "entry");
    EXPECT_EQ(ks.knots.back().label, "exit");
    EXPECT_EQ(ks.psi, 0.0);
    const double v = G.g(p);
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
    EXPECT_EQ(v, G.g1(p));
}

TEST(Schedule, EntryFaceGetsA) {
    const auto& G = field2();
    // x' = w(1.5) < 0 on the x-high face: the flow enters W there
    EXPECT_NEAR(G.g1(make_point(1.0, 1.5)), -1.0, 1e-8);
}

TEST(Schedule, StableCore) {
    const auto& G = field2();
    const auto ks = G.trace_knots(G.from_frame(fpoint(0.0, 0.13)));
    EXPECT_TRUE(ks.stable_core);
    ASSERT_EQ(ks.knots.size(), 3u);
    EXPECT_EQ(ks.knots[0].label, "entry");
    EXPECT_EQ(ks.knots[1].label, "x_in1");
    EXPECT_EQ(ks.knots[2].label, "x_in2");
    EXPECT_TRUE(ks.increasing());
}

TEST(Schedule, ThroughH2HasAllLevels) {
    const auto& G = field2();
    const auto ks = G.schedule(G.from_frame(fpoint(0.002, 0.12)));
    ASSERT_EQ(ks.knots.size(), 6u);
    EXPECT_TRUE(ks.increasing());
    EXPECT_EQ(ks.psi, 1.0);
    for (const auto& k : ks.knots)
        if (k.label == "x_out1") {
            EXPECT_NEAR(k.value, 0.0025, 1e-15);
        }
}

TEST(Blend, BranchesAreExact) {
    const auto& G = field2();
    const auto p2 = G.from_frame(fpoint(0.01, 0.012));
    ASSERT_EQ(G.zone(p2), Zone::H2);
    EXPECT_EQ(G.g(p2), G.g0(G.round_to_lattice(p2)));
    const auto po = make_point(0.9, 0.2);
    EXPECT_EQ(G.zone(po), Zone::Outside);
    EXPECT_EQ(G.g(po), G.g1(po));
}

TEST(Blend, FaceMatching) {
    const auto& G = field2();
    std::mt19937_64 rng(21);
    for (int i = 0; i < 20; ++i) {
        for (const char* face : {"x_in", "x_out"}) {
            auto f = G.sample_face(G.H1(), face, rng);
            ASSERT_TRUE(f);
            const auto p = G.round_to_lattice(G.from_frame(*f));
            EXPECT_LE(std::abs(G.g1(p) - G.g0(p)), 1e-6) << face;
        }
    }
}

TEST(Blend, PhiIsFlowInvariant) {
    const auto& G = field2();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(-0.06, 0.06);
    int checked = 0;
    while (checked < 50) {
        const auto p = G.from_frame(fpoint(U(rng), U(rng)));
        if (G.zone(p) != Zone::H1Ring) continue;
        const auto q = G.frame().propagate(p, 1e-4);
        EXPECT_LE(std::abs(G.phi(q) - G.phi(p)) / 1e-4, 1e-6);
        ++checked;
    }
}

TEST(Derivative, ClosedFormInsideH2) {
    const auto& G = field2();
    const auto p = G.from_frame(fpoint(0.012, -0.01));
    ASSERT_EQ(G.zone(p), Zone::H2);
    const auto q = G.round_to_lattice(p);
    EXPECT_NEAR(G.dg_along(p), G.dg0_closed(q), 1e-8);
    EXPECT_NEAR(G.dg_along(G.model().z().location), 0.0, 1e-10);
}

TEST(Derivative, PositiveOutsideH1) {
    const auto& G = field2();
    for (auto p : {make_point(0.3, 0.3), make_point(1.2, 0.9), make_point(0.05, -0.3),
                   G.from_frame(fpoint(0.07, 0.07))})
        EXPECT_GT(G.dg_along(p), 0.0);
}

TEST(Config, Rejections) {
    ReconstructParams r;
    r.eps1 = 0.03;
    r.eps2 = 0.03;
    EXPECT_THROW(GField(Model(default_params()), r), ConfigError);
    ReconstructParams big;
    big.rho = 0.3;
    EXPECT_THROW(GField(Model(default_params()), big), ConfigError);
    auto P = default_params();
    P.c = 0.2;
    EXPECT_THROW(GField(Model(P)), ConfigError);
}
