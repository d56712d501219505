#include <gtest/gtest.h>

#include <cmath>

#include "mmerge/verify.hpp"

using namespace mmerge;

namespace {

Box unit_box(double lo_x = -0.5, double hi_x = 1.5) {
    Box b{Vec::Zero(2), Vec::Zero(2)};
    b.lo << 0.0, lo_x;
    b.hi << 1.0, hi_x;
    return b;
}

const std::vector<std::string> kStages = {
    "census_before", "boundary census",    "interior census", "index",
    "tangency",      "dichotomy",          "no re-entry",     "single crossing",
    "c0 closeness",  "gradient-like",      "continuity",      "critical point of g",
    "preservation",  "connecting trajectory"};

}  // namespace

// Unperturbed field: zeros exactly at p = (0,0) and q = (0,1), nothing else.
TEST(Census, XiHasOnlyPAndQ) {
    for (auto [n, k] : {std::pair{2, 1}, {3, 2}}) {
        const auto P = default_params(n, k);
        const Model m(P);
        const auto c = census(m, FieldKind::Xi, P.window);
        ASSERT_EQ(c.zeros.size(), 2u) << "n=" << n;
        EXPECT_TRUE(c.suspects.empty());
        EXPECT_LT((c.zeros[0].location - make_point(0.0, 0.0, n)).norm(), 1e-9);
        EXPECT_LT((c.zeros[1].location - make_point(0.0, 1.0, n)).norm(), 1e-9);
    }
}

// y(2x-1) vanishes on y = 0, so the boundary slice of xi is the x-component alone.
TEST(Census, BoundarySliceOfXi) {
    const auto P = default_params();
    const auto c = census(Model(P), FieldKind::Xi, P.window, true);
    ASSERT_EQ(c.zeros.size(), 2u);
    for (const auto& z : c.zeros) EXPECT_EQ(z.location[0], 0.0);
}

TEST(Census, MergedFieldHasOneInteriorZero) {
    const auto P = default_params();
    const Model m(P);
    const auto c = census(m, FieldKind::XiPrime, P.window);
    ASSERT_EQ(c.zeros.size(), 1u);
    EXPECT_NEAR(c.zeros[0].location[0], 0.5, 1e-9);
    EXPECT_NEAR(c.zeros[0].location[1], 0.5, 1e-9);
    EXPECT_TRUE(census(m, FieldKind::XiPrime, P.window, true).zeros.empty());
}

TEST(Census, TwoSimpleZerosOfHandField) {
    const FieldFn F = [](const ChartPoint& p) {
        Vec v(2);
        v << p[0] - 0.4, (p[1] - 0.3) * (p[1] - 0.7);
        return v;
    };
    const auto c = census(F, unit_box());
    ASSERT_EQ(c.zeros.size(), 2u);
    EXPECT_NEAR(c.zeros[0].location[1], 0.3, 1e-10);
    EXPECT_NEAR(c.zeros[1].location[1], 0.7, 1e-10);
    EXPECT_NEAR(c.zeros[0].location[0], 0.4, 1e-10);
}

// negative control: |F| bottoms out at 0.02, under the candidate threshold, with no zero
TEST(Census, NonzeroMinimumIsNotAZero) {
    const FieldFn F = [](const ChartPoint& p) {
        Vec v(2);
        v << p[0] - 0.4, p[1] * p[1] + 0.02;
        return v;
    };
    const auto c = census(F, unit_box());
    EXPECT_TRUE(c.zeros.empty());
    EXPECT_TRUE(c.suspects.empty());
    EXPECT_FALSE(c.nonzero_minima.empty());
    EXPECT_NEAR(c.min_stalled_residual, 0.02, 1e-6);
}

// Richardson extrapolation of central differences is exact on cubics.
TEST(Hessian, CubicOracle) {
    const ScalarFn f = [](const ChartPoint& p) {
        return p[1] * p[1] * p[1] + 2.0 * p[0] * p[1] + p[0] * p[0];
    };
    const Mat H = hessian_fd(f, make_point(1.0, 1.0));
    EXPECT_NEAR(H(0, 0), 2.0, 1e-6);
    EXPECT_NEAR(H(0, 1), 2.0, 1e-6);
    EXPECT_NEAR(H(1, 0), 2.0, 1e-6);
    EXPECT_NEAR(H(1, 1), 6.0, 1e-6);
}

TEST(Classify, BoundaryModels) {
    CriticalRecord r;
    r.location = make_point(0.0, 0.0);
    const auto up = classify_critical(r, [](const ChartPoint& v) { return -v[1] * v[1] + v[0] * v[0]; });
    EXPECT_EQ(up.kind, CriticalKind::BoundaryUnstable);
    EXPECT_EQ(up.index, 1);
    EXPECT_EQ(up.epsilon, 1);
    const auto st = classify_critical(r, [](const ChartPoint& v) { return -v[1] * v[1] - v[0] * v[0]; });
    EXPECT_EQ(st.kind, CriticalKind::BoundaryStable);
    EXPECT_EQ(st.index, 2);
    EXPECT_EQ(st.epsilon, -1);
    EXPECT_FALSE(st.degenerate);
}

TEST(Classify, DegenerateDetected) {
    CriticalRecord r;
    r.location = make_point(0.5, 0.0);
    const auto d = classify_critical(r, [](const ChartPoint& v) {
        return (v[0] - 0.5) * (v[0] - 0.5) + v[1] * v[1] * v[1] * v[1];
    });
    EXPECT_EQ(d.kind, CriticalKind::Interior);
    EXPECT_TRUE(d.degenerate);
}

// p is boundary-stable and q boundary-unstable, both of index k.
TEST(Classify, ModelFunctionsOfPAndQ) {
    for (auto [n, k] : {std::pair{2, 1}, {3, 1}, {3, 2}, {4, 2}}) {
        CriticalRecord rp, rq;
        rp.location = make_point(0.0, 0.0, n);
        rq.location = make_point(0.0, 1.0, n);
        rp = classify_critical(rp, [k = k](const ChartPoint& v) { return model_function_p(v, k); });
        rq = classify_critical(rq, [k = k](const ChartPoint& v) { return model_function_q(v, k); });
        EXPECT_EQ(rp.kind, CriticalKind::BoundaryStable);
        EXPECT_EQ(rq.kind, CriticalKind::BoundaryUnstable);
        EXPECT_EQ(rp.index, k) << n << "," << k;
        EXPECT_EQ(rq.index, k) << n << "," << k;
    }
}

TEST(GradientLike, MergedFieldPasses) {
    const GField G{Model(default_params())};
    const auto v = check_gradient_like(G, FieldKind::XiPrime, 500, 7, 200);
    EXPECT_TRUE(v.positivity);
    EXPECT_TRUE(v.tangency);
    EXPECT_TRUE(v.normal_form);
    EXPECT_GT(v.min_derivative, 0.0);
    EXPECT_LE(v.max_field_mismatch, 1e-12);
}

// xi_c is not linear near z, so g cannot be in normal form along it.
TEST(GradientLike, UnblendedFieldFailsNormalForm) {
    const GField G{Model(default_params())};
    const auto v = check_gradient_like(G, FieldKind::XiC, 200, 7, 50);
    EXPECT_FALSE(v.normal_form);
    EXPECT_GT(v.max_field_mismatch, 1e-6);
    EXPECT_FALSE(v.pass());
}

TEST(Continuity, FirstOrderJumpsShrink) {
    const GField G{Model(default_params())};
    for (const char* face : {"x_in", "x_out", "x_tan"}) {
        const auto c = continuity_face(G, face, 100, 11);
        EXPECT_GT(c.samples, 0) << face;
        EXPECT_GT(c.ratio, 5.0) << face;
    }
}

TEST(MergeReport, DefaultsPassEveryStage) {
    const auto rep = merge_report(default_params());
    ASSERT_EQ(rep.stages.size(), kStages.size());
    for (std::size_t i = 0; i < kStages.size(); ++i) {
        EXPECT_EQ(rep.stages[i].name, kStages[i]);
        EXPECT_TRUE(rep.stages[i].pass) << kStages[i] << ": " << rep.stages[i].evidence.dump();
    }
    EXPECT_TRUE(rep.overall);
    EXPECT_EQ(rep.first_failure(), "");
    const Json j = to_json(rep);
    EXPECT_EQ(j["overall"], "pass");
    ASSERT_EQ(j["census_after"].size(), 1u);
    EXPECT_EQ(j["census_after"][0]["index"], 1);
}

TEST(MergeReport, SmallPerturbationFailsBoundaryCensus) {
    auto P = default_params();
    P.c = 0.2;
    build(P);
    const auto rep = merge_report(P);
    EXPECT_FALSE(rep.overall);
    EXPECT_EQ(rep.first_failure(), "boundary census");
    ASSERT_EQ(rep.stages.size(), kStages.size());
    EXPECT_EQ(to_json(rep)["overall"], "fail");
}

TEST(MergeReport, NonmonotoneBetaFails) {
    ModelParams P;
    P.beta_kind = "nonmonotone";
    build(P);
    MergeOptions o;
    o.fail_fast = true;
    const auto rep = merge_report(P, {}, o);
    EXPECT_FALSE(rep.overall);
    const auto* ic = rep.find("interior census");
    ASSERT_NE(ic, nullptr);
    EXPECT_FALSE(ic->pass);
}
