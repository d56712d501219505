#include <gtest/gtest.h>

#include <charconv>
#include <random>

#include "mmerge/scenario.hpp"

using namespace mmerge;

TEST(Scenario, EmptyTextGivesDefaults) {
    const auto s = parse_scenario_string("");
    EXPECT_EQ(s.model.n, 2);
    EXPECT_EQ(s.model.k, 1);
    EXPECT_DOUBLE_EQ(s.model.c, 0.5);
    EXPECT_DOUBLE_EQ(s.reconstruct.eps1, 0.05);
    EXPECT_EQ(s.verify.sweep_seeds, 1000);
    EXPECT_EQ(s.out, "out");
}

TEST(Scenario, SectionsCommentsAndTypes) {
    const auto s = parse_scenario_string(R"(
# top level
out = "runs/a#1"   # a hash inside quotes stays

[model]
n = 4
k = 3
beta_kind = "monotone"
c = 6e-1

[reconstruct]
eps2 = 0.02

[verify]
seed = 42
fail_fast = true

[gfield]
nx = 5
)");
    EXPECT_EQ(s.out, "runs/a#1");
    EXPECT_EQ(s.model.n, 4);
    EXPECT_EQ(s.model.k, 3);
    EXPECT_DOUBLE_EQ(s.model.c, 0.6);
    EXPECT_EQ(s.model.window.dim(), 4);
    EXPECT_DOUBLE_EQ(s.reconstruct.eps2, 0.02);
    EXPECT_EQ(s.verify.seed, 42u);
    EXPECT_TRUE(s.verify.fail_fast);
    EXPECT_EQ(s.gfield.nx, 5);
    EXPECT_EQ(s.gfield.ny, 41);
}

TEST(Scenario, Rejections) {
    for (const char* bad : {
             "[model]\nbogus = 1\n",           // unknown key
             "[nowhere]\n",                    // unknown section
             "[model]\nn = 2\nn = 3\n",        // duplicate
             "[model]\nn = 2.5\n",             // not an integer
             "[model]\nc = \"big\"\n",         // string for a number
             "[model]\nbeta_kind = monotone\n",  // unquoted string
             "[verify]\nfail_fast = 1\n",      // not a bool
             "[model]\nn\n",                   // no '='
             "[model\n",                       // header
             "[model]\nk = 2\n",               // k > n - 1
             "[model]\nbeta_kind = \"wavy\"\n",
             "[reconstruct]\neps1 = 0.03\neps2 = 0.05\n",
             "[reconstruct]\neps1 = 0.09\n",   // eps1 >= rho
             "[reconstruct]\na = 0.999\n",  // a above m - eps1^2
             "[verify]\nseed = -1\n",
             "[gfield]\nny = 1\n",
         }) {
        EXPECT_THROW(parse_scenario_string(bad), ConfigError) << bad;
    }
}

TEST(Scenario, MissingFile) {
    EXPECT_THROW(load_scenario("/nonexistent/scenario.toml"), ConfigError);
}

// 17 significant digits round-trip every double.
TEST(Csv, FormatRoundTrips) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1e3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double v = U(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
        const std::string s = fmt(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        EXPECT_EQ(back, v) << s;
    }
    EXPECT_EQ(fmt(0.5), "0.5");
    EXPECT_EQ(fmt(0.1), "0.10000000000000001");
    EXPECT_EQ(fmt(-2.0), "-2");
}

TEST(Csv, ChartHeader) {
    EXPECT_EQ(chart_header(2), (std::vector<std::string>{"y", "x"}));
    EXPECT_EQ(chart_header(4), (std::vector<std::string>{"y", "x", "u1", "u2"}));
}
