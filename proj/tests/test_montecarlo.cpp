#include <cmath>

#include <gtest/gtest.h>

#include "msdi/montecarlo.hpp"

using namespace msdi;

namespace {
Point P(double v) { return Point::Constant(1, v); }

TrialRecord rec(std::size_t T, std::size_t d, bool censored = false, std::size_t nu = never) {
    return {T, d, nu, censored};
}

Scenario two_iid(double a) {
    return {{ModelSpec::iid_gaussian(0.0, 1.0), ModelSpec::iid_gaussian(0.0, 1.0)},
            {ParameterGrid({P(1.0)}), ParameterGrid({P(1.0)})},
            0.1,
            ThresholdMatrix(Matrix::Constant(2, 2, a), ThresholdProvenance::manual)};
}
} // namespace

TEST(EstimateAdd, Examples) {
    // nu = 2: T = 6 (d=1) and T = 4 (d=1) give (4 + 2) / 2; T = 1 is excluded.
    std::vector<TrialRecord> r{rec(6, 1), rec(4, 1), rec(1, 2)};
    EXPECT_DOUBLE_EQ(estimate_add(r, 2, 0).value, 3.0);
    EXPECT_EQ(estimate_add(r, 2, 0).count, 2u);
    // A misidentified trial contributes zero to the numerator.
    std::vector<TrialRecord> r2{rec(6, 1), rec(4, 2)};
    EXPECT_DOUBLE_EQ(estimate_add(r2, 2, 0).value, 2.0);
    // Censored trials count as T = horizon.
    std::vector<TrialRecord> r3{rec(10, 0, true), rec(4, 1)};
    EXPECT_DOUBLE_EQ(estimate_add(r3, 2, 0).value, 5.0);
    EXPECT_THROW(estimate_add({rec(1, 1)}, 2, 0), numeric_error);
}

TEST(EstimatePfa, Examples) {
    Hyperparams hp;
    hp.m_star = 2;
    hp.k_star = 4;
    // l in {1, 2}: l=1 window [1,3), l=2 window [2,4)
    std::vector<TrialRecord> r{rec(1, 1), rec(2, 2), rec(3, 1), rec(4, 0, true)};
    auto e = estimate_pfa(r, hp, 0);
    // l=1: num {T=1} = 1, den 4 -> 0.25; l=2: num {T=3} = 1, den 3 -> 1/3
    EXPECT_DOUBLE_EQ(e.value, 1.0 / 3.0);
    EXPECT_EQ(e.argmax, 2u);
    EXPECT_TRUE(e.defined);

    auto none = estimate_pfa({}, hp, 0);
    EXPECT_FALSE(none.defined);
    EXPECT_EQ(none.value, 0.0);
    // Censored trials never count as alarms.
    auto cen = estimate_pfa({rec(4, 0, true), rec(4, 0, true)}, hp, 0);
    EXPECT_EQ(cen.value, 0.0);
}

TEST(EstimatePmi, Examples) {
    Hyperparams hp;
    hp.m_star = 1;
    hp.k_star = 3;
    std::vector<TrialRecord> r{rec(2, 2), rec(5, 1), rec(5, 2), rec(3, 2)};
    // nu = 0, l in {1,2,3}: l=1: T>1 all 4, d=2: 3 -> 0.75; l=2: T>2: 3, d=2: 2 -> 2/3; l=3: 2, 1 -> 0.5
    auto e = estimate_pmi(r, hp, 1, 0);
    EXPECT_DOUBLE_EQ(e.value, 0.75);
    EXPECT_EQ(e.argmax, 1u);
}

TEST(Bayes, PfaAndPmiEstimators) {
    const double rho = 0.5;
    std::vector<TrialRecord> r{rec(1, 1), rec(2, 2), rec(3, 0, true)};
    // (0.5 + 0 + 0.125) / 3
    EXPECT_DOUBLE_EQ(bayes_pfa(r, rho, 0).value, 0.625 / 3.0);
    std::vector<TrialRecord> q{rec(5, 2, false, 2), rec(1, 2, false, 3), rec(9, 0, true, 1), rec(4, 1, false, 0)};
    EXPECT_DOUBLE_EQ(bayes_pmi_single(q, 1).value, 0.5);
}

TEST(Trials, DeterministicAcrossThreadCounts) {
    auto sc = two_iid(100.0);
    TrialPlan p;
    p.trials = 64;
    p.nu = 5;
    p.theta = P(1.0);
    p.horizon = 500;
    p.seed = 99;
    const auto a = run_trials(p, sc);
    p.threads = 4;
    const auto b = run_trials(p, sc);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        EXPECT_EQ(a[t].T, b[t].T);
        EXPECT_EQ(a[t].d, b[t].d);
    }
}

TEST(Trials, CensoringAtHorizon) {
    auto sc = two_iid(1e12);
    TrialPlan p;
    p.trials = 5;
    p.change = ChangeTime::none;
    p.horizon = 7;
    for (const auto& r : run_trials(p, sc)) {
        EXPECT_TRUE(r.censored);
        EXPECT_EQ(r.T, 7u);
        EXPECT_EQ(r.d, 0u);
    }
    p.trials = 0;
    EXPECT_THROW(run_trials(p, sc), input_error);
}

TEST(Trials, IidDetectionIsMostlyCorrect) {
    auto sc = two_iid(1e3);
    TrialPlan p;
    p.trials = 400;
    p.nu = 10;
    p.stream = 1;
    p.theta = P(1.0);
    p.horizon = 2000;
    const auto recs = run_trials(p, sc);
    std::size_t right = 0;
    for (const auto& r : recs) right += r.d == 2 && r.T > 10;
    EXPECT_GT(right, 360u);
    EXPECT_LT(estimate_add(recs, 10, 1).value, 40.0);
}

TEST(RobustRisk, SkipsEmptyCells) {
    std::vector<RiskCell> cells{{0, 0, 0, 10.0, 5.0}, {0, 1, 0, std::nan(""), 1.0}, {1, 0, 0, 9.0, 3.0}};
    EXPECT_DOUBLE_EQ(robust_risk_estimate(cells), 3.0);
    EXPECT_THROW(robust_risk_estimate({{0, 0, 0, std::nan(""), 1.0}}), input_error);
}

TEST(Kl, Ar1MatchesClosedForm) {
    auto m = ModelSpec::ar(P(0.0));
    KlOptions o;
    o.samples = 100000;
    auto post = estimate_kl(m, P(0.5), KlRegime::post, o);
    auto pre = estimate_kl(m, P(0.5), KlRegime::pre, o);
    EXPECT_NEAR(post.value, 1.0 / 6.0, 3.5 * post.se);
    EXPECT_NEAR(pre.value, -0.125, 3.5 * pre.se);
    EXPECT_GT(post.se, 0.0);
}

TEST(Kl, TableSource) {
    std::vector<ModelSpec> m{ModelSpec::ar(P(0.0))};
    std::vector<ParameterGrid> g{ParameterGrid({P(0.5)})};
    KlOptions o;
    o.samples = 2000;
    EXPECT_EQ(kl_table(m, g, o).source, KlSource::closed_form);
    EXPECT_EQ(kl_table(m, g, o, true).source, KlSource::monte_carlo);
}

TEST(Epidemic, ModelsAndGrids) {
    TableConfig c;
    const auto m = epidemic_models(c);
    ASSERT_EQ(m.size(), 5u);
    EXPECT_DOUBLE_EQ(m[0].pre_change_parameter()(0), 1.0 / 101.0);
    EXPECT_DOUBLE_EQ(m[4].as<model::EpidemicGaussian>().scale, 3e4);
    const auto g = epidemic_grids(c);
    EXPECT_EQ(g[4].size(), 1u);
    EXPECT_DOUBLE_EQ(g[4][0](0), 1.2 / 105.0);
}
