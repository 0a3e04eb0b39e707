#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "msdi/detector.hpp"
#include "msdi/random.hpp"

using namespace msdi;

namespace {

Point P(double v) { return Point::Constant(1, v); }

ThresholdMatrix thresholds(std::size_t n, double a) {
    return ThresholdMatrix(Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), a),
                           ThresholdProvenance::manual);
}

// Two i.i.d. streams whose grids contain only the pre-change parameter.
Detector neutral(double rho, DetectorOptions o = {}) {
    std::vector<ModelSpec> m{ModelSpec::iid_gaussian(0.0, 1.0), ModelSpec::iid_gaussian(0.0, 1.0)};
    std::vector<ParameterGrid> g{ParameterGrid({P(0.0)}), ParameterGrid({P(0.0)})};
    return Detector(m, g, rho, o);
}

struct Instance {
    std::vector<ModelSpec> models;
    std::vector<ParameterGrid> grids;
    std::vector<std::vector<Point>> obs;
};

Instance make_instance(unsigned seed, std::size_t n) {
    Instance in;
    in.models = {ModelSpec::iid_gaussian(0.0, 1.0), ModelSpec::ar(P(0.2)), ModelSpec::epidemic_gaussian(0.05, 20.0)};
    in.grids = {ParameterGrid({P(0.5), P(1.0), P(-0.7)}, {1.0, 2.0, 1.0}), ParameterGrid({P(0.5), P(-0.3)}),
                ParameterGrid({P(0.06), P(0.08)})};
    RandomSource rng(seed);
    std::vector<StreamState> x;
    for (const auto& m : in.models) x.push_back(m.initial_state());
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<Point> row;
        for (std::size_t i = 0; i < in.models.size(); ++i) {
            auto r = t >= n / 2 && i == 1 ? Regime::post(P(0.5)) : Regime::pre();
            auto [y, nx] = simulate_step(in.models[i], r, x[i], rng);
            row.push_back(y);
            x[i] = nx;
        }
        in.obs.push_back(row);
    }
    return in;
}

} // namespace

TEST(Detector, ZeroLlrStatistics) {
    auto d = neutral(0.5);
    d.update({P(0.3), P(-1.2)});
    d.update({P(2.0), P(0.1)});
    EXPECT_NEAR(std::exp(d.log_L()(0)), 0.75, 1e-15);
    EXPECT_NEAR(std::exp(d.log_Lhat()(1)), 0.75, 1e-15);
    const Matrix u = d.log_U();
    EXPECT_NEAR(std::exp(u(0, 0)), 3.0, 1e-14);
    EXPECT_NEAR(std::exp(u(0, 1)), 1.0, 1e-15);
    EXPECT_NEAR(std::exp(u(1, 0)), 1.0, 1e-15);
}

TEST(Detector, BruteForceEquivalence) {
    for (unsigned seed = 1; seed <= 8; ++seed) {
        auto in = make_instance(seed, 60);
        Detector d(in.models, in.grids, 0.07);
        for (std::size_t t = 0; t < in.obs.size(); ++t) {
            d.update(in.obs[t]);
            if ((t + 1) % 15) continue;
            std::vector<std::vector<Point>> prefix(in.obs.begin(), in.obs.begin() + static_cast<long>(t + 1));
            auto bf = brute_force_statistics(prefix, in.models, in.grids, 0.07);
            const Matrix u = d.log_U();
            for (Eigen::Index i = 0; i < 3; ++i) {
                EXPECT_NEAR(d.log_L()(i), bf.log_L(i), 1e-9 * std::max(1.0, std::abs(bf.log_L(i))));
                EXPECT_NEAR(d.log_Lhat()(i), bf.log_Lhat(i), 1e-9 * std::max(1.0, std::abs(bf.log_Lhat(i))));
                for (Eigen::Index j = 0; j < 3; ++j)
                    EXPECT_NEAR(u(i, j), bf.log_U(i, j), 1e-9 * std::max(1.0, std::abs(bf.log_U(i, j))));
            }
        }
    }
}

TEST(Detector, WindowModeMatchesBruteForce) {
    auto in = make_instance(42, 50);
    for (std::size_t w : {1u, 5u, 20u}) {
        Detector d(in.models, in.grids, 0.1, DetectorOptions{w});
        for (const auto& row : in.obs) d.update(row);
        auto bf = brute_force_statistics(in.obs, in.models, in.grids, 0.1, w);
        for (Eigen::Index i = 0; i < 3; ++i) {
            EXPECT_NEAR(d.log_L()(i), bf.log_L(i), 1e-9 * std::max(1.0, std::abs(bf.log_L(i))));
            EXPECT_NEAR(d.log_Lhat()(i), bf.log_Lhat(i), 1e-9 * std::max(1.0, std::abs(bf.log_Lhat(i))));
        }
    }
}

TEST(Detector, WideWindowEqualsFullMode) {
    auto in = make_instance(7, 30);
    Detector full(in.models, in.grids, 0.2);
    Detector wide(in.models, in.grids, 0.2, DetectorOptions{100});
    for (const auto& row : in.obs) {
        full.update(row);
        wide.update(row);
        for (Eigen::Index i = 0; i < 3; ++i) {
            EXPECT_NEAR(full.log_L()(i), wide.log_L()(i), 1e-10 * std::max(1.0, std::abs(full.log_L()(i))));
            EXPECT_DOUBLE_EQ(full.log_Lhat()(i), wide.log_Lhat()(i));
        }
    }
}

TEST(Detector, LhatDominatesL) {
    auto in = make_instance(3, 80);
    Detector d(in.models, in.grids, 0.05);
    for (const auto& row : in.obs) {
        d.update(row);
        for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LE(d.log_L()(i), d.log_Lhat()(i) + 1e-12);
    }
}

TEST(Detector, DecisionSemantics) {
    auto d = neutral(0.5);
    EXPECT_FALSE(d.decision_step(thresholds(2, 1.0)).has_value());
    d.update({P(0.0), P(0.0)});
    // U_ii = 1, U_ij = 1 at n = 1 with rho = 0.5: every row clears A = 1, ties go to stream 1.
    auto out = d.decision_step(thresholds(2, 1.0));
    ASSERT_TRUE(out.has_value());
    EXPECT_EQ(out->stream, 1u);
    EXPECT_EQ(out->time, 1u);
    EXPECT_FALSE(d.decision_step(thresholds(2, 1.0 + 1e-9)).has_value());
    EXPECT_THROW((void)d.decision_step(thresholds(3, 1.0)), input_error);
}

TEST(Detector, RunToDecisionExamples) {
    // U_ii = 3 at n = 2, U_ij stays 1: an A with A_ii = 2 and A_ij = 1 stops at n = 2.
    auto d = neutral(0.5);
    Matrix a = Matrix::Constant(2, 2, 1.0);
    a(0, 0) = a(1, 1) = 2.0;
    auto src = [](std::size_t) { return std::optional<std::vector<Point>>({P(0.0), P(0.0)}); };
    auto r = run_to_decision(d, ThresholdMatrix(a, ThresholdProvenance::manual), src, 100);
    EXPECT_TRUE(r.outcome.stopped);
    EXPECT_EQ(r.outcome.time, 2u);
    EXPECT_EQ(r.outcome.stream, 1u);
    EXPECT_EQ(r.consumed, 2u);

    auto d2 = neutral(0.5);
    auto r2 = run_to_decision(d2, thresholds(2, 10.0), src, 3);
    EXPECT_FALSE(r2.outcome.stopped);
    EXPECT_EQ(r2.outcome.time, 3u);
    EXPECT_FALSE(r2.exhausted);

    auto d3 = neutral(0.5);
    auto dry = [](std::size_t n) -> std::optional<std::vector<Point>> {
        if (n > 2) return std::nullopt;
        return std::vector<Point>{P(0.0), P(0.0)};
    };
    auto r3 = run_to_decision(d3, thresholds(2, 10.0), dry, 100);
    EXPECT_TRUE(r3.exhausted);
    EXPECT_EQ(r3.consumed, 2u);
    EXPECT_THROW(run_to_decision(d3, thresholds(2, 1.0), src, 0), input_error);
}

TEST(Detector, StoppingTimeMonotoneInThreshold) {
    std::vector<ModelSpec> m{ModelSpec::iid_gaussian(0.0, 1.0), ModelSpec::iid_gaussian(0.0, 1.0)};
    std::vector<ParameterGrid> g{ParameterGrid({P(1.0)}), ParameterGrid({P(1.0)})};
    for (unsigned seed = 1; seed <= 10; ++seed) {
        std::size_t prev = 0;
        for (double a : {10.0, 100.0, 1e3, 1e4, 1e6}) {
            RandomSource rng(seed);
            Detector d(m, g, 0.1);
            auto src = [&](std::size_t n) {
                const double shift = n > 5 ? 1.0 : 0.0;
                return std::optional<std::vector<Point>>({P(shift + rng.normal()), P(rng.normal())});
            };
            auto r = run_to_decision(d, thresholds(2, a), src, 10000);
            ASSERT_TRUE(r.outcome.stopped);
            EXPECT_GE(r.outcome.time, prev);
            prev = r.outcome.time;
        }
    }
}

TEST(Detector, UpdateIsAtomic) {
    std::vector<ModelSpec> m{ModelSpec::iid_gaussian(0.0, 1.0), ModelSpec::epidemic_binomial(0.1, 10)};
    std::vector<ParameterGrid> g{ParameterGrid({P(1.0)}), ParameterGrid({P(0.2)})};
    Detector d(m, g, 0.1);
    d.update({P(0.5), P(9.0)});
    const Vector before = d.log_L();
    EXPECT_THROW(d.update({P(0.5), P(20.0)}), stream_error);
    try {
        d.update({P(0.5), P(20.0)});
    } catch (const stream_error& e) {
        EXPECT_EQ(e.stream(), 1u);
        EXPECT_NE(std::string(e.what()).find("stream 2"), std::string::npos);
    }
    EXPECT_THROW(d.update({P(std::nan("")), P(5.0)}), input_error);
    EXPECT_THROW(d.update({P(0.5)}), input_error);
    EXPECT_EQ(d.time(), 1u);
    EXPECT_EQ(d.log_L(), before);
    EXPECT_DOUBLE_EQ(d.state(1)(0), 9.0);
}

TEST(Detector, ConstructionErrors) {
    std::vector<ModelSpec> m{ModelSpec::ar(P(0.2))};
    EXPECT_THROW(Detector(m, {ParameterGrid({P(1.5)})}, 0.1), input_error);
    EXPECT_THROW(Detector(m, {ParameterGrid({P(0.5), P(0.4)})}, 1.5), input_error);
    EXPECT_THROW(Detector(m, {}, 0.1), input_error);
    EXPECT_THROW(Detector(m, {ParameterGrid({Point::Constant(2, 0.1)})}, 0.1), input_error);
}

TEST(Detector, ClampsDegenerateEpidemicStates) {
    std::vector<ModelSpec> m{ModelSpec::epidemic_gaussian(0.01)};
    std::vector<ParameterGrid> g{ParameterGrid({P(0.012)})};
    Detector d(m, g, 0.1);
    d.update({P(0.0)});
    d.update({P(0.0)});
    EXPECT_EQ(d.clamped(0), 1u);
    EXPECT_TRUE(std::isfinite(d.log_L()(0)));

    Detector strict(m, g, 0.1, DetectorOptions{std::nullopt, false});
    strict.update({P(0.0)});
    EXPECT_THROW(strict.update({P(0.0)}), stream_error);
}

TEST(Export, TraceAndJson) {
    auto d = neutral(0.5);
    std::ostringstream os;
    write_trace_header(os, 2);
    d.update({P(0.0), P(0.0)});
    write_trace_rows(os, d);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "n,stream,log_L,log_Lhat,log_U_1,log_U_2");
    std::getline(is, line);
    EXPECT_EQ(line.rfind("1,1,", 0), 0u);
    std::getline(is, line);
    EXPECT_EQ(line.rfind("1,2,", 0), 0u);

    Matrix u(1, 2);
    u << -std::numeric_limits<double>::infinity(), 1.5;
    auto j = to_json(DecisionOutcome{false, 4, 0, u});
    EXPECT_EQ(j["T"], 4);
    EXPECT_TRUE(j["d"].is_null());
    EXPECT_EQ(j["snapshot"][0][0], "-inf");
    EXPECT_EQ(j["snapshot"][0][1], 1.5);
}
