#include <cmath>

#include <gtest/gtest.h>

#include "msdi/config.hpp"

using namespace msdi;
using nlohmann::json;

namespace {
json sample() {
    return json::parse(R"({
      "n_streams": 3,
      "rho": 0.1,
      "beta_matrix": [[0.1, 0.05, 0.05], [0.05, 0.1, 0.05], [0.05, 0.05, 0.1]],
      "k_check": 1.7,
      "grids": [ {"points": [[0.5], [1.0]], "weights": [1, 3]},
                 {"linspace": [{"lo": 0.3, "hi": 0.6, "count": 4}]},
                 {"points": [0.012, 0.013]} ],
      "models": [ {"kind": "iid_gaussian", "mean0": 0.0, "sigma": 1.0},
                  {"kind": "ar_p", "theta_star": [0.1]},
                  {"kind": "epidemic_gaussian", "p_star": 0.01, "scale": 3.0, "x0": 1.0} ],
      "window": 64
    })");
}
} // namespace

TEST(Config, RoundTripIsBitExact) {
    RunConfig c = config_from_json(sample());
    c.rho = std::nextafter(0.1, 1.0);
    const json once = config_to_json(c);
    const RunConfig back = config_from_json(json::parse(once.dump()));
    EXPECT_EQ(config_to_json(back), once);
    EXPECT_EQ(*back.rho, *c.rho);
    EXPECT_EQ(back.beta->coeff(0, 1), c.beta->coeff(0, 1));
    EXPECT_EQ(back.window, c.window);
}

TEST(Config, ModelRoundTrip) {
    Matrix q = Matrix::Identity(4, 4) * 0.01;
    std::vector<ModelSpec> ms{ModelSpec::iid_gaussian(0.3, 2.0), ModelSpec::ar(Point::Constant(2, 0.1)),
                              ModelSpec::random_coeff_linear(Matrix::Identity(2, 2) * 0.3, Matrix::Identity(2, 2), q),
                              ModelSpec::epidemic_binomial(0.02, 5000), ModelSpec::epidemic_gaussian(0.01, 7.5, 0.9)};
    for (const auto& m : ms) {
        const json j = model_to_json(m);
        EXPECT_EQ(model_to_json(model_from_json(json::parse(j.dump()))), j);
    }
}

TEST(Config, ResolveBuildsDetector) {
    const auto r = resolve(config_from_json(sample()));
    EXPECT_EQ(r.models.size(), 3u);
    EXPECT_EQ(r.grids[1].size(), 4u);
    EXPECT_DOUBLE_EQ(r.grids[0].weights()[1], 0.75);
    EXPECT_EQ(r.thresholds.provenance(), ThresholdProvenance::from_beta);
    EXPECT_EQ(*r.options.window, 64u);
    auto d = make_detector(r);
    d.update({Point::Constant(1, 0.2), Point::Constant(1, 0.1), Point::Constant(1, 0.99)});
    EXPECT_EQ(d.time(), 1u);

    json j = sample();
    j.erase("rho");
    j["auto_rho"] = true;
    const auto ra = resolve(config_from_json(j));
    EXPECT_EQ(ra.thresholds.provenance(), ThresholdProvenance::optimal);
    EXPECT_DOUBLE_EQ(ra.rho, ra.hp->rho_opt);
}

TEST(Config, Errors) {
    json two = sample();
    two["alpha_matrix"] = two["beta_matrix"];
    EXPECT_THROW(config_from_json(two), input_error);

    json none = sample();
    none.erase("beta_matrix");
    EXPECT_THROW(config_from_json(none), input_error);

    json short_grids = sample();
    short_grids["grids"].erase(2);
    EXPECT_THROW(config_from_json(short_grids), input_error);

    json bad_kind = sample();
    bad_kind["models"][0]["kind"] = "martian";
    EXPECT_THROW(resolve(config_from_json(bad_kind)), input_error);

    json missing = sample();
    missing.erase("n_streams");
    EXPECT_THROW(config_from_json(missing), input_error);

    json norho = sample();
    norho.erase("rho");
    EXPECT_THROW(resolve(config_from_json(norho)), input_error);

    json wrong_size = sample();
    wrong_size["beta_matrix"] = json::parse("[[0.1, 0.1], [0.1, 0.1]]");
    EXPECT_THROW(resolve(config_from_json(wrong_size)), input_error);

    json alpha_auto = sample();
    alpha_auto["alpha_matrix"] = alpha_auto["beta_matrix"];
    alpha_auto.erase("beta_matrix");
    alpha_auto["auto_rho"] = true;
    EXPECT_THROW(resolve(config_from_json(alpha_auto)), input_error);

    EXPECT_THROW(load_config("/nonexistent/config.json"), input_error);
}
