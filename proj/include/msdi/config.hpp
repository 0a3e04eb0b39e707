#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "msdi/core.hpp"
#include "msdi/detector.hpp"
#include "msdi/models.hpp"
#include "msdi/thresholds.hpp"

/**
 * @file
 * JSON run configuration.
 *
 *   {
 *     "n_streams": 2,
 *     "rho": 0.1,                      // or "auto_rho": true (needs beta_matrix)
 *     "beta_matrix": [[...], ...],     // or "alpha_matrix", or "threshold_matrix"
 *     "k_check": 2.0,
 *     "r": 1.0,
 *     "grids": [ {"points": [[0.5], [1.0]], "weights": [1, 1]},
 *                {"linspace": [{"lo": 0.5, "hi": 1.5, "count": 5}]} ],
 *     "models": [ {"kind": "iid_gaussian", "mean0": 0.0, "sigma": 1.0},
 *                 {"kind": "ar_p", "theta_star": [0.0]},
 *                 {"kind": "random_coeff_linear", "theta_star": [[...]], "noise_cov": [[...]], "coef_cov": [[...]]},
 *                 {"kind": "epidemic_binomial", "p_star": 0.01, "x0": 10000},
 *                 {"kind": "epidemic_gaussian", "p_star": 0.01, "scale": 1.0, "x0": 1.0} ],
 *     "window": 64,                    // optional
 *     "initial_states": [[...], ...]   // optional
 *   }
 *
 * Doubles are written with round-trip precision, so load(save(c)) == c.
 */

namespace msdi {

using json = nlohmann::json;

struct GridSpec {
    std::vector<std::vector<double>> points;
    std::vector<double> weights; ///< empty: uniform
    std::vector<ParameterGrid::Axis> linspace;

    [[nodiscard]] ParameterGrid build() const {
        if (!linspace.empty()) return ParameterGrid::linspace(linspace);
        std::vector<Point> pts;
        for (const auto& p : points) pts.push_back(Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size())));
        if (weights.empty()) return ParameterGrid(std::move(pts));
        return ParameterGrid(std::move(pts), weights);
    }
};

struct RunConfig {
    std::size_t n_streams{0};
    std::optional<double> rho;
    bool auto_rho{false};
    std::optional<Matrix> beta;
    std::optional<Matrix> alpha;
    std::optional<Matrix> manual_thresholds;
    double k_check{2.0};
    double r{1.0};
    std::vector<GridSpec> grids;
    std::vector<json> models; ///< raw model blocks
    std::optional<std::size_t> window;
    std::vector<std::vector<double>> initial_states;
};

namespace detail {

inline Matrix matrix_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw input_error(std::string(what) + ": expected a nonempty array of rows");
    const auto rows = j.size();
    const auto cols = j.at(0).size();
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw input_error(std::string(what) + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

inline json matrix_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

inline Vector vector_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw input_error(std::string(what) + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
    return v;
}

} // namespace detail

inline ModelSpec model_from_json(const json& j) {
    try {
        const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
        switch (kind) {
        case ModelKind::iid_gaussian: return ModelSpec::iid_gaussian(j.value("mean0", 0.0), j.value("sigma", 1.0));
        case ModelKind::ar_p: return ModelSpec::ar(detail::vector_from_json(j.at("theta_star"), "theta_star"));
        case ModelKind::random_coeff_linear:
            return ModelSpec::random_coeff_linear(detail::matrix_from_json(j.at("theta_star"), "theta_star"),
                                                  detail::matrix_from_json(j.at("noise_cov"), "noise_cov"),
                                                  detail::matrix_from_json(j.at("coef_cov"), "coef_cov"));
        case ModelKind::epidemic_binomial:
            return ModelSpec::epidemic_binomial(j.at("p_star").get<double>(), j.at("x0").get<std::int64_t>());
        case ModelKind::epidemic_gaussian:
            return ModelSpec::epidemic_gaussian(j.at("p_star").get<double>(), j.value("scale", 1.0), j.value("x0", 1.0));
        }
    } catch (const json::exception& e) {
        throw input_error(std::string("model block: ") + e.what());
    }
    throw input_error("model block: unknown kind");
}

inline json model_to_json(const ModelSpec& m) {
    json j;
    j["kind"] = std::string(to_string(m.kind()));
    std::visit(
        [&](const auto& v) {
            using M = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<M, model::IidGaussian>) {
                j["mean0"] = v.mean0;
                j["sigma"] = v.sigma;
            } else if constexpr (std::is_same_v<M, model::ArP>) {
                j["theta_star"] = std::vector<double>(v.theta_star.data(), v.theta_star.data() + v.theta_star.size());
            } else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                j["theta_star"] = detail::matrix_json(v.theta_star);
                j["noise_cov"] = detail::matrix_json(v.noise_cov);
                j["coef_cov"] = detail::matrix_json(v.coef_cov);
            } else if constexpr (std::is_same_v<M, model::EpidemicBinomial>) {
                j["p_star"] = v.p_star;
                j["x0"] = v.x0;
            } else {
                j["p_star"] = v.p_star;
                j["scale"] = v.scale;
                j["x0"] = v.x0;
            }
        },
        m.variant());
    return j;
}

inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    try {
        c.n_streams = j.at("n_streams").get<std::size_t>();
        if (c.n_streams == 0) throw input_error("n_streams must be >= 1");
        if (j.contains("rho")) c.rho = j["rho"].get<double>();
        c.auto_rho = j.value("auto_rho", false);
        const int sources = j.contains("beta_matrix") + j.contains("alpha_matrix") + j.contains("threshold_matrix");
        if (sources != 1) throw input_error("exactly one of beta_matrix, alpha_matrix, threshold_matrix is required");
        if (j.contains("beta_matrix")) c.beta = detail::matrix_from_json(j["beta_matrix"], "beta_matrix");
        if (j.contains("alpha_matrix")) c.alpha = detail::matrix_from_json(j["alpha_matrix"], "alpha_matrix");
        if (j.contains("threshold_matrix"))
            c.manual_thresholds = detail::matrix_from_json(j["threshold_matrix"], "threshold_matrix");
        c.k_check = j.value("k_check", 2.0);
        c.r = j.value("r", 1.0);
        for (const auto& g : j.at("grids")) {
            GridSpec gs;
            if (g.contains("linspace")) {
                for (const auto& ax : g["linspace"]) {
                    gs.linspace.push_back({ax.at("lo").get<double>(), ax.at("hi").get<double>(),
                                           ax.at("count").get<std::size_t>()});
                }
            } else {
                for (const auto& p : g.at("points")) {
                    if (p.is_number()) gs.points.push_back({p.get<double>()});
                    else gs.points.push_back(p.get<std::vector<double>>());
                }
                if (g.contains("weights")) gs.weights = g["weights"].get<std::vector<double>>();
            }
            c.grids.push_back(std::move(gs));
        }
        for (const auto& m : j.at("models")) c.models.push_back(m);
        if (j.contains("window") && !j["window"].is_null()) c.window = j["window"].get<std::size_t>();
        if (j.contains("initial_states")) c.initial_states = j["initial_states"].get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw input_error(std::string("config: ") + e.what());
    }
    if (c.grids.size() != c.n_streams || c.models.size() != c.n_streams) {
        throw input_error("config: grids and models must have n_streams entries");
    }
    if (!c.initial_states.empty() && c.initial_states.size() != c.n_streams) {
        throw input_error("config: initial_states must have n_streams entries");
    }
    return c;
}

inline json config_to_json(const RunConfig& c) {
    json j;
    j["n_streams"] = c.n_streams;
    if (c.rho) j["rho"] = *c.rho;
    if (c.auto_rho) j["auto_rho"] = true;
    if (c.beta) j["beta_matrix"] = detail::matrix_json(*c.beta);
    if (c.alpha) j["alpha_matrix"] = detail::matrix_json(*c.alpha);
    if (c.manual_thresholds) j["threshold_matrix"] = detail::matrix_json(*c.manual_thresholds);
    j["k_check"] = c.k_check;
    j["r"] = c.r;
    json grids = json::array();
    for (const auto& g : c.grids) {
        json gj;
        if (!g.linspace.empty()) {
            json axes = json::array();
            for (const auto& ax : g.linspace) axes.push_back({{"lo", ax.lo}, {"hi", ax.hi}, {"count", ax.count}});
            gj["linspace"] = axes;
        } else {
            gj["points"] = g.points;
            if (!g.weights.empty()) gj["weights"] = g.weights;
        }
        grids.push_back(std::move(gj));
    }
    j["grids"] = grids;
    j["models"] = c.models;
    if (c.window) j["window"] = *c.window;
    if (!c.initial_states.empty()) j["initial_states"] = c.initial_states;
    return j;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw input_error("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

/// Everything needed to run a detector, derived from a RunConfig.
struct ResolvedConfig {
    std::vector<ModelSpec> models;
    std::vector<ParameterGrid> grids;
    double rho{};
    ThresholdMatrix thresholds;
    std::optional<ErrorMatrix> beta;
    std::optional<Hyperparams> hp;
    DetectorOptions options;
    std::vector<StreamState> initial_states;
};

inline ResolvedConfig resolve(const RunConfig& c) {
    ResolvedConfig r;
    for (const auto& m : c.models) r.models.push_back(model_from_json(m));
    for (const auto& g : c.grids) r.grids.push_back(g.build());
    for (const auto& s : c.initial_states) {
        r.initial_states.push_back(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
    }
    r.options.window = c.window;
    const auto check_size = [&](const Matrix& m, const char* what) {
        if (static_cast<std::size_t>(m.rows()) != c.n_streams || m.rows() != m.cols()) {
            throw input_error(std::string(what) + " must be n_streams x n_streams");
        }
    };
    if (c.beta) {
        check_size(*c.beta, "beta_matrix");
        r.beta = ErrorMatrix(*c.beta);
        r.hp = hyperparams_from_beta(*r.beta, c.k_check, c.r);
        if (c.auto_rho) {
            r.rho = r.hp->rho_opt;
            r.thresholds = thresholds_optimal(*r.beta, *r.hp);
        } else {
            if (!c.rho) throw input_error("rho or auto_rho is required");
            r.rho = *c.rho;
            r.thresholds = thresholds_from_beta(*r.beta, *r.hp, r.rho);
        }
    } else {
        if (c.auto_rho) throw input_error("auto_rho requires beta_matrix");
        if (!c.rho) throw input_error("rho is required");
        r.rho = *c.rho;
        if (c.alpha) {
            check_size(*c.alpha, "alpha_matrix");
            r.thresholds = thresholds_from_alpha(ErrorMatrix(*c.alpha));
        } else {
            check_size(*c.manual_thresholds, "threshold_matrix");
            r.thresholds = ThresholdMatrix(*c.manual_thresholds, ThresholdProvenance::manual);
        }
    }
    GeometricPrior check(r.rho);
    (void)check;
    return r;
}

inline Detector make_detector(const ResolvedConfig& r) {
    return Detector(r.models, r.grids, r.rho, r.options, r.initial_states);
}

} // namespace msdi
