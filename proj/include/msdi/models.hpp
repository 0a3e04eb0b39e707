#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "msdi/core.hpp"
#include "msdi/linalg.hpp"
#include "msdi/random.hpp"

/**
 * @file
 * Per-stream Markov observation models.
 *
 * Every model exposes the one-step log density ratio
 *   g(theta, y, x) = log f_theta(y | x) - log f*(y | x)
 * between a post-change transition density with parameter theta and the
 * pre-change density, together with simulation, the state update driven by
 * an observation, and the conditional Kullback-Leibler numbers
 *   J(theta, x)  = E_theta[g | x] >= 0,   J*(theta, x) = E*[g | x] <= 0.
 *
 * The stream state is a plain vector: empty for i.i.d. data, the last
 * observation for first-order Markov models and the stacked lag vector
 * (X_n, ..., X_{n-p+1}) for AR(p).
 */

namespace msdi {

using StreamState = Vector;

enum class ModelKind { iid_gaussian, random_coeff_linear, ar_p, epidemic_binomial, epidemic_gaussian };

inline std::string_view to_string(ModelKind k) {
    switch (k) {
    case ModelKind::iid_gaussian: return "iid_gaussian";
    case ModelKind::random_coeff_linear: return "random_coeff_linear";
    case ModelKind::ar_p: return "ar_p";
    case ModelKind::epidemic_binomial: return "epidemic_binomial";
    case ModelKind::epidemic_gaussian: return "epidemic_gaussian";
    }
    return "unknown";
}

inline ModelKind model_kind_from_string(std::string_view s) {
    for (auto k : {ModelKind::iid_gaussian, ModelKind::random_coeff_linear, ModelKind::ar_p,
                   ModelKind::epidemic_binomial, ModelKind::epidemic_gaussian}) {
        if (to_string(k) == s) return k;
    }
    throw input_error("unknown model kind '" + std::string(s) + "'");
}

namespace model {

/// Y ~ N(mean, sigma^2) i.i.d.; theta is the post-change mean.
struct IidGaussian {
    double mean0{0.0};
    double sigma{1.0};
};

/// X_n = (theta + B_n) X_{n-1} + w_n with Vect(B_n) ~ N(0, coef_cov) (row-major
/// vectorization) and w_n ~ N(0, noise_cov).  theta is a p x p matrix stored
/// row-major as a p^2 vector.
struct RandomCoeffLinear {
    Matrix theta_star;
    Matrix noise_cov;
    Matrix coef_cov;
    // derived
    Matrix kron_second_moment; ///< E[B (x) B] in Kronecker layout
    Matrix coef_sqrt;
    Matrix noise_chol;
};

/// X_n = theta' (X_{n-1}, ..., X_{n-p}) + w_n, w_n ~ N(0, 1).
struct ArP {
    Vector theta_star;
};

/// Binomial susceptible depletion: Y | x ~ Bin(x, 1 - theta).
struct EpidemicBinomial {
    double p_star{};
    std::int64_t x0{};
};

/// Diffusion approximation X_n = (1 - theta) X_{n-1} + sigma_theta sqrt|X_{n-1}| xi_n
/// with sigma_theta^2 = theta (1 - theta) / scale.
struct EpidemicGaussian {
    double p_star{};
    double scale{1.0};
    double x0{1.0};
};

} // namespace model

/// States closer to zero than this are treated as degenerate by the
/// epidemic Gaussian density.
inline constexpr double epidemic_state_floor = 1e-12;

/// Counts LLR evaluations where a degenerate state had to be clamped.
struct GuardCounter {
    std::size_t clamped{0};
};

class ModelSpec {
public:
    using Variant = std::variant<model::IidGaussian, model::RandomCoeffLinear, model::ArP, model::EpidemicBinomial,
                                 model::EpidemicGaussian>;

    static ModelSpec iid_gaussian(double mean0, double sigma = 1.0) {
        if (!std::isfinite(mean0) || !(sigma > 0.0)) throw input_error("iid_gaussian: need finite mean, sigma > 0");
        return ModelSpec(model::IidGaussian{mean0, sigma});
    }

    static ModelSpec random_coeff_linear(Matrix theta_star, Matrix noise_cov, Matrix coef_cov) {
        const auto p = theta_star.rows();
        if (p == 0 || theta_star.cols() != p) throw input_error("random_coeff_linear: theta_star must be p x p");
        if (noise_cov.rows() != p || noise_cov.cols() != p) throw input_error("random_coeff_linear: noise_cov must be p x p");
        if (coef_cov.rows() != p * p || coef_cov.cols() != p * p) {
            throw input_error("random_coeff_linear: coef_cov must be p^2 x p^2");
        }
        model::RandomCoeffLinear m{std::move(theta_star), std::move(noise_cov), std::move(coef_cov), {}, {}, {}};
        Eigen::LLT<Matrix> llt(m.noise_cov);
        if (llt.info() != Eigen::Success || !m.noise_cov.isApprox(m.noise_cov.transpose())) {
            throw input_error("random_coeff_linear: noise_cov must be symmetric positive definite");
        }
        m.noise_chol = llt.matrixL();
        if (!m.coef_cov.isApprox(m.coef_cov.transpose(), 1e-12) && m.coef_cov.norm() > 0) {
            throw input_error("random_coeff_linear: coef_cov must be symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(m.coef_cov);
        if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, m.coef_cov.norm())) {
            throw input_error("random_coeff_linear: coef_cov must be positive semidefinite");
        }
        m.coef_sqrt = linalg::psd_sqrt(m.coef_cov);
        // E[B_ab B_cd] sits at row a*p+c, column b*p+d of E[B (x) B].
        m.kron_second_moment.resize(p * p, p * p);
        for (Eigen::Index a = 0; a < p; ++a)
            for (Eigen::Index b = 0; b < p; ++b)
                for (Eigen::Index c = 0; c < p; ++c)
                    for (Eigen::Index d = 0; d < p; ++d)
                        m.kron_second_moment(a * p + c, b * p + d) = m.coef_cov(a * p + b, c * p + d);
        ModelSpec spec(std::move(m));
        if (!spec.admissible(spec.pre_change_parameter())) {
            throw input_error("random_coeff_linear: pre-change parameter outside the stability region");
        }
        return spec;
    }

    static ModelSpec ar(Vector theta_star) {
        if (theta_star.size() == 0) throw input_error("ar_p: order must be >= 1");
        ModelSpec spec(model::ArP{std::move(theta_star)});
        if (!spec.admissible(spec.pre_change_parameter())) {
            throw input_error("ar_p: pre-change companion matrix is not stable");
        }
        return spec;
    }

    static ModelSpec epidemic_binomial(double p_star, std::int64_t x0) {
        if (!(p_star > 0.0 && p_star < 1.0)) throw input_error("epidemic_binomial: need 0 < p* < 1");
        if (x0 < 0) throw input_error("epidemic_binomial: x0 must be nonnegative");
        return ModelSpec(model::EpidemicBinomial{p_star, x0});
    }

    static ModelSpec epidemic_gaussian(double p_star, double scale = 1.0, double x0 = 1.0) {
        if (!(p_star > 0.0 && p_star < 1.0)) throw input_error("epidemic_gaussian: need 0 < p* < 1");
        if (!(scale > 0.0) || !std::isfinite(scale)) throw input_error("epidemic_gaussian: scale must be positive");
        if (!std::isfinite(x0)) throw input_error("epidemic_gaussian: x0 must be finite");
        return ModelSpec(model::EpidemicGaussian{p_star, scale, x0});
    }

    [[nodiscard]] ModelKind kind() const noexcept { return static_cast<ModelKind>(v_.index()); }
    [[nodiscard]] const Variant& variant() const noexcept { return v_; }

    template <class T>
    [[nodiscard]] const T& as() const {
        return std::get<T>(v_);
    }

    /// Dimension of theta.
    [[nodiscard]] Eigen::Index parameter_dim() const {
        return std::visit(
            [](const auto& m) -> Eigen::Index {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) return m.theta_star.size();
                else if constexpr (std::is_same_v<M, model::ArP>) return m.theta_star.size();
                else return 1;
            },
            v_);
    }

    /// Dimension of one observation.
    [[nodiscard]] Eigen::Index observation_dim() const {
        if (const auto* m = std::get_if<model::RandomCoeffLinear>(&v_)) return m->theta_star.rows();
        return 1;
    }

    [[nodiscard]] Eigen::Index state_dim() const {
        return std::visit(
            [](const auto& m) -> Eigen::Index {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, model::IidGaussian>) return 0;
                else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) return m.theta_star.rows();
                else if constexpr (std::is_same_v<M, model::ArP>) return m.theta_star.size();
                else return 1;
            },
            v_);
    }

    /// theta* as a parameter point; g(theta*, ., .) vanishes identically.
    [[nodiscard]] Point pre_change_parameter() const {
        return std::visit(
            [](const auto& m) -> Point {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, model::IidGaussian>) return Point::Constant(1, m.mean0);
                else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                    const auto p = m.theta_star.rows();
                    Point t(p * p);
                    for (Eigen::Index a = 0; a < p; ++a)
                        for (Eigen::Index b = 0; b < p; ++b) t(a * p + b) = m.theta_star(a, b);
                    return t;
                } else if constexpr (std::is_same_v<M, model::ArP>) return m.theta_star;
                else return Point::Constant(1, m.p_star);
            },
            v_);
    }

    [[nodiscard]] StreamState initial_state() const {
        return std::visit(
            [this](const auto& m) -> StreamState {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, model::EpidemicBinomial>) return StreamState::Constant(1, double(m.x0));
                else if constexpr (std::is_same_v<M, model::EpidemicGaussian>) return StreamState::Constant(1, m.x0);
                else return StreamState::Zero(state_dim());
            },
            v_);
    }

    /// True iff theta lies in the model's stability (or validity) region.
    [[nodiscard]] bool admissible(const Point& theta) const;

private:
    explicit ModelSpec(Variant v) : v_(std::move(v)) {}
    Variant v_;
};

namespace detail {

inline Matrix unflatten(const Point& theta, Eigen::Index p) {
    Matrix m(p, p);
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = 0; b < p; ++b) m(a, b) = theta(a * p + b);
    return m;
}

/// G(x) = E[B x x' B'] + Q*.
inline Matrix rcl_conditional_cov(const model::RandomCoeffLinear& m, const Vector& x) {
    const auto p = m.theta_star.rows();
    Matrix g = m.noise_cov;
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index c = 0; c < p; ++c) {
            double s = 0.0;
            for (Eigen::Index b = 0; b < p; ++b)
                for (Eigen::Index d = 0; d < p; ++d) s += m.coef_cov(a * p + b, c * p + d) * x(b) * x(d);
            g(a, c) += s;
        }
    return g;
}

inline void require_dim(const char* what, Eigen::Index got, Eigen::Index want) {
    if (got != want) {
        throw input_error(std::string(what) + ": dimension " + std::to_string(got) + ", expected " +
                          std::to_string(want));
    }
}

inline void require_open_unit(const char* who, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) {
        throw numeric_error(std::string(who) + ": theta must lie in (0,1), got " + std::to_string(theta));
    }
}

/// |x| for the epidemic Gaussian density, clamped (and counted) or rejected.
inline double epidemic_abs_state(double x, GuardCounter* guard) {
    const double ax = std::abs(x);
    if (ax >= epidemic_state_floor) return ax;
    if (guard == nullptr) throw numeric_error("epidemic_gaussian: density undefined at state 0");
    ++guard->clamped;
    return epidemic_state_floor;
}

} // namespace detail

inline bool ModelSpec::admissible(const Point& theta) const {
    if (theta.size() != parameter_dim() || !theta.allFinite()) return false;
    return std::visit(
        [&](const auto& m) -> bool {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, model::IidGaussian>) return true;
            else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                const Matrix t = detail::unflatten(theta, m.theta_star.rows());
                return linalg::spectral_radius(linalg::kron(t, t) + m.kron_second_moment) < 1.0;
            } else if constexpr (std::is_same_v<M, model::ArP>) {
                return linalg::spectral_radius(linalg::companion(theta)) < 1.0;
            } else return theta(0) > 0.0 && theta(0) < 1.0;
        },
        v_);
}

/// True iff theta is inside the model's declared stationarity region.
inline bool stationarity_check(const ModelSpec& model, const Point& theta) { return model.admissible(theta); }

/// State after observing y.
inline StreamState advance_state(const ModelSpec& spec, const StreamState& state, const Point& y) {
    switch (spec.kind()) {
    case ModelKind::iid_gaussian: return state;
    case ModelKind::ar_p: {
        StreamState next(state.size());
        next(0) = y(0);
        next.tail(state.size() - 1) = state.head(state.size() - 1);
        return next;
    }
    default: return y;
    }
}

/// Log density ratios g(theta_g, y, state) for every grid point at once.
/// With a guard counter, degenerate epidemic states are clamped and counted
/// instead of rejected.
inline void llr_increments(const ModelSpec& spec, std::span<const Point> thetas, const Point& y,
                           const StreamState& state, std::span<double> out, GuardCounter* guard = nullptr) {
    detail::require_dim("observation", y.size(), spec.observation_dim());
    detail::require_dim("state", state.size(), spec.state_dim());
    if (!y.allFinite()) throw numeric_error("non-finite observation");
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, model::IidGaussian>) {
                const double inv2s2 = 0.5 / (m.sigma * m.sigma);
                const double d0 = y(0) - m.mean0;
                for (std::size_t g = 0; g < thetas.size(); ++g) {
                    const double d1 = y(0) - thetas[g](0);
                    out[g] = (d0 * d0 - d1 * d1) * inv2s2;
                }
            } else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                const auto p = m.theta_star.rows();
                Eigen::LLT<Matrix> llt(detail::rcl_conditional_cov(m, state));
                const Vector u_star = m.theta_star * state;
                const Vector gi_u_star = llt.solve(u_star);
                const double q_star = u_star.dot(gi_u_star);
                for (std::size_t g = 0; g < thetas.size(); ++g) {
                    const Vector u = detail::unflatten(thetas[g], p) * state;
                    const Vector gi_u = llt.solve(u);
                    out[g] = y.dot(gi_u - gi_u_star) + 0.5 * (q_star - u.dot(gi_u));
                }
            } else if constexpr (std::is_same_v<M, model::ArP>) {
                const double s_star = m.theta_star.dot(state);
                for (std::size_t g = 0; g < thetas.size(); ++g) {
                    const double s = thetas[g].dot(state);
                    out[g] = y(0) * (s - s_star) + 0.5 * (s_star * s_star - s * s);
                }
            } else if constexpr (std::is_same_v<M, model::EpidemicBinomial>) {
                const double x = state(0), yy = y(0);
                if (yy < 0.0 || yy > x || yy != std::floor(yy) || x != std::floor(x)) {
                    throw numeric_error("epidemic_binomial: observation outside the support {0..x}");
                }
                for (std::size_t g = 0; g < thetas.size(); ++g) {
                    const double t = thetas[g](0);
                    detail::require_open_unit("epidemic_binomial", t);
                    out[g] = (x - yy) * std::log(t / m.p_star) + yy * std::log((1.0 - t) / (1.0 - m.p_star));
                }
            } else {
                const double ax = detail::epidemic_abs_state(state(0), guard);
                const double x = state(0);
                const double var_star = m.p_star * (1.0 - m.p_star) / m.scale;
                const double r_star = y(0) - (1.0 - m.p_star) * x;
                const double eta_star_sq = r_star * r_star / (var_star * ax);
                for (std::size_t g = 0; g < thetas.size(); ++g) {
                    const double t = thetas[g](0);
                    detail::require_open_unit("epidemic_gaussian", t);
                    const double var = t * (1.0 - t) / m.scale;
                    const double r = y(0) - (1.0 - t) * x;
                    out[g] = 0.5 * std::log(var_star / var) + 0.5 * eta_star_sq - 0.5 * r * r / (var * ax);
                }
            }
        },
        spec.variant());
}

/// One-step log density ratio log f_theta(y|state) - log f*(y|state).
inline double llr_increment(const ModelSpec& spec, const Point& theta, const Point& y, const StreamState& state,
                            GuardCounter* guard = nullptr) {
    detail::require_dim("parameter", theta.size(), spec.parameter_dim());
    double out = 0.0;
    llr_increments(spec, std::span<const Point>(&theta, 1), y, state, std::span<double>(&out, 1), guard);
    return out;
}

/// Pre-change regime when theta is empty, otherwise post-change with theta.
struct Regime {
    std::optional<Point> theta;

    static Regime pre() { return {}; }
    static Regime post(Point theta) { return {std::move(theta)}; }
    [[nodiscard]] bool is_post() const noexcept { return theta.has_value(); }
};

/// One Markov transition under the given regime.  Returns the new
/// observation and the updated state.
template <NoiseSource R>
std::pair<Point, StreamState> simulate_step(const ModelSpec& spec, const Regime& regime, const StreamState& state,
                                            R& rng) {
    const Point theta = regime.is_post() ? *regime.theta : spec.pre_change_parameter();
    detail::require_dim("parameter", theta.size(), spec.parameter_dim());
    Point y = std::visit(
        [&](const auto& m) -> Point {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, model::IidGaussian>) {
                return Point::Constant(1, theta(0) + m.sigma * rng.normal());
            } else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                const auto p = m.theta_star.rows();
                Vector zb(p * p), zw(p);
                for (Eigen::Index k = 0; k < p * p; ++k) zb(k) = rng.normal();
                for (Eigen::Index k = 0; k < p; ++k) zw(k) = rng.normal();
                const Matrix b = detail::unflatten(m.coef_sqrt * zb, p);
                return (detail::unflatten(theta, p) + b) * state + m.noise_chol * zw;
            } else if constexpr (std::is_same_v<M, model::ArP>) {
                return Point::Constant(1, theta.dot(state) + rng.normal());
            } else if constexpr (std::is_same_v<M, model::EpidemicBinomial>) {
                const auto x = static_cast<std::int64_t>(state(0));
                return Point::Constant(1, static_cast<double>(rng.binomial(x, 1.0 - theta(0))));
            } else {
                const double t = theta(0);
                const double sd = std::sqrt(t * (1.0 - t) / m.scale);
                const double x = state(0);
                return Point::Constant(1, (1.0 - t) * x + sd * std::sqrt(std::abs(x)) * rng.normal());
            }
        },
        spec.variant());
    StreamState next = advance_state(spec, state, y);
    return {std::move(y), std::move(next)};
}

/// The pair (J, J*) of Kullback-Leibler numbers; J >= 0 >= J*.
struct KlPair {
    double j{};
    double j_star{};
};

/// Conditional informations J(theta, x) = E_theta[g | x] and
/// J*(theta, x) = E*[g | x] in closed form.
inline KlPair conditional_information(const ModelSpec& spec, const Point& theta, const StreamState& state) {
    detail::require_dim("parameter", theta.size(), spec.parameter_dim());
    detail::require_dim("state", state.size(), spec.state_dim());
    return std::visit(
        [&](const auto& m) -> KlPair {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, model::IidGaussian>) {
                const double d = theta(0) - m.mean0;
                const double v = 0.5 * d * d / (m.sigma * m.sigma);
                return {v, -v};
            } else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                const auto p = m.theta_star.rows();
                const Vector delta = (detail::unflatten(theta, p) - m.theta_star) * state;
                const double v = 0.5 * delta.dot(detail::rcl_conditional_cov(m, state).llt().solve(delta));
                return {v, -v};
            } else if constexpr (std::is_same_v<M, model::ArP>) {
                const double d = (theta - m.theta_star).dot(state);
                return {0.5 * d * d, -0.5 * d * d};
            } else if constexpr (std::is_same_v<M, model::EpidemicBinomial>) {
                const double t = theta(0);
                detail::require_open_unit("epidemic_binomial", t);
                const double x = state(0);
                const double l1 = std::log(t / m.p_star);
                const double l2 = std::log((1.0 - t) / (1.0 - m.p_star));
                return {x * (t * l1 + (1.0 - t) * l2), x * (m.p_star * l1 + (1.0 - m.p_star) * l2)};
            } else {
                const double t = theta(0);
                detail::require_open_unit("epidemic_gaussian", t);
                const double a = m.p_star * (1.0 - m.p_star);
                const double b = t * (1.0 - t);
                const double d2 = (t - m.p_star) * (t - m.p_star) * m.scale * std::abs(state(0));
                const double lr = std::log(a / b);
                return {0.5 * (lr - 1.0 + b / a + d2 / a), 0.5 * (lr + 1.0 - a / b - d2 / b)};
            }
        },
        spec.variant());
}

/// Ergodic KL numbers, possibly affine in the stationary moment E|state|:
///   J_bar = base.j + abs_state_slope.j * E|s_theta|,
///   J*_bar = base.j_star + abs_state_slope.j_star * E|s*|.
struct ClosedFormKl {
    KlPair base;
    KlPair abs_state_slope{0.0, 0.0};
    bool needs_state_moment{false};

    [[nodiscard]] KlPair evaluate(double mean_abs_post = 0.0, double mean_abs_pre = 0.0) const {
        return {base.j + abs_state_slope.j * mean_abs_post, base.j_star + abs_state_slope.j_star * mean_abs_pre};
    }
};

/// Closed or semi-closed ergodic KL numbers; empty when no closed form exists
/// (random-coefficient model: estimate by Monte Carlo instead).
inline std::optional<ClosedFormKl> closed_form_kl(const ModelSpec& spec, const Point& theta) {
    detail::require_dim("parameter", theta.size(), spec.parameter_dim());
    if (!spec.admissible(theta)) throw numeric_error("closed_form_kl: parameter outside the stationarity region");
    return std::visit(
        [&](const auto& m) -> std::optional<ClosedFormKl> {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, model::IidGaussian>) {
                const double d = theta(0) - m.mean0;
                const double v = 0.5 * d * d / (m.sigma * m.sigma);
                return ClosedFormKl{{v, -v}};
            } else if constexpr (std::is_same_v<M, model::RandomCoeffLinear>) {
                return std::nullopt;
            } else if constexpr (std::is_same_v<M, model::ArP>) {
                const Vector delta = theta - m.theta_star;
                if (delta.size() == 1) {
                    const double d2 = delta(0) * delta(0);
                    const double ts = m.theta_star(0);
                    return ClosedFormKl{{d2 / (2.0 * (1.0 - theta(0) * theta(0))), -d2 / (2.0 * (1.0 - ts * ts))}};
                }
                const auto p = delta.size();
                Matrix b = Matrix::Zero(p, p);
                b(0, 0) = 1.0;
                const Matrix f = linalg::stationary_covariance(linalg::companion(theta), b);
                const Matrix f_star = linalg::stationary_covariance(linalg::companion(m.theta_star), b);
                return ClosedFormKl{{0.5 * delta.dot(f * delta), -0.5 * delta.dot(f_star * delta)}};
            } else if constexpr (std::is_same_v<M, model::EpidemicBinomial>) {
                // The chain is absorbed at 0, where both conditional numbers vanish.
                return ClosedFormKl{{0.0, 0.0}};
            } else {
                const double t = theta(0);
                const double a = m.p_star * (1.0 - m.p_star);
                const double b = t * (1.0 - t);
                const double d2 = (t - m.p_star) * (t - m.p_star) * m.scale;
                const double lr = std::log(a / b);
                return ClosedFormKl{{0.5 * (lr - 1.0 + b / a), 0.5 * (lr + 1.0 - a / b)},
                                    {0.5 * d2 / a, -0.5 * d2 / b},
                                    true};
            }
        },
        spec.variant());
}

} // namespace msdi
