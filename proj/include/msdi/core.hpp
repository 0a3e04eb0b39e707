#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "msdi/error.hpp"

/**
 * @file
 * Shared domain types: the geometric change-point prior, discretized weight
 * grids, constraint and threshold matrices, and the hyperparameter schedules
 * derived from a constraint matrix.
 */

namespace msdi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A parameter value (or an observation); scalars are 1-vectors.
using Point = Vector;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Numerically stable log(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) noexcept {
    if (a == neg_inf) return b;
    if (b == neg_inf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// Geometric prior pi_k = rho (1 - rho)^k on the change point k = 0, 1, ...
class GeometricPrior {
public:
    explicit GeometricPrior(double rho) : rho_(rho) {
        if (!(rho > 0.0 && rho < 1.0)) {
            throw input_error("geometric prior requires 0 < rho < 1, got " + std::to_string(rho));
        }
        log_rho_ = std::log(rho_);
        log1m_rho_ = std::log1p(-rho_);
    }

    [[nodiscard]] double rho() const noexcept { return rho_; }

    [[nodiscard]] double mass(std::size_t k) const noexcept { return std::exp(log_mass(k)); }
    [[nodiscard]] double log_mass(std::size_t k) const noexcept {
        return log_rho_ + static_cast<double>(k) * log1m_rho_;
    }

    /// Sum over l >= n of mass(l), i.e. (1 - rho)^n.
    [[nodiscard]] double tail(std::size_t n) const noexcept { return std::exp(log_tail(n)); }
    [[nodiscard]] double log_tail(std::size_t n) const noexcept { return static_cast<double>(n) * log1m_rho_; }

private:
    double rho_;
    double log_rho_;
    double log1m_rho_;
};

inline double prior_mass(const GeometricPrior& prior, std::size_t k) { return prior.mass(k); }
inline double prior_tail(const GeometricPrior& prior, std::size_t n) { return prior.tail(n); }

/// Discrete weight measure over a stream's post-change parameter set.
/// Weights are strictly positive and normalized on construction.
class ParameterGrid {
public:
    ParameterGrid() = default;

    /// Uniform weights over the given points.
    explicit ParameterGrid(std::vector<Point> points)
        : ParameterGrid(points, std::vector<double>(points.size(), 1.0)) {}

    ParameterGrid(std::vector<Point> points, std::vector<double> weights)
        : points_(std::move(points)), weights_(std::move(weights)) {
        if (points_.empty()) throw input_error("parameter grid is empty");
        if (weights_.size() != points_.size()) {
            throw input_error("parameter grid: " + std::to_string(points_.size()) + " points but " +
                              std::to_string(weights_.size()) + " weights");
        }
        const auto dim = points_.front().size();
        double total = 0.0;
        for (std::size_t g = 0; g < points_.size(); ++g) {
            if (points_[g].size() != dim) throw input_error("parameter grid: points have mixed dimensions");
            if (!points_[g].allFinite()) throw input_error("parameter grid: non-finite point");
            if (!(weights_[g] > 0.0) || !std::isfinite(weights_[g])) {
                throw input_error("parameter grid: weights must be strictly positive");
            }
            total += weights_[g];
        }
        for (std::size_t a = 0; a < points_.size(); ++a) {
            for (std::size_t b = a + 1; b < points_.size(); ++b) {
                if (points_[a] == points_[b]) throw input_error("parameter grid: duplicate points");
            }
        }
        log_weights_.reserve(weights_.size());
        for (auto& w : weights_) {
            w /= total;
            log_weights_.push_back(std::log(w));
        }
    }

    /// Cartesian product of per-coordinate linspace(lo, hi, count) axes.
    struct Axis {
        double lo;
        double hi;
        std::size_t count;
    };
    static ParameterGrid linspace(const std::vector<Axis>& axes) {
        if (axes.empty()) throw input_error("linspace grid needs at least one axis");
        std::vector<Point> pts{Point(0)};
        for (const auto& ax : axes) {
            if (ax.count == 0) throw input_error("linspace axis with zero points");
            std::vector<Point> next;
            for (const auto& p : pts) {
                for (std::size_t c = 0; c < ax.count; ++c) {
                    const double v = ax.count == 1 ? ax.lo
                                                   : ax.lo + (ax.hi - ax.lo) * static_cast<double>(c) /
                                                                 static_cast<double>(ax.count - 1);
                    Point q(p.size() + 1);
                    q.head(p.size()) = p;
                    q(p.size()) = v;
                    next.push_back(std::move(q));
                }
            }
            pts = std::move(next);
        }
        return ParameterGrid(std::move(pts));
    }

    [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
    [[nodiscard]] Eigen::Index dimension() const noexcept { return points_.empty() ? 0 : points_.front().size(); }
    [[nodiscard]] const std::vector<Point>& points() const noexcept { return points_; }
    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
    [[nodiscard]] const std::vector<double>& log_weights() const noexcept { return log_weights_; }
    [[nodiscard]] const Point& operator[](std::size_t g) const { return points_[g]; }

private:
    std::vector<Point> points_;
    std::vector<double> weights_;
    std::vector<double> log_weights_;
};

/// Square matrix of probabilities strictly inside (0, 1): the local
/// constraint matrix beta or the Bayesian constraint matrix alpha.
class ErrorMatrix {
public:
    ErrorMatrix() = default;
    explicit ErrorMatrix(Matrix entries) : entries_(std::move(entries)) {
        if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
            throw input_error("error matrix must be square and nonempty");
        }
        for (Eigen::Index i = 0; i < entries_.size(); ++i) {
            const double v = entries_.data()[i];
            if (!(v > 0.0 && v < 1.0)) {
                throw input_error("error matrix entries must lie in (0,1), got " + std::to_string(v));
            }
        }
    }

    /// beta_{i,j} = eps / (i + j) with 1-based i, j.
    static ErrorMatrix harmonic(std::size_t n, double eps) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m(i, j) = eps / static_cast<double>(i + j + 2);
        return ErrorMatrix(std::move(m));
    }

    static ErrorMatrix constant(std::size_t n, double value) {
        return ErrorMatrix(Matrix::Constant(n, n, value));
    }

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
    [[nodiscard]] double max() const { return entries_.maxCoeff(); }
    [[nodiscard]] double min() const { return entries_.minCoeff(); }
    [[nodiscard]] double trace() const { return entries_.trace(); }

    [[nodiscard]] ErrorMatrix scaled(double factor) const { return ErrorMatrix(entries_ * factor); }

private:
    Matrix entries_;
};

enum class ThresholdProvenance { from_alpha, from_beta, optimal, manual };

inline std::string_view to_string(ThresholdProvenance p) {
    switch (p) {
    case ThresholdProvenance::from_alpha: return "from_alpha";
    case ThresholdProvenance::from_beta: return "from_beta";
    case ThresholdProvenance::optimal: return "optimal";
    case ThresholdProvenance::manual: return "manual";
    }
    return "manual";
}

/// Positive N x N threshold matrix A, stored together with log A.
class ThresholdMatrix {
public:
    ThresholdMatrix() = default;
    ThresholdMatrix(Matrix entries, ThresholdProvenance provenance)
        : entries_(std::move(entries)), provenance_(provenance) {
        if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
            throw input_error("threshold matrix must be square and nonempty");
        }
        if (!(entries_.array() > 0.0).all() || !entries_.allFinite()) {
            throw input_error("threshold matrix entries must be positive and finite");
        }
        log_entries_ = entries_.array().log().matrix();
    }

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    [[nodiscard]] double log_at(std::size_t i, std::size_t j) const { return log_entries_(i, j); }
    [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
    [[nodiscard]] const Matrix& log_entries() const noexcept { return log_entries_; }
    [[nodiscard]] ThresholdProvenance provenance() const noexcept { return provenance_; }

private:
    Matrix entries_;
    Matrix log_entries_;
    ThresholdProvenance provenance_{ThresholdProvenance::manual};
};

/// Schedules tying the prior, the false-alarm window m* and the horizon k*
/// to the constraint matrix beta.
struct Hyperparams {
    double rho_beta{};
    std::size_t m_star{};
    std::size_t k_star{};
    double k_check{};
    double rho_opt{};
    double r{1.0};
};

/// rho_beta = 1/(1+|log beta_max|), m* = [|log beta_min| / rho_beta],
/// k* = [k_check m*], and the optimal prior parameter rho_opt.
inline Hyperparams hyperparams_from_beta(const ErrorMatrix& beta, double k_check, double r = 1.0) {
    if (!(k_check > 1.0)) throw input_error("k_check must exceed 1");
    if (!(r >= 1.0)) throw input_error("moment order r must be >= 1");
    const double bmax = beta.max();
    const double bmin = beta.min();
    if (!(bmax < 1.0) || !(bmin > 0.0)) throw input_error("beta entries must lie in (0,1)");

    Hyperparams hp;
    hp.k_check = k_check;
    hp.r = r;
    const double lmax = std::abs(std::log(bmax));
    const double lmin = std::abs(std::log(bmin));
    hp.rho_beta = 1.0 / (1.0 + lmax);
    hp.m_star = static_cast<std::size_t>(std::floor(lmin / hp.rho_beta));
    hp.k_star = static_cast<std::size_t>(std::floor(k_check * static_cast<double>(hp.m_star)));
    hp.rho_opt = lmax * hp.rho_beta / (lmin * (1.0 + std::abs(std::log(hp.rho_beta))));
    if (hp.m_star < 1) throw input_error("beta too close to 1: m* = 0");
    if (hp.k_star <= hp.m_star) throw input_error("k_check too small: k* must exceed m*");
    return hp;
}

/// The pair of Bayesian constraint matrices sandwiching the local class.
struct AlphaEmbeddings {
    ErrorMatrix alpha1;
    Matrix alpha2; ///< may contain entries >= 1 for large rho (degenerate upper embedding)
    bool alpha2_degenerate{};
};

inline AlphaEmbeddings alpha_embeddings(const ErrorMatrix& beta, const Hyperparams& hp, double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw input_error("alpha embeddings need 0 < rho < 1");
    const auto n = beta.size();
    const double tr = beta.trace();
    const double tail_k = std::pow(1.0 - rho, static_cast<double>(hp.k_star));
    Matrix a1(n, n), a2(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                a1(i, j) = beta(i, i) * tail_k / (1.0 + tr);
                a2(i, j) = beta(i, i) + std::pow(1.0 - rho, static_cast<double>(hp.m_star + 1));
            } else {
                a1(i, j) = beta(i, j) * rho * tail_k / (1.0 + tr);
                a2(i, j) = beta(i, j) + std::pow(1.0 - rho, static_cast<double>(hp.k_star + 1));
            }
        }
    }
    if (!(a1.array() < 1.0).all() || !(a1.array() > 0.0).all()) {
        throw numeric_error("degenerate alpha embedding: alpha1 entries outside (0,1)");
    }
    const bool degenerate = !(a2.array() < 1.0).all();
    return {ErrorMatrix(std::move(a1)), std::move(a2), degenerate};
}

inline AlphaEmbeddings alpha_embeddings(const ErrorMatrix& beta, const Hyperparams& hp) {
    return alpha_embeddings(beta, hp, hp.rho_opt);
}

/// Outcome of the stopping/identification rule.
struct DecisionOutcome {
    bool stopped{};
    std::size_t time{};   ///< stopping time T (sample index)
    std::size_t stream{}; ///< identified stream d, 1-based
    Matrix log_u;         ///< log U_T snapshot
};

} // namespace msdi
