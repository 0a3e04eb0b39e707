#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msdi/core.hpp"
#include "msdi/models.hpp"

/**
 * @file
 * Mixture detection-identification statistics.
 *
 * For stream i with cumulative LLR C_n(theta) = sum_{t<=n} g(theta, X_t, X_{t-1}):
 *   L_n    = sum_{k<n} pi_k sum_theta w(theta) exp(C_n(theta) - C_k(theta))
 *   Lhat_n = sum_{k<n} pi_k max_theta   exp(C_n(theta) - C_k(theta))
 * and the decision matrix
 *   log U_ij = log L_i - log Lhat_j  (i != j),   log U_ii = log L_i - n log(1 - rho).
 * The rule stops at the first n with min_j (log U_ij - log A_ij) >= 0 for some i.
 *
 * In full mode L is updated recursively per grid point:
 *   S_{n+1}(theta) = (S_n(theta) + pi_n) exp(g_{n+1}(theta)).
 * Lhat has no such recursion and costs O(n |grid|) per step.
 */

namespace msdi {

struct DetectorOptions {
    /// Retain only the trailing `window` change-point hypotheses k in
    /// {n - window, ..., n - 1}; empty means full history.
    std::optional<std::size_t> window;
    /// Clamp degenerate epidemic states and count them instead of throwing.
    bool clamp_degenerate_states{true};
};

class Detector {
public:
    Detector(std::vector<ModelSpec> models, std::vector<ParameterGrid> grids, double rho,
             DetectorOptions options = {}, std::vector<StreamState> initial_states = {})
        : models_(std::move(models)), grids_(std::move(grids)), prior_(rho), options_(options) {
        if (models_.empty()) throw input_error("detector needs at least one stream");
        if (grids_.size() != models_.size()) {
            throw input_error("detector: " + std::to_string(models_.size()) + " models but " +
                              std::to_string(grids_.size()) + " grids");
        }
        if (options_.window && *options_.window == 0) throw input_error("window length must be >= 1");
        if (!initial_states.empty() && initial_states.size() != models_.size()) {
            throw input_error("detector: initial state count does not match stream count");
        }
        const auto n = models_.size();
        streams_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& grid = grids_[i];
            if (grid.size() == 0) throw input_error("stream " + std::to_string(i + 1) + ": empty grid");
            if (grid.dimension() != models_[i].parameter_dim()) {
                throw input_error("stream " + std::to_string(i + 1) + ": grid dimension " +
                                  std::to_string(grid.dimension()) + " but model expects " +
                                  std::to_string(models_[i].parameter_dim()));
            }
            for (const auto& p : grid.points()) {
                if (!models_[i].admissible(p)) {
                    throw input_error("stream " + std::to_string(i + 1) + ": grid point outside the admissible set");
                }
            }
            auto& s = streams_[i];
            s.state = initial_states.empty() ? models_[i].initial_state() : initial_states[i];
            if (s.state.size() != models_[i].state_dim()) {
                throw input_error("stream " + std::to_string(i + 1) + ": initial state has wrong dimension");
            }
            s.cum = Vector::Zero(static_cast<Eigen::Index>(grid.size()));
            s.log_s = Vector::Constant(static_cast<Eigen::Index>(grid.size()), neg_inf);
            s.history.push_back(s.cum);
        }
        log_l_ = Vector::Constant(static_cast<Eigen::Index>(n), neg_inf);
        log_lhat_ = log_l_;
    }

    [[nodiscard]] std::size_t streams() const noexcept { return models_.size(); }
    [[nodiscard]] std::size_t time() const noexcept { return n_; }
    [[nodiscard]] const GeometricPrior& prior() const noexcept { return prior_; }
    [[nodiscard]] const DetectorOptions& options() const noexcept { return options_; }
    [[nodiscard]] const ModelSpec& model(std::size_t i) const { return models_.at(i); }
    [[nodiscard]] const ParameterGrid& grid(std::size_t i) const { return grids_.at(i); }
    [[nodiscard]] const StreamState& state(std::size_t i) const { return streams_.at(i).state; }
    [[nodiscard]] std::size_t clamped(std::size_t i) const { return streams_.at(i).guard.clamped; }

    [[nodiscard]] const Vector& log_L() const noexcept { return log_l_; }
    [[nodiscard]] const Vector& log_Lhat() const noexcept { return log_lhat_; }

    [[nodiscard]] Matrix log_U() const {
        const auto n = static_cast<Eigen::Index>(streams());
        Matrix u(n, n);
        const double diag_shift = prior_.log_tail(n_);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) u(i, j) = i == j ? log_l_(i) - diag_shift : log_l_(i) - log_lhat_(j);
        return u;
    }

    /// Consumes one observation per stream.  Either every stream advances or,
    /// on error, none does.
    void update(const std::vector<Point>& obs) {
        if (obs.size() != streams()) {
            throw input_error("update: expected " + std::to_string(streams()) + " observations, got " +
                              std::to_string(obs.size()));
        }
        std::vector<Vector> incs(streams());
        std::vector<GuardCounter> guards(streams());
        for (std::size_t i = 0; i < streams(); ++i) {
            if (!obs[i].allFinite()) throw input_error("stream " + std::to_string(i + 1) + ": non-finite observation");
            const auto& grid = grids_[i];
            incs[i].resize(static_cast<Eigen::Index>(grid.size()));
            guards[i] = streams_[i].guard;
            try {
                llr_increments(models_[i], grid.points(), obs[i], streams_[i].state,
                               std::span<double>(incs[i].data(), grid.size()),
                               options_.clamp_degenerate_states ? &guards[i] : nullptr);
            } catch (const input_error& e) {
                throw input_error("stream " + std::to_string(i + 1) + ": " + e.what());
            } catch (const error& e) {
                throw stream_error(i, e.what());
            }
            if (!incs[i].allFinite()) throw stream_error(i, "non-finite log-likelihood ratio");
        }

        const double log_pi_n = prior_.log_mass(n_);
        ++n_;
        for (std::size_t i = 0; i < streams(); ++i) {
            auto& s = streams_[i];
            s.guard = guards[i];
            s.state = advance_state(models_[i], s.state, obs[i]);
            s.cum += incs[i];
            for (Eigen::Index g = 0; g < s.log_s.size(); ++g) s.log_s(g) = log_add_exp(s.log_s(g), log_pi_n) + incs[i](g);
            s.history.push_back(s.cum);
            // history holds C_k for k = first_k .. n
            if (options_.window && s.history.size() > *options_.window + 1) {
                s.history.pop_front();
                ++s.first_k;
            }
            recompute(i);
        }
    }

    /// Applies the stopping rule at the current time.
    [[nodiscard]] std::optional<DecisionOutcome> decision_step(const ThresholdMatrix& a) const {
        if (a.size() != streams()) throw input_error("threshold matrix size does not match stream count");
        if (n_ == 0) return std::nullopt;
        const Matrix u = log_U();
        for (std::size_t i = 0; i < streams(); ++i) {
            double margin = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < streams(); ++j) margin = std::min(margin, u(i, j) - a.log_at(i, j));
            if (margin >= 0.0) return DecisionOutcome{true, n_, i + 1, u};
        }
        return std::nullopt;
    }

private:
    struct Stream {
        StreamState state;
        Vector cum;              ///< C_n(theta)
        Vector log_s;            ///< log S_n(theta), full-mode recursion
        std::deque<Vector> history;
        std::size_t first_k{0};
        GuardCounter guard;
        std::vector<double> scratch;
    };

    void recompute(std::size_t i) {
        auto& s = streams_[i];
        const auto& lw = grids_[i].log_weights();
        const auto gsize = static_cast<Eigen::Index>(lw.size());

        // log L
        if (!options_.window) {
            double acc = neg_inf;
            for (Eigen::Index g = 0; g < gsize; ++g) acc = log_add_exp(acc, lw[g] + s.log_s(g));
            log_l_(i) = acc;
        }

        // log Lhat (and log L in window mode): one term per retained k < n.
        const std::size_t nk = s.history.size() - 1;
        s.scratch.resize(nk);
        double top = neg_inf;
        double l_acc = neg_inf;
        for (std::size_t h = 0; h < nk; ++h) {
            const Vector& ck = s.history[h];
            const double lp = prior_.log_mass(s.first_k + h);
            double best = neg_inf;
            for (Eigen::Index g = 0; g < gsize; ++g) best = std::max(best, s.cum(g) - ck(g));
            s.scratch[h] = lp + best;
            top = std::max(top, s.scratch[h]);
            if (options_.window) {
                double inner = neg_inf;
                for (Eigen::Index g = 0; g < gsize; ++g) inner = log_add_exp(inner, lw[g] + s.cum(g) - ck(g));
                l_acc = log_add_exp(l_acc, lp + inner);
            }
        }
        double sum = 0.0;
        for (double v : s.scratch) sum += std::exp(v - top);
        log_lhat_(i) = top + std::log(sum);
        if (options_.window) log_l_(i) = l_acc;
    }

    std::vector<ModelSpec> models_;
    std::vector<ParameterGrid> grids_;
    GeometricPrior prior_;
    DetectorOptions options_;
    std::vector<Stream> streams_;
    std::size_t n_{0};
    Vector log_l_;
    Vector log_lhat_;
};

/// Result of driving a detector until it stops or the source runs dry.
struct RunResult {
    DecisionOutcome outcome;
    std::size_t consumed{0};
    bool exhausted{false}; ///< source ran out before the horizon
};

/// Observation source: returns the observations for step n (1-based), or
/// nothing when exhausted.
using ObservationSource = std::function<std::optional<std::vector<Point>>(std::size_t)>;

/// Per-step trace callback, invoked after every update.
using TraceSink = std::function<void(const Detector&)>;

inline RunResult run_to_decision(Detector& det, const ThresholdMatrix& a, const ObservationSource& source,
                                 std::size_t horizon, const TraceSink& trace = {}) {
    if (horizon == 0) throw input_error("horizon must be >= 1");
    RunResult res;
    while (det.time() < horizon) {
        auto obs = source(det.time() + 1);
        if (!obs) {
            res.exhausted = true;
            break;
        }
        det.update(*obs);
        ++res.consumed;
        if (trace) trace(det);
        if (auto d = det.decision_step(a)) {
            res.outcome = std::move(*d);
            return res;
        }
    }
    res.outcome.stopped = false;
    res.outcome.time = det.time();
    res.outcome.log_u = det.log_U();
    return res;
}

struct BruteForceStatistics {
    Vector log_L;
    Vector log_Lhat;
    Matrix log_U;
};

/// Direct evaluation of the mixture sums over every (k, theta) in extended
/// precision.  `observations[t][i]` is stream i's observation at time t+1.
inline BruteForceStatistics brute_force_statistics(const std::vector<std::vector<Point>>& observations,
                                                   const std::vector<ModelSpec>& models,
                                                   const std::vector<ParameterGrid>& grids, double rho,
                                                   std::optional<std::size_t> window = {},
                                                   std::vector<StreamState> initial_states = {}) {
    using ld = long double;
    const std::size_t n = observations.size();
    const std::size_t ns = models.size();
    if (n == 0) throw input_error("brute force needs at least one observation");
    if (grids.size() != ns) throw input_error("brute force: grid count mismatch");
    const ld log1m = std::log1p(-static_cast<ld>(rho));
    const ld log_rho = std::log(static_cast<ld>(rho));

    BruteForceStatistics out;
    out.log_L.resize(static_cast<Eigen::Index>(ns));
    out.log_Lhat.resize(static_cast<Eigen::Index>(ns));
    for (std::size_t i = 0; i < ns; ++i) {
        const auto& grid = grids[i];
        StreamState x = initial_states.empty() ? models[i].initial_state() : initial_states[i];
        GuardCounter guard;
        // g[t][theta] for t = 1..n
        std::vector<std::vector<ld>> g(n, std::vector<ld>(grid.size()));
        for (std::size_t t = 0; t < n; ++t) {
            const Point& y = observations[t].at(i);
            for (std::size_t th = 0; th < grid.size(); ++th) {
                g[t][th] = llr_increment(models[i], grid[th], y, x, &guard);
            }
            x = advance_state(models[i], x, y);
        }
        const std::size_t k0 = window && *window < n ? n - *window : 0;
        ld sum_l = 0, sum_h = 0;
        for (std::size_t k = k0; k < n; ++k) {
            const ld pk = std::exp(log_rho + static_cast<ld>(k) * log1m);
            ld mix = 0, best = -std::numeric_limits<ld>::infinity();
            for (std::size_t th = 0; th < grid.size(); ++th) {
                ld z = 0;
                for (std::size_t t = k; t < n; ++t) z += g[t][th];
                mix += static_cast<ld>(grid.weights()[th]) * std::exp(z);
                best = std::max(best, z);
            }
            sum_l += pk * mix;
            sum_h += pk * std::exp(best);
        }
        out.log_L(static_cast<Eigen::Index>(i)) = static_cast<double>(std::log(sum_l));
        out.log_Lhat(static_cast<Eigen::Index>(i)) = static_cast<double>(std::log(sum_h));
    }
    const auto nn = static_cast<Eigen::Index>(ns);
    out.log_U.resize(nn, nn);
    for (Eigen::Index i = 0; i < nn; ++i)
        for (Eigen::Index j = 0; j < nn; ++j)
            out.log_U(i, j) = i == j ? out.log_L(i) - static_cast<double>(static_cast<ld>(n) * log1m)
                                     : out.log_L(i) - out.log_Lhat(j);
    return out;
}

// ---- export -------------------------------------------------------------

inline void write_trace_header(std::ostream& os, std::size_t n_streams) {
    os << "n,stream,log_L,log_Lhat";
    for (std::size_t j = 0; j < n_streams; ++j) os << ",log_U_" << j + 1;
    os << '\n';
}

/// One CSV row per stream for the detector's current step.
inline void write_trace_rows(std::ostream& os, const Detector& det) {
    const Matrix u = det.log_U();
    const auto prec = os.precision(17);
    for (std::size_t i = 0; i < det.streams(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        os << det.time() << ',' << i + 1 << ',' << det.log_L()(ii) << ',' << det.log_Lhat()(ii);
        for (Eigen::Index j = 0; j < u.cols(); ++j) os << ',' << u(ii, j);
        os << '\n';
    }
    os.precision(prec);
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            if (std::isfinite(v)) row.push_back(v);
            else row.push_back(v > 0 ? "inf" : (v < 0 ? "-inf" : "nan"));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json to_json(const DecisionOutcome& d) {
    nlohmann::json j;
    j["stopped"] = d.stopped;
    j["T"] = d.time;
    if (d.stopped) j["d"] = d.stream;
    else j["d"] = nullptr;
    j["snapshot"] = matrix_to_json(d.log_u);
    return j;
}

} // namespace msdi
