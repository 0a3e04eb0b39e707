#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "msdi/core.hpp"
#include "msdi/models.hpp"

/**
 * @file
 * Threshold calibration and the delay bound functionals.
 */

namespace msdi {

/// A_ii = 1/alpha_ii - 1, A_ij = 1/alpha_ji.
inline ThresholdMatrix thresholds_from_alpha(const ErrorMatrix& alpha) {
    const auto n = alpha.size();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = i == j ? 1.0 / alpha(i, i) - 1.0 : 1.0 / alpha(j, i);
    return ThresholdMatrix(std::move(a), ThresholdProvenance::from_alpha);
}

/// A_ii = (1 + tr beta) / (beta_ii (1-rho)^k*) - 1,
/// A_ij = (1 + tr beta) / (beta_ji rho (1-rho)^k*).
inline ThresholdMatrix thresholds_from_beta(const ErrorMatrix& beta, const Hyperparams& hp, double rho,
                                            ThresholdProvenance tag = ThresholdProvenance::from_beta) {
    if (!(rho > 0.0 && rho < 1.0)) throw input_error("thresholds_from_beta: need 0 < rho < 1");
    const double log_tail = static_cast<double>(hp.k_star) * std::log1p(-rho);
    if (log_tail < std::log(1e-300)) {
        throw numeric_error("(1-rho)^k* underflows (k* = " + std::to_string(hp.k_star) +
                            "); use a smaller k_check or a smaller rho");
    }
    const double tail = std::exp(log_tail);
    const double c = 1.0 + beta.trace();
    const auto n = beta.size();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = i == j ? c / (beta(i, i) * tail) - 1.0 : c / (beta(j, i) * rho * tail);
    return ThresholdMatrix(std::move(a), tag);
}

/// The optimal configuration: thresholds_from_beta at rho = rho_opt.
inline ThresholdMatrix thresholds_optimal(const ErrorMatrix& beta, const Hyperparams& hp) {
    return thresholds_from_beta(beta, hp, hp.rho_opt, ThresholdProvenance::optimal);
}

/// Upper bounds 1/(1 + A_ii) on the Bayesian false alarm probabilities.
inline Vector pfa_bound(const ThresholdMatrix& a) {
    Vector b(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) b(static_cast<Eigen::Index>(i)) = 1.0 / (1.0 + a(i, i));
    return b;
}

/// Entry (i, j), i != j, bounds PMI_ij (change in i, decision j) by 1/A_ji.
/// The diagonal is zero.
inline Matrix pmi_bound(const ThresholdMatrix& a) {
    const auto n = a.size();
    Matrix b = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) b(i, j) = 1.0 / a(j, i);
    return b;
}

enum class KlSource { closed_form, monte_carlo };

inline std::string_view to_string(KlSource s) { return s == KlSource::closed_form ? "closed-form" : "mc-estimated"; }

/// Ergodic KL numbers (J_bar, J*_bar) for every stream and grid point.
struct KlTable {
    std::vector<std::vector<KlPair>> values; ///< values[i][g]
    KlSource source{KlSource::closed_form};
};

/// iota_ii = J_bar_i(theta); iota_ij = J_bar_i(theta) - max_{v in grid_j} J*_bar_j(v),
/// for a post-change parameter with ergodic information `jbar` in stream i.
inline Vector iota_for(const KlTable& kl, std::size_t i, double jbar) {
    const auto n = kl.values.size();
    if (i >= n) throw input_error("iota: stream index out of range");
    Vector out(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        double v = jbar;
        if (j != i) {
            double best = neg_inf;
            for (const auto& p : kl.values[j]) best = std::max(best, p.j_star);
            v -= best;
        }
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw numeric_error("information number iota_" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                " = " + std::to_string(v) + " is not positive");
        }
        out(static_cast<Eigen::Index>(j)) = v;
    }
    return out;
}

/// iota at grid point `theta_index` of stream i.
inline Vector iota(const KlTable& kl, std::size_t i, std::size_t theta_index) {
    if (i >= kl.values.size() || theta_index >= kl.values[i].size()) throw input_error("iota: index out of range");
    return iota_for(kl, i, kl.values[i][theta_index].j);
}

/// b = max_j |log beta_ji| / iota_ij, raised to r.
inline double lower_bound_delay(const ErrorMatrix& beta, std::size_t i, const Vector& iota_vec, double r = 1.0) {
    double b = neg_inf;
    for (std::size_t j = 0; j < beta.size(); ++j) {
        b = std::max(b, std::abs(std::log(beta(j, i))) / iota_vec(static_cast<Eigen::Index>(j)));
    }
    return std::pow(b, r);
}

/// B = max_j log A_ij / iota_ij, raised to r.
inline double upper_bound_delay(const ThresholdMatrix& a, std::size_t i, const Vector& iota_vec, double r = 1.0) {
    double b = neg_inf;
    for (std::size_t j = 0; j < a.size(); ++j) b = std::max(b, a.log_at(i, j) / iota_vec(static_cast<Eigen::Index>(j)));
    return std::pow(b, r);
}

/// First-order delay approximation max_j |log beta_ji| / iota_ij(theta).
inline double theoretic_add(const ErrorMatrix& beta, const KlTable& kl, std::size_t i, std::size_t theta_index) {
    return lower_bound_delay(beta, i, iota(kl, i, theta_index), 1.0);
}

/// Same, for an off-grid parameter with ergodic information `jbar`.
inline double theoretic_add_for(const ErrorMatrix& beta, const KlTable& kl, std::size_t i, double jbar) {
    return lower_bound_delay(beta, i, iota_for(kl, i, jbar), 1.0);
}

struct BoundRow {
    std::size_t stream;
    std::size_t theta_index;
    Vector iota;
    double b_r;
    double B_r;
};

struct BoundReport {
    std::vector<BoundRow> rows;
    KlSource kl_source{KlSource::closed_form};
    double r{1.0};
};

inline BoundReport bound_report(const ErrorMatrix& beta, const ThresholdMatrix& a, const KlTable& kl, double r = 1.0) {
    if (beta.size() != a.size() || kl.values.size() != a.size()) throw input_error("bound_report: size mismatch");
    BoundReport rep;
    rep.kl_source = kl.source;
    rep.r = r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t g = 0; g < kl.values[i].size(); ++g) {
            Vector io = iota(kl, i, g);
            rep.rows.push_back({i, g, io, lower_bound_delay(beta, i, io, r), upper_bound_delay(a, i, io, r)});
        }
    }
    return rep;
}

inline void write_csv(std::ostream& os, const BoundReport& rep) {
    const std::size_t n = rep.rows.empty() ? 0 : static_cast<std::size_t>(rep.rows.front().iota.size());
    os << "i,theta_index";
    for (std::size_t j = 0; j < n; ++j) os << ",iota_" << j + 1;
    os << ",b_r,B_r,kl_source\n";
    const auto prec = os.precision(12);
    for (const auto& row : rep.rows) {
        os << row.stream + 1 << ',' << row.theta_index;
        for (Eigen::Index j = 0; j < row.iota.size(); ++j) os << ',' << row.iota(j);
        os << ',' << row.b_r << ',' << row.B_r << ',' << to_string(rep.kl_source) << '\n';
    }
    os.precision(prec);
}

} // namespace msdi
