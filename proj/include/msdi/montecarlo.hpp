#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "msdi/core.hpp"
#include "msdi/detector.hpp"
#include "msdi/models.hpp"
#include "msdi/random.hpp"
#include "msdi/thresholds.hpp"

/**
 * @file
 * Monte Carlo harness: trial batteries, operating-characteristic
 * estimators, KL estimation by path averaging and the epidemic table runs.
 */

namespace msdi {

inline constexpr std::size_t never = std::numeric_limits<std::size_t>::max();

/// How the change point of each trial is chosen.
enum class ChangeTime { fixed, none, geometric };

struct TrialPlan {
    std::size_t trials{1};
    ChangeTime change{ChangeTime::fixed};
    std::size_t nu{0};          ///< fixed change point; observations nu+1, ... are post-change
    double geometric_rho{0.1};  ///< prior used when change == geometric
    std::size_t stream{0};      ///< affected stream, 0-based
    Point theta;                ///< post-change parameter of the affected stream
    std::size_t horizon{1000};
    std::uint64_t seed{1};
    unsigned threads{1};
};

struct TrialRecord {
    std::size_t T{0};
    std::size_t d{0};     ///< 1-based decision; 0 when censored
    std::size_t nu{never};
    bool censored{false};
};

/// Everything a trial battery needs besides the plan.
struct Scenario {
    std::vector<ModelSpec> models;
    std::vector<ParameterGrid> grids;
    double rho{};
    ThresholdMatrix thresholds;
    DetectorOptions options{};
    std::vector<StreamState> initial_states{};
};

/// One replication: simulate all streams (the affected one switching
/// regime after nu) and run the detector until it stops or hits the horizon.
inline TrialRecord run_trial(const TrialPlan& plan, const Scenario& sc, std::size_t index) {
    RandomSource rng(mix_seed(plan.seed, index));
    TrialRecord rec;
    switch (plan.change) {
    case ChangeTime::fixed: rec.nu = plan.nu; break;
    case ChangeTime::none: rec.nu = never; break;
    case ChangeTime::geometric: rec.nu = static_cast<std::size_t>(rng.geometric(plan.geometric_rho)); break;
    }
    Detector det(sc.models, sc.grids, sc.rho, sc.options, sc.initial_states);
    const auto ns = sc.models.size();
    std::vector<StreamState> x(ns);
    for (std::size_t i = 0; i < ns; ++i) x[i] = sc.initial_states.empty() ? sc.models[i].initial_state() : sc.initial_states[i];
    const Regime pre = Regime::pre();
    const Regime post = plan.change == ChangeTime::none ? pre : Regime::post(plan.theta);
    std::vector<Point> obs(ns);
    ObservationSource source = [&](std::size_t n) -> std::optional<std::vector<Point>> {
        for (std::size_t i = 0; i < ns; ++i) {
            const bool changed = i == plan.stream && rec.nu != never && n > rec.nu;
            auto [y, next] = simulate_step(sc.models[i], changed ? post : pre, x[i], rng);
            obs[i] = std::move(y);
            x[i] = std::move(next);
        }
        return obs;
    };
    auto res = run_to_decision(det, sc.thresholds, source, plan.horizon);
    rec.T = res.outcome.time;
    rec.censored = !res.outcome.stopped;
    rec.d = res.outcome.stopped ? res.outcome.stream : 0;
    return rec;
}

/// M independent replications; trial t always uses seed mix(seed, t), so the
/// records do not depend on the thread count.
inline std::vector<TrialRecord> run_trials(const TrialPlan& plan, const Scenario& sc) {
    if (plan.trials == 0) throw input_error("trial count must be >= 1");
    if (plan.horizon == 0) throw input_error("horizon must be >= 1");
    if (plan.stream >= sc.models.size()) throw input_error("affected stream out of range");
    if (plan.change != ChangeTime::none && plan.theta.size() != sc.models[plan.stream].parameter_dim()) {
        throw input_error("post-change parameter has the wrong dimension");
    }
    std::vector<TrialRecord> out(plan.trials);
    const unsigned nt = std::max(1u, std::min<unsigned>(plan.threads, static_cast<unsigned>(plan.trials)));
    if (nt == 1) {
        for (std::size_t t = 0; t < plan.trials; ++t) out[t] = run_trial(plan, sc, t);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nt);
    for (unsigned w = 0; w < nt; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t t = w; t < plan.trials; t += nt) out[t] = run_trial(plan, sc, t);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct Estimate {
    double value{0.0};
    double se{0.0};
    std::size_t count{0};   ///< effective sample size behind se
    std::size_t argmax{0};  ///< maximizing window start, where applicable
    bool defined{true};
};

/// R = sum (T - nu) 1{T > nu} 1{d = stream} / sum 1{T > nu}; censored trials
/// count with T = horizon regardless of d.
inline Estimate estimate_add(const std::vector<TrialRecord>& recs, std::size_t nu, std::size_t stream) {
    double s = 0.0, s2 = 0.0;
    std::size_t den = 0;
    for (const auto& r : recs) {
        if (r.T <= nu) continue;
        ++den;
        const double v = (r.censored || r.d == stream + 1) ? static_cast<double>(r.T - nu) : 0.0;
        s += v;
        s2 += v * v;
    }
    if (den == 0) throw numeric_error("estimate_add: no trial stopped after the change point");
    const double mean = s / static_cast<double>(den);
    const double var = den > 1 ? (s2 - static_cast<double>(den) * mean * mean) / static_cast<double>(den - 1) : 0.0;
    return {mean, std::sqrt(std::max(var, 0.0) / static_cast<double>(den)), den, 0, true};
}

namespace detail {
inline Estimate binomial_estimate(std::size_t num, std::size_t den, std::size_t arg) {
    const double p = static_cast<double>(num) / static_cast<double>(den);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(den)), den, arg, true};
}
} // namespace detail

/// max over l in [1, k* - m*] of sum 1{l <= T < l + m*, d = stream} / sum 1{T >= l}.
inline Estimate estimate_pfa(const std::vector<TrialRecord>& recs, const Hyperparams& hp, std::size_t stream) {
    Estimate best{0.0, 0.0, 0, 0, false};
    for (std::size_t l = 1; l + hp.m_star <= hp.k_star; ++l) {
        std::size_t num = 0, den = 0;
        for (const auto& r : recs) {
            if (r.T < l) continue;
            ++den;
            if (!r.censored && r.T < l + hp.m_star && r.d == stream + 1) ++num;
        }
        if (den == 0) continue;
        auto e = detail::binomial_estimate(num, den, l);
        if (!best.defined || e.value > best.value) best = e;
    }
    if (!best.defined) best.value = 0.0;
    return best;
}

/// max over l in (nu, nu + k*] of sum 1{T > l, d = j} / sum 1{T > l}.
inline Estimate estimate_pmi(const std::vector<TrialRecord>& recs, const Hyperparams& hp, std::size_t j,
                             std::size_t nu) {
    Estimate best{0.0, 0.0, 0, 0, false};
    for (std::size_t l = nu + 1; l <= nu + hp.k_star; ++l) {
        std::size_t num = 0, den = 0;
        for (const auto& r : recs) {
            if (r.T <= l) continue;
            ++den;
            if (!r.censored && r.d == j + 1) ++num;
        }
        if (den == 0) continue;
        auto e = detail::binomial_estimate(num, den, l);
        if (!best.defined || e.value > best.value) best = e;
    }
    if (!best.defined) best.value = 0.0;
    return best;
}

namespace detail {
inline Estimate mean_estimate(const std::vector<double>& v) {
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
        s += x;
        s2 += x * x;
    }
    const double n = static_cast<double>(v.size());
    const double mean = s / n;
    const double var = v.size() > 1 ? (s2 - n * mean * mean) / (n - 1.0) : 0.0;
    return {mean, std::sqrt(std::max(var, 0.0) / n), v.size(), 0, true};
}
} // namespace detail

/// Bayesian false alarm probability sum_k pi_k P*(T <= k, d = i) estimated
/// from no-change records as the mean of 1{d = i} (1 - rho)^T.  A censored
/// trial might still alarm in stream i later, so it is charged (1 - rho)^H.
inline Estimate bayes_pfa(const std::vector<TrialRecord>& recs, double rho, std::size_t stream) {
    if (recs.empty()) throw input_error("bayes_pfa: no records");
    std::vector<double> v;
    v.reserve(recs.size());
    const double l1m = std::log1p(-rho);
    for (const auto& r : recs) {
        if (r.censored || r.d == stream + 1) v.push_back(std::exp(static_cast<double>(r.T) * l1m));
        else v.push_back(0.0);
    }
    return detail::mean_estimate(v);
}

/// P(T > nu, d = j) from records whose change points were drawn from the
/// prior; censored trials after the change are charged as misidentified.
inline Estimate bayes_pmi_single(const std::vector<TrialRecord>& recs, std::size_t j) {
    if (recs.empty()) throw input_error("bayes_pmi: no records");
    std::vector<double> v;
    v.reserve(recs.size());
    for (const auto& r : recs) v.push_back(r.T > r.nu && (r.censored || r.d == j + 1) ? 1.0 : 0.0);
    return detail::mean_estimate(v);
}

/// PMI_ij = sum_k pi_k sup_theta P_{i,k,theta}(T > k, d = j), with the sup
/// taken over the grid of stream i.  Returns the estimate at the maximizing
/// grid point.
inline Estimate bayes_pmi(const Scenario& sc, std::size_t i, std::size_t j, std::size_t trials, std::size_t horizon,
                          std::uint64_t seed, unsigned threads = 1) {
    Estimate best{0.0, 0.0, 0, 0, false};
    for (std::size_t g = 0; g < sc.grids.at(i).size(); ++g) {
        TrialPlan plan;
        plan.trials = trials;
        plan.change = ChangeTime::geometric;
        plan.geometric_rho = sc.rho;
        plan.stream = i;
        plan.theta = sc.grids[i][g];
        plan.horizon = horizon;
        plan.seed = mix_seed(seed, g);
        plan.threads = threads;
        auto e = bayes_pmi_single(run_trials(plan, sc), j);
        e.argmax = g;
        if (!best.defined || e.value > best.value) best = e;
    }
    return best;
}

// ---- KL estimation ------------------------------------------------------

enum class KlRegime { pre, post };

struct KlOptions {
    std::size_t samples{100000};
    std::size_t burn_in{1000};
    std::size_t batches{50};
    std::uint64_t seed{1};
};

struct KlEstimate {
    double value{};
    double se{};
    std::size_t samples{};
};

/// Path average of J(theta, X_n) along a post-change path (post) or of
/// J*(theta, X_n) along a pre-change path (pre), after the burn-in; the
/// standard error comes from batch means.
inline KlEstimate estimate_kl(const ModelSpec& model, const Point& theta, KlRegime regime, const KlOptions& opt,
                              std::optional<StreamState> start = std::nullopt) {
    if (opt.samples == 0) throw input_error("estimate_kl: need at least one sample");
    if (!stationarity_check(model, theta)) throw numeric_error("estimate_kl: parameter is not ergodic");
    RandomSource rng(opt.seed);
    StreamState x = start ? *start : model.initial_state();
    const Regime sim = regime == KlRegime::post ? Regime::post(theta) : Regime::pre();
    for (std::size_t t = 0; t < opt.burn_in; ++t) x = simulate_step(model, sim, x, rng).second;
    const std::size_t nb = std::max<std::size_t>(1, std::min(opt.batches, opt.samples));
    const std::size_t per = opt.samples / nb;
    std::vector<double> means;
    double total = 0.0;
    double batch = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t t = 0; t < opt.samples; ++t) {
        x = simulate_step(model, sim, x, rng).second;
        const auto kl = conditional_information(model, theta, x);
        const double v = regime == KlRegime::post ? kl.j : kl.j_star;
        total += v;
        batch += v;
        if (++in_batch == per && means.size() + 1 < nb) {
            means.push_back(batch / static_cast<double>(per));
            batch = 0.0;
            in_batch = 0;
        }
    }
    if (in_batch > 0) means.push_back(batch / static_cast<double>(in_batch));
    KlEstimate out{total / static_cast<double>(opt.samples), 0.0, opt.samples};
    if (means.size() > 1) out.se = detail::mean_estimate(means).se;
    return out;
}

/// Ergodic KL table over all grids: closed forms where available, path
/// averages otherwise.
inline KlTable kl_table(const std::vector<ModelSpec>& models, const std::vector<ParameterGrid>& grids,
                        const KlOptions& opt, bool force_mc = false) {
    KlTable tab;
    tab.values.resize(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t g = 0; g < grids[i].size(); ++g) {
            const Point& th = grids[i][g];
            std::optional<ClosedFormKl> cf;
            if (!force_mc) cf = closed_form_kl(models[i], th);
            if (cf && !cf->needs_state_moment) {
                tab.values[i].push_back(cf->base);
                continue;
            }
            tab.source = KlSource::monte_carlo;
            KlOptions o = opt;
            o.seed = mix_seed(opt.seed, 2 * (i * 1000003 + g));
            const double j = estimate_kl(models[i], th, KlRegime::post, o).value;
            o.seed = mix_seed(opt.seed, 2 * (i * 1000003 + g) + 1);
            const double js = estimate_kl(models[i], th, KlRegime::pre, o).value;
            tab.values[i].push_back({j, js});
        }
    }
    return tab;
}

// ---- epidemic tables ----------------------------------------------------

/// One row of the epidemic operating-characteristics tables: N streams with
/// p*_i = 1/(law + i), V_i = 0.5 (i + 1) 1e4, X_0 = 1, beta_ij = eps/(i + j),
/// optimal thresholds, and a change at nu = 0 in stream N to q p*_N.
struct TableConfig {
    double epsilon{0.3};
    double k_check{2.0};
    double q{1.2};
    double law{100.0};
    std::size_t n_streams{5};
    /// Grid multipliers q' (theta = q' p*_i); empty means the singleton {q}.
    std::vector<double> grid_q{};
    KlOptions kl{};
    std::size_t trials{10000};
    std::size_t pfa_trials{0}; ///< defaults to trials
    std::uint64_t seed{20240601};
    unsigned threads{1};
    std::size_t horizon{0};    ///< 0: 50 * theoretic delay (at least k* + 1)
};

struct OperatingCharacteristics {
    TableConfig config;
    Hyperparams hp;
    std::vector<Estimate> p_check; ///< misidentification, streams 1..N-1
    Estimate p_hat;                ///< false alarm, stream N
    Estimate r_hat;                ///< expected delay
    double theory_r{};
    std::size_t censored_post{0};
    std::size_t censored_pre{0};
    std::size_t horizon{0};
};

inline double epidemic_p_star(double law, std::size_t i) { return 1.0 / (law + static_cast<double>(i + 1)); }
inline double epidemic_scale(std::size_t i) { return 0.5 * static_cast<double>(i + 2) * 1e4; }

inline std::vector<ModelSpec> epidemic_models(const TableConfig& c) {
    std::vector<ModelSpec> m;
    for (std::size_t i = 0; i < c.n_streams; ++i) m.push_back(ModelSpec::epidemic_gaussian(epidemic_p_star(c.law, i), epidemic_scale(i), 1.0));
    return m;
}

inline std::vector<ParameterGrid> epidemic_grids(const TableConfig& c) {
    std::vector<ParameterGrid> g;
    const std::vector<double> qs = c.grid_q.empty() ? std::vector<double>{c.q} : c.grid_q;
    for (std::size_t i = 0; i < c.n_streams; ++i) {
        std::vector<Point> pts;
        for (double q : qs) pts.push_back(Point::Constant(1, q * epidemic_p_star(c.law, i)));
        g.emplace_back(std::move(pts));
    }
    return g;
}

/// Ergodic information of the table's true post-change parameter and the
/// KL table over the grids.
struct TableTheory {
    KlTable table;
    double j_true{};
    double theory_r{};
};

inline TableTheory table_theory(const TableConfig& c) {
    const auto models = epidemic_models(c);
    const auto grids = epidemic_grids(c);
    const ErrorMatrix beta = ErrorMatrix::harmonic(c.n_streams, c.epsilon);
    TableTheory th;
    th.table = kl_table(models, grids, c.kl);
    const std::size_t nn = c.n_streams - 1;
    KlOptions o = c.kl;
    o.seed = mix_seed(c.kl.seed, 0xfeed);
    th.j_true = estimate_kl(models[nn], Point::Constant(1, c.q * epidemic_p_star(c.law, nn)), KlRegime::post, o).value;
    th.theory_r = theoretic_add_for(beta, th.table, nn, th.j_true);
    return th;
}

inline OperatingCharacteristics operating_characteristics(const TableConfig& c) {
    if (c.n_streams < 2) throw input_error("table runs need at least two streams");
    OperatingCharacteristics oc;
    oc.config = c;
    const ErrorMatrix beta = ErrorMatrix::harmonic(c.n_streams, c.epsilon);
    oc.hp = hyperparams_from_beta(beta, c.k_check);
    Scenario sc{epidemic_models(c), epidemic_grids(c), oc.hp.rho_opt, thresholds_optimal(beta, oc.hp)};
    oc.theory_r = table_theory(c).theory_r;

    const std::size_t nn = c.n_streams - 1;
    oc.horizon = c.horizon ? c.horizon
                           : std::max<std::size_t>(oc.hp.k_star + 1,
                                                   static_cast<std::size_t>(std::ceil(50.0 * oc.theory_r)));
    TrialPlan post;
    post.trials = c.trials;
    post.change = ChangeTime::fixed;
    post.nu = 0;
    post.stream = nn;
    post.theta = Point::Constant(1, c.q * epidemic_p_star(c.law, nn));
    post.horizon = oc.horizon;
    post.seed = mix_seed(c.seed, 1);
    post.threads = c.threads;
    const auto recs = run_trials(post, sc);
    for (const auto& r : recs) oc.censored_post += r.censored;
    oc.r_hat = estimate_add(recs, 0, nn);
    for (std::size_t j = 0; j < nn; ++j) oc.p_check.push_back(estimate_pmi(recs, oc.hp, j, 0));

    TrialPlan pre = post;
    pre.trials = c.pfa_trials ? c.pfa_trials : c.trials;
    pre.change = ChangeTime::none;
    pre.horizon = oc.hp.k_star;
    pre.seed = mix_seed(c.seed, 2);
    const auto recs0 = run_trials(pre, sc);
    for (const auto& r : recs0) oc.censored_pre += r.censored;
    oc.p_hat = estimate_pfa(recs0, oc.hp, nn);
    return oc;
}

inline void write_csv_header(std::ostream& os, std::size_t n_streams) {
    os << "epsilon,k_check,q";
    for (std::size_t j = 1; j < n_streams; ++j) os << ",P_check_" << j;
    os << ",P_hat_N,R_hat,theory_R";
    for (std::size_t j = 1; j < n_streams; ++j) os << ",se_P_check_" << j;
    os << ",se_P_hat_N,se_R_hat\n";
}

inline void write_csv_row(std::ostream& os, const OperatingCharacteristics& oc) {
    const auto prec = os.precision(6);
    os << oc.config.epsilon << ',' << oc.config.k_check << ',' << oc.config.q;
    for (const auto& e : oc.p_check) os << ',' << e.value;
    os << ',' << oc.p_hat.value << ',' << oc.r_hat.value << ',' << oc.theory_r;
    for (const auto& e : oc.p_check) os << ',' << e.se;
    os << ',' << oc.p_hat.se << ',' << oc.r_hat.se << '\n';
    os.precision(prec);
}

inline nlohmann::json to_json(const Estimate& e) {
    return {{"value", e.value}, {"se", e.se}, {"count", e.count}, {"defined", e.defined}};
}

inline nlohmann::json to_json(const OperatingCharacteristics& oc) {
    nlohmann::json j;
    j["epsilon"] = oc.config.epsilon;
    j["k_check"] = oc.config.k_check;
    j["q"] = oc.config.q;
    j["law"] = oc.config.law;
    j["n_streams"] = oc.config.n_streams;
    j["grid_q"] = oc.config.grid_q;
    j["seed"] = oc.config.seed;
    j["M"] = oc.config.trials;
    j["M_pfa"] = oc.config.pfa_trials ? oc.config.pfa_trials : oc.config.trials;
    j["horizon"] = oc.horizon;
    j["censored_post"] = oc.censored_post;
    j["censored_pre"] = oc.censored_pre;
    j["hyperparams"] = {{"rho_beta", oc.hp.rho_beta}, {"m_star", oc.hp.m_star}, {"k_star", oc.hp.k_star},
                        {"rho_opt", oc.hp.rho_opt}};
    auto pc = nlohmann::json::array();
    for (const auto& e : oc.p_check) pc.push_back(to_json(e));
    j["P_check"] = pc;
    j["P_hat_N"] = to_json(oc.p_hat);
    j["R_hat"] = to_json(oc.r_hat);
    j["theory_R"] = oc.theory_r;
    j["kl"] = {{"samples", oc.config.kl.samples}, {"burn_in", oc.config.kl.burn_in}};
    return j;
}

// ---- robust risk and moment checks -------------------------------------

struct RiskCell {
    std::size_t stream{};
    std::size_t change_point{};
    std::size_t theta_index{};
    double delay{std::numeric_limits<double>::quiet_NaN()}; ///< NaN marks an empty cell
    double lower_bound{};                                   ///< b_{i,beta}(theta)^r
};

/// max over cells of delay / lower bound; empty cells are skipped.
inline double robust_risk_estimate(const std::vector<RiskCell>& cells) {
    double best = neg_inf;
    for (const auto& c : cells) {
        if (!std::isfinite(c.delay) || !(c.lower_bound > 0.0)) continue;
        best = std::max(best, c.delay / c.lower_bound);
    }
    if (best == neg_inf) throw input_error("robust_risk_estimate: no nonempty cells");
    return best;
}

/// Mean of X_n^2 and its standard error for n = 1..steps over independent
/// paths started at x0 under post-change parameter theta.
inline std::vector<Estimate> second_moment_profile(const ModelSpec& model, const Point& theta, const StreamState& x0,
                                                   std::size_t paths, std::size_t steps, std::uint64_t seed) {
    std::vector<double> s(steps, 0.0), s2(steps, 0.0);
    const Regime reg = Regime::post(theta);
    for (std::size_t p = 0; p < paths; ++p) {
        RandomSource rng(mix_seed(seed, p));
        StreamState x = x0;
        for (std::size_t n = 0; n < steps; ++n) {
            x = simulate_step(model, reg, x, rng).second;
            const double v = x.squaredNorm();
            s[n] += v;
            s2[n] += v * v;
        }
    }
    std::vector<Estimate> out(steps);
    const double m = static_cast<double>(paths);
    for (std::size_t n = 0; n < steps; ++n) {
        const double mean = s[n] / m;
        const double var = paths > 1 ? (s2[n] - m * mean * mean) / (m - 1.0) : 0.0;
        out[n] = {mean, std::sqrt(std::max(var, 0.0) / m), paths, n + 1, true};
    }
    return out;
}

} // namespace msdi
