// msdi: multistream change detection-identification command line tool.
//
//   msdi simulate      trial batteries for a JSON config
//   msdi characterize  epidemic operating-characteristics rows
//   msdi detect        offline detection over a hospitalization CSV
//   msdi kl            Monte Carlo KL numbers
//   msdi thresholds    threshold matrix, bounds and hyperparameters
//
// Exit codes: 0 decision or clean no-decision, 2 input error, 3 numerical error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "msdi/msdi.hpp"

using namespace msdi;
using nlohmann::json;

namespace {

Point to_point(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

int cmd_simulate(const std::string& config_path, std::size_t stream, const std::vector<double>& theta,
                 const std::string& nu, std::size_t trials, std::size_t horizon, std::uint64_t seed, unsigned threads,
                 const std::string& records_out, const std::string& epidemic_csv, std::size_t outbreak_region,
                 std::size_t outbreak_day, double q, std::size_t days) {
    if (!epidemic_csv.empty()) {
        apps::SyntheticSpec sp;
        sp.seed = seed;
        sp.q = q;
        sp.days = days;
        sp.outbreak_day = outbreak_day;
        if (outbreak_region > 0) sp.outbreak_region = outbreak_region - 1;
        const auto series = apps::synthesize(sp);
        std::ofstream f(epidemic_csv);
        if (!f) throw input_error("cannot write '" + epidemic_csv + "'");
        apps::write_series_csv(f, series);
        json caps = json::object();
        for (const auto& s : series) caps[s.region] = s.capacity;
        std::ofstream c(std::filesystem::path(epidemic_csv).replace_extension(".capacity.json"));
        c << caps.dump(2) << '\n';
        std::cout << "wrote " << epidemic_csv << '\n';
        return 0;
    }
    if (config_path.empty()) throw input_error("--config is required");
    const auto rc = resolve(load_config(config_path));
    if (stream < 1 || stream > rc.models.size()) throw input_error("--stream out of range");
    Scenario sc{rc.models, rc.grids, rc.rho, rc.thresholds, rc.options, rc.initial_states};
    TrialPlan plan;
    plan.trials = trials;
    plan.horizon = horizon;
    plan.seed = seed;
    plan.threads = threads;
    plan.stream = stream - 1;
    if (nu == "inf" || nu == "none") plan.change = ChangeTime::none;
    else if (nu == "geometric") {
        plan.change = ChangeTime::geometric;
        plan.geometric_rho = rc.rho;
    } else {
        plan.change = ChangeTime::fixed;
        try {
            plan.nu = std::stoul(nu);
        } catch (const std::exception&) {
            throw input_error("--nu must be an integer, 'inf' or 'geometric'");
        }
    }
    if (plan.change != ChangeTime::none) {
        if (theta.empty()) throw input_error("--theta is required for a post-change plan");
        plan.theta = to_point(theta);
    }
    const auto recs = run_trials(plan, sc);
    if (!records_out.empty()) {
        std::ofstream f(records_out);
        if (!f) throw input_error("cannot write '" + records_out + "'");
        f << "trial,T,d,nu,censored\n";
        for (std::size_t t = 0; t < recs.size(); ++t) {
            f << t << ',' << recs[t].T << ',' << recs[t].d << ',';
            if (recs[t].nu == never) f << "inf";
            else f << recs[t].nu;
            f << ',' << recs[t].censored << '\n';
        }
    }
    json out;
    std::size_t censored = 0;
    for (const auto& r : recs) censored += r.censored;
    out["trials"] = trials;
    out["censored"] = censored;
    out["rho"] = rc.rho;
    if (plan.change == ChangeTime::none) {
        json pfa = json::array();
        for (std::size_t i = 0; i < rc.models.size(); ++i) pfa.push_back(to_json(bayes_pfa(recs, rc.rho, i)));
        out["bayes_pfa"] = pfa;
        const Vector pb = pfa_bound(rc.thresholds);
        out["pfa_bound"] = std::vector<double>(pb.data(), pb.data() + pb.size());
        if (rc.hp) out["P_hat"] = to_json(estimate_pfa(recs, *rc.hp, plan.stream));
    } else if (plan.change == ChangeTime::fixed) {
        out["R_hat"] = to_json(estimate_add(recs, plan.nu, plan.stream));
        if (rc.hp) {
            json pc = json::array();
            for (std::size_t j = 0; j < rc.models.size(); ++j)
                if (j != plan.stream) pc.push_back({{"j", j + 1}, {"P_check", to_json(estimate_pmi(recs, *rc.hp, j, plan.nu))}});
            out["P_check"] = pc;
        }
    } else {
        json pmi = json::array();
        for (std::size_t j = 0; j < rc.models.size(); ++j)
            if (j != plan.stream) pmi.push_back({{"j", j + 1}, {"pmi", to_json(bayes_pmi_single(recs, j))}});
        out["bayes_pmi"] = pmi;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_characterize(TableConfig c, bool single_grid, bool literal_kl, const std::string& format) {
    if (single_grid) c.grid_q.clear();
    if (literal_kl) c.kl.burn_in = 0;
    const auto oc = operating_characteristics(c);
    if (format == "json") std::cout << to_json(oc).dump(2) << '\n';
    else {
        write_csv_header(std::cout, c.n_streams);
        write_csv_row(std::cout, oc);
    }
    return 0;
}

int cmd_detect(const std::string& csv, const std::string& capacity, const std::string& out_dir,
               const std::string& reference, apps::DetectOptions opt, const std::vector<double>& p_star) {
    const auto caps = apps::load_capacities(capacity);
    const auto series = apps::ingest_csv(csv, caps);
    opt.p_star = p_star;
    const auto res = apps::detect_offline(series, opt);
    std::optional<apps::Date> ref;
    if (!reference.empty()) ref = apps::parse_date(reference);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        apps::emit_report(res, series, out_dir, {}, ref);
    }
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << apps::decision_json(res, ref).dump(2) << '\n';
    return 0;
}

int cmd_kl(const std::string& config_path, std::size_t stream, const std::vector<double>& theta, const std::string& regime,
           KlOptions opt) {
    if (config_path.empty()) throw input_error("--config is required");
    const auto rc = resolve(load_config(config_path));
    if (stream < 1 || stream > rc.models.size()) throw input_error("--stream out of range");
    const auto& m = rc.models[stream - 1];
    std::vector<Point> thetas;
    if (theta.empty()) thetas = rc.grids[stream - 1].points();
    else thetas.push_back(to_point(theta));
    json out = json::array();
    for (const auto& th : thetas) {
        json row;
        row["theta"] = std::vector<double>(th.data(), th.data() + th.size());
        for (auto reg : {KlRegime::post, KlRegime::pre}) {
            const char* name = reg == KlRegime::post ? "J_bar" : "J_star_bar";
            if (regime != "both" && regime != (reg == KlRegime::post ? "post" : "pre")) continue;
            const auto e = estimate_kl(m, th, reg, opt, rc.initial_states.empty() ? std::nullopt
                                                                                : std::optional(rc.initial_states[stream - 1]));
            row[name] = {{"value", e.value}, {"se", e.se}, {"samples", e.samples}};
        }
        if (auto cf = closed_form_kl(m, th); cf && !cf->needs_state_moment) {
            row["closed_form"] = {{"J_bar", cf->base.j}, {"J_star_bar", cf->base.j_star}};
        }
        out.push_back(row);
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_thresholds(const std::string& config_path, double epsilon, std::size_t n, double k_check, bool bounds,
                   KlOptions kl) {
    ResolvedConfig rc;
    if (!config_path.empty()) rc = resolve(load_config(config_path));
    else {
        rc.beta = ErrorMatrix::harmonic(n, epsilon);
        rc.hp = hyperparams_from_beta(*rc.beta, k_check);
        rc.rho = rc.hp->rho_opt;
        rc.thresholds = thresholds_optimal(*rc.beta, *rc.hp);
    }
    json out;
    out["provenance"] = std::string(to_string(rc.thresholds.provenance()));
    out["rho"] = rc.rho;
    out["A"] = matrix_to_json(rc.thresholds.entries());
    out["log_A"] = matrix_to_json(rc.thresholds.log_entries());
    const Vector pb = pfa_bound(rc.thresholds);
    out["pfa_bound"] = std::vector<double>(pb.data(), pb.data() + pb.size());
    out["pmi_bound"] = matrix_to_json(pmi_bound(rc.thresholds));
    if (rc.hp) {
        out["hyperparams"] = {{"rho_beta", rc.hp->rho_beta}, {"m_star", rc.hp->m_star}, {"k_star", rc.hp->k_star},
                              {"k_check", rc.hp->k_check}, {"rho_opt", rc.hp->rho_opt}, {"r", rc.hp->r}};
        out["trace_beta"] = rc.beta->trace();
    }
    std::cout << out.dump(2) << '\n';
    if (bounds) {
        if (!rc.beta) throw input_error("--bounds needs a beta_matrix");
        if (rc.models.empty()) throw input_error("--bounds needs a config with models and grids");
        const auto tab = kl_table(rc.models, rc.grids, kl);
        write_csv(std::cout, bound_report(*rc.beta, rc.thresholds, tab, rc.hp->r));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multistream sequential change detection and identification"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run a trial battery for a JSON config");
    std::string config, nu = "0", records_out, epidemic_csv;
    std::size_t stream = 1, trials = 1000, horizon = 1000, outbreak_region = 0, outbreak_day = 20, days = 61;
    std::vector<double> theta;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double q = 1.2;
    sim->add_option("-c,--config", config, "JSON config file");
    sim->add_option("--stream", stream, "Affected stream (1-based)");
    sim->add_option("--theta", theta, "Post-change parameter")->delimiter(',');
    sim->add_option("--nu", nu, "Change point: integer, 'inf' or 'geometric'");
    sim->add_option("-M,--trials", trials, "Number of trials");
    sim->add_option("--horizon", horizon, "Samples per trial before censoring");
    sim->add_option("--seed", seed, "Base seed");
    sim->add_option("--threads", threads, "Worker threads");
    sim->add_option("--records", records_out, "Write per-trial records to CSV");
    sim->add_option("--epidemic-csv", epidemic_csv, "Instead: write a synthetic regional dataset to this CSV");
    sim->add_option("--outbreak-region", outbreak_region, "Synthetic outbreak region (1-based, 0 = none)");
    sim->add_option("--outbreak-day", outbreak_day, "Last pre-change day of the synthetic outbreak");
    sim->add_option("--q", q, "Synthetic outbreak ratio theta/p*");
    sim->add_option("--days", days, "Synthetic series length");

    // characterize
    auto* ch = app.add_subcommand("characterize", "Epidemic operating-characteristics row");
    TableConfig tc;
    bool single_grid = true, literal_kl = false;
    std::string format = "csv";
    std::string grid_mode = "single";
    ch->add_option("--epsilon", tc.epsilon, "beta_ij = epsilon/(i+j)");
    ch->add_option("--k-check", tc.k_check, "k* / m* ratio");
    ch->add_option("--q", tc.q, "Post-change ratio theta/p*_N");
    ch->add_option("--law", tc.law, "p*_i = 1/(law+i)");
    ch->add_option("--streams", tc.n_streams, "Number of streams");
    ch->add_option("-M,--trials", tc.trials, "Post-change trials");
    ch->add_option("--pfa-trials", tc.pfa_trials, "No-change trials (default: same as --trials)");
    ch->add_option("--seed", tc.seed, "Base seed");
    ch->add_option("--threads", tc.threads, "Worker threads");
    ch->add_option("--horizon", tc.horizon, "Post-change horizon (0: 50 x theory)");
    ch->add_option("--grid", grid_mode, "'single' ({q p*}) or 'wide' (1.05..1.5 p*)")->check(CLI::IsMember({"single", "wide"}));
    ch->add_option("--kl-samples", tc.kl.samples, "Path length K for KL estimation");
    ch->add_option("--burn-in", tc.kl.burn_in, "KL burn-in steps");
    ch->add_flag("--no-burn-in", literal_kl, "Average from the first step (no burn-in)");
    ch->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    // detect
    auto* dt = app.add_subcommand("detect", "Offline detection on a hospitalization CSV");
    std::string csv, capacity, out_dir, reference;
    apps::DetectOptions dopt;
    std::vector<double> p_star;
    dt->add_option("--csv", csv, "Input CSV (date,region,hospitalized)")->required();
    dt->add_option("--capacity", capacity, "JSON map region -> beds")->required();
    dt->add_option("-o,--out", out_dir, "Directory for decision.json, trace.csv, report.svg");
    dt->add_option("--reference-date", reference, "Reference date marked in the report");
    dt->add_option("--epsilon", dopt.epsilon, "beta_ij = epsilon/(i+j)");
    dt->add_option("--k-check", dopt.k_check, "k* / m* ratio");
    dt->add_option("--grid-q", dopt.grid_q, "Grid multipliers of p*")->delimiter(',');
    dt->add_option("--p-star", p_star, "Pre-change p* per region (default: calibrate)")->delimiter(',');
    dt->add_option("--calibration-window", dopt.calibration_window, "Days used for p* calibration");

    // kl
    auto* kl = app.add_subcommand("kl", "Monte Carlo KL numbers for one stream");
    KlOptions klo;
    std::string regime = "both";
    kl->add_option("-c,--config", config, "JSON config file")->required();
    kl->add_option("--stream", stream, "Stream (1-based)");
    kl->add_option("--theta", theta, "Parameter (default: every grid point)")->delimiter(',');
    kl->add_option("--regime", regime, "post, pre or both")->check(CLI::IsMember({"post", "pre", "both"}));
    kl->add_option("-K,--samples", klo.samples, "Path length");
    kl->add_option("--burn-in", klo.burn_in, "Discarded initial steps");
    kl->add_option("--seed", klo.seed, "Seed");

    // thresholds
    auto* th = app.add_subcommand("thresholds", "Threshold matrix and bounds");
    double epsilon = 0.3, k_check = 2.0;
    std::size_t n = 5;
    bool bounds = false;
    KlOptions tko;
    th->add_option("-c,--config", config, "JSON config file");
    th->add_option("--epsilon", epsilon, "Without config: beta_ij = epsilon/(i+j)");
    th->add_option("--streams", n, "Without config: number of streams");
    th->add_option("--k-check", k_check, "Without config: k* / m* ratio");
    th->add_flag("--bounds", bounds, "Also print the bound report (needs config)");
    th->add_option("-K,--kl-samples", tko.samples, "KL path length for MC-estimated entries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sim)
            return cmd_simulate(config, stream, theta, nu, trials, horizon, seed, threads, records_out, epidemic_csv,
                                outbreak_region, outbreak_day, q, days);
        if (*ch) {
            single_grid = grid_mode == "single";
            if (!single_grid) tc.grid_q = {1.05, 1.1, 1.15, 1.2, 1.25, 1.3, 1.35, 1.4, 1.45, 1.5};
            return cmd_characterize(tc, single_grid, literal_kl, format);
        }
        if (*dt) return cmd_detect(csv, capacity, out_dir, reference, dopt, p_star);
        if (*kl) return cmd_kl(config, stream, theta, regime, klo);
        if (*th) return cmd_thresholds(config, epsilon, n, k_check, bounds, tko);
    } catch (const input_error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
