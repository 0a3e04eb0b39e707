#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msdi/core.hpp"
#include "msdi/detector.hpp"
#include "msdi/models.hpp"
#include "msdi/montecarlo.hpp"
#include "msdi/random.hpp"
#include "msdi/thresholds.hpp"

/**
 * @file
 * Regional surveillance pipeline: hospitalization CSV ingestion, pre-change
 * calibration, offline detection over the historical series, and report
 * emission (decision JSON, statistic trace CSV, SVG plot).
 *
 * For a region with V beds and H_n hospitalized on day n the observed
 * process is X_n = (V - H_n) / V, modelled as an epidemic Gaussian chain
 * with scale V.
 */

namespace msdi::apps {

using Date = std::chrono::sys_days;

inline Date parse_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    // Accept an optional time part ("2020-02-24T18:00:00").
    if (std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) < 3 || (tail != 0 && tail != 'T' && tail != ' ')) {
        throw input_error("unparseable date '" + s + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw input_error("invalid date '" + s + "'");
    return Date(ymd);
}

inline std::string format_date(Date d) {
    const std::chrono::year_month_day ymd(d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

struct RegionSeries {
    std::string region;
    Date start{};
    std::vector<double> hospitalized;
    double capacity{};

    [[nodiscard]] std::size_t size() const noexcept { return hospitalized.size(); }
    [[nodiscard]] Date date(std::size_t n) const { return start + std::chrono::days(static_cast<long>(n)); }
    [[nodiscard]] double x(std::size_t n) const { return (capacity - hospitalized.at(n)) / capacity; }
    [[nodiscard]] std::vector<double> xs() const {
        std::vector<double> out(size());
        for (std::size_t n = 0; n < size(); ++n) out[n] = x(n);
        return out;
    }
};

using CapacityMap = std::map<std::string, double>;

inline CapacityMap load_capacities(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open capacity file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("capacity file: " + std::string(e.what()));
    }
    if (!j.is_object()) throw input_error("capacity file must be a JSON object region -> beds");
    CapacityMap m;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number() || !(it.value().get<double>() > 0)) {
            throw input_error("capacity for '" + it.key() + "' must be a positive number");
        }
        m[it.key()] = it.value().get<double>();
    }
    return m;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        else if (c == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') cur += c;
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(' ');
        const auto e = s.find_last_not_of(' ');
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}
} // namespace detail

/// Reads `date,region,hospitalized` rows (any column order, extra columns
/// ignored).  Every region must have a capacity, consecutive daily dates and
/// the same date range as the others; problems are collected and reported
/// together.
inline std::vector<RegionSeries> ingest_csv(std::istream& in, const CapacityMap& capacity) {
    std::string line;
    if (!std::getline(in, line)) throw input_error("empty CSV");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);
    auto col = [&](const char* name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw input_error(std::string("CSV header lacks column '") + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_date = col("date"), c_region = col("region"), c_h = col("hospitalized");

    std::vector<std::string> errors;
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<Date, double>>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() < header.size()) {
            errors.push_back("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
            continue;
        }
        try {
            const Date d = parse_date(f[c_date]);
            std::size_t used = 0;
            const double h = std::stod(f[c_h], &used);
            if (used != f[c_h].size() || !std::isfinite(h) || h < 0) throw input_error("bad hospitalized count '" + f[c_h] + "'");
            if (!rows.count(f[c_region])) order.push_back(f[c_region]);
            rows[f[c_region]].emplace_back(d, h);
        } catch (const std::exception& e) {
            errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (rows.empty() && errors.empty()) errors.push_back("CSV has no data rows");

    std::vector<RegionSeries> out;
    for (const auto& name : order) {
        const auto cap = capacity.find(name);
        if (cap == capacity.end()) {
            errors.push_back("region '" + name + "' has no capacity");
            continue;
        }
        auto r = rows[name];
        std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        RegionSeries s{name, r.front().first, {}, cap->second};
        bool ok = true;
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k > 0 && r[k].first == r[k - 1].first) {
                errors.push_back("region '" + name + "': duplicate date " + format_date(r[k].first));
                ok = false;
                break;
            }
            if (k > 0 && r[k].first - r[k - 1].first != std::chrono::days(1)) {
                errors.push_back("region '" + name + "': gap after " + format_date(r[k - 1].first));
                ok = false;
                break;
            }
            if (r[k].second > cap->second) {
                errors.push_back("region '" + name + "': hospitalized exceeds capacity on " + format_date(r[k].first));
                ok = false;
                break;
            }
            s.hospitalized.push_back(r[k].second);
        }
        if (ok) out.push_back(std::move(s));
    }
    for (std::size_t k = 1; k < out.size(); ++k) {
        if (out[k].start != out[0].start || out[k].size() != out[0].size()) {
            errors.push_back("region '" + out[k].region + "' covers " + format_date(out[k].start) + ".." +
                             format_date(out[k].date(out[k].size() - 1)) + " but '" + out[0].region + "' covers " +
                             format_date(out[0].start) + ".." + format_date(out[0].date(out[0].size() - 1)));
        }
    }
    if (!errors.empty()) {
        std::string msg = "CSV ingestion failed:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw input_error(msg);
    }
    return out;
}

inline std::vector<RegionSeries> ingest_csv(const std::string& path, const CapacityMap& capacity) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open CSV '" + path + "'");
    return ingest_csv(in, capacity);
}

/// Writes series back in the ingestion format.
inline void write_series_csv(std::ostream& os, const std::vector<RegionSeries>& series) {
    os << "date,region,hospitalized\n";
    const auto prec = os.precision(17);
    for (const auto& s : series)
        for (std::size_t n = 0; n < s.size(); ++n) os << format_date(s.date(n)) << ',' << s.region << ',' << s.hospitalized[n] << '\n';
    os.precision(prec);
}

struct Calibration {
    double p_star{};
    double se{};
    bool clamped{false};
    std::string warning;
};

/// Least-squares drift fit of X_n = (1 - p) X_{n-1} + noise over the first
/// `window` days: p = 1 - sum X_n X_{n-1} / sum X_{n-1}^2, clamped to
/// (1e-6, 1 - 1e-6).
inline Calibration calibrate_pre_change(const RegionSeries& s, std::size_t window) {
    if (window < 2) throw input_error("calibration window must be >= 2 days");
    if (window > s.size()) throw input_error("calibration window exceeds the series length");
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t n = 1; n < window; ++n) {
        sxy += s.x(n) * s.x(n - 1);
        sxx += s.x(n - 1) * s.x(n - 1);
    }
    if (!(sxx > 0.0)) throw numeric_error("region '" + s.region + "': calibration window is identically zero");
    const double slope = sxy / sxx;
    Calibration c;
    c.p_star = 1.0 - slope;
    if (window > 2) {
        double rss = 0.0;
        for (std::size_t n = 1; n < window; ++n) {
            const double e = s.x(n) - slope * s.x(n - 1);
            rss += e * e;
        }
        c.se = std::sqrt(rss / static_cast<double>(window - 2) / sxx);
    }
    constexpr double lo = 1e-6, hi = 1.0 - 1e-6;
    if (c.p_star < lo || c.p_star > hi) {
        c.warning = "region '" + s.region + "': fitted p* = " + std::to_string(c.p_star) + " clamped";
        c.p_star = std::clamp(c.p_star, lo, hi);
        c.clamped = true;
    }
    return c;
}

struct DetectOptions {
    std::vector<double> grid_q{1.05, 1.1, 1.15, 1.2, 1.25, 1.3, 1.35, 1.4, 1.45, 1.5};
    double epsilon{0.3};                    ///< beta_ij = epsilon / (i + j) unless beta is set
    std::optional<ErrorMatrix> beta;
    double k_check{2.0};
    std::optional<ThresholdMatrix> thresholds; ///< overrides beta-derived thresholds
    std::optional<double> rho;                 ///< defaults to rho_opt
    std::vector<double> p_star;                ///< per region; empty: calibrate
    std::size_t calibration_window{14};
};

struct TraceRow {
    Date date;
    std::string region;
    double x;
    double log_L;
    double log_Lhat;
    double log_U_diag;
};

struct OfflineResult {
    DecisionOutcome outcome;
    std::vector<std::string> regions;
    Date start{};
    std::optional<Date> detection_date;
    std::vector<double> p_star;
    std::vector<TraceRow> trace;
    std::vector<std::string> warnings;
    std::size_t clamped{0};
    double rho{};
    ThresholdMatrix thresholds;
};

/// Runs the detector over the historical series.  Day 0 is the initial state;
/// observation n is day n, so the detection date is start + T days.
inline OfflineResult detect_offline(const std::vector<RegionSeries>& series, const DetectOptions& opt) {
    if (series.empty()) throw input_error("no regions");
    const std::size_t ns = series.size();
    const std::size_t len = series.front().size();
    if (len < 2) throw input_error("series need at least two days");
    for (const auto& s : series)
        if (s.size() != len || s.start != series.front().start) throw input_error("series are not aligned");

    OfflineResult res;
    res.start = series.front().start;
    std::vector<ModelSpec> models;
    std::vector<ParameterGrid> grids;
    std::vector<StreamState> init;
    for (std::size_t i = 0; i < ns; ++i) {
        double p;
        if (!opt.p_star.empty()) {
            if (opt.p_star.size() != ns) throw input_error("p_star must list one value per region");
            p = opt.p_star[i];
        } else {
            auto c = calibrate_pre_change(series[i], std::min(opt.calibration_window, len));
            if (c.clamped) res.warnings.push_back(c.warning);
            p = c.p_star;
        }
        res.p_star.push_back(p);
        res.regions.push_back(series[i].region);
        models.push_back(ModelSpec::epidemic_gaussian(p, series[i].capacity, series[i].x(0)));
        std::vector<Point> pts;
        for (double q : opt.grid_q) {
            const double t = q * p;
            if (!(t > p && t < 1.0)) throw input_error("grid multiplier " + std::to_string(q) + " leaves (p*, 1)");
            pts.push_back(Point::Constant(1, t));
        }
        grids.emplace_back(std::move(pts));
        init.push_back(StreamState::Constant(1, series[i].x(0)));
    }
    const ErrorMatrix beta = opt.beta ? *opt.beta : ErrorMatrix::harmonic(ns, opt.epsilon);
    if (beta.size() != ns) throw input_error("beta matrix size does not match the region count");
    const Hyperparams hp = hyperparams_from_beta(beta, opt.k_check);
    res.rho = opt.rho.value_or(hp.rho_opt);
    res.thresholds = opt.thresholds ? *opt.thresholds
                                    : (opt.rho ? thresholds_from_beta(beta, hp, res.rho) : thresholds_optimal(beta, hp));

    Detector det(models, grids, res.rho, {}, init);
    ObservationSource source = [&](std::size_t n) -> std::optional<std::vector<Point>> {
        if (n >= len) return std::nullopt;
        std::vector<Point> obs(ns);
        for (std::size_t i = 0; i < ns; ++i) obs[i] = Point::Constant(1, series[i].x(n));
        return obs;
    };
    TraceSink sink = [&](const Detector& d) {
        const Matrix u = d.log_U();
        for (std::size_t i = 0; i < ns; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            res.trace.push_back({series[i].date(d.time()), series[i].region, series[i].x(d.time()), d.log_L()(ii),
                                 d.log_Lhat()(ii), u(ii, ii)});
        }
    };
    auto run = run_to_decision(det, res.thresholds, source, len - 1, sink);
    res.outcome = run.outcome;
    if (res.outcome.stopped) res.detection_date = res.start + std::chrono::days(static_cast<long>(res.outcome.time));
    for (std::size_t i = 0; i < ns; ++i) res.clamped += det.clamped(i);
    if (res.clamped) res.warnings.push_back(std::to_string(res.clamped) + " LLR evaluations clamped at zero state");
    return res;
}

// ---- reports ------------------------------------------------------------

inline nlohmann::json decision_json(const OfflineResult& r, std::optional<Date> reference = std::nullopt) {
    nlohmann::json j = to_json(r.outcome);
    j["start_date"] = format_date(r.start);
    j["regions"] = r.regions;
    j["p_star"] = r.p_star;
    j["rho"] = r.rho;
    if (r.outcome.stopped) {
        j["region"] = r.regions.at(r.outcome.stream - 1);
        j["detection_date"] = format_date(*r.detection_date);
    } else {
        j["region"] = nullptr;
        j["detection_date"] = nullptr;
    }
    if (reference) {
        j["reference_date"] = format_date(*reference);
        if (r.detection_date) j["days_before_reference"] = (*reference - *r.detection_date).count();
    }
    j["clamped"] = r.clamped;
    j["warnings"] = r.warnings;
    return j;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "date,region,x,log_L,log_Lhat,log_U_diag\n";
    const auto prec = os.precision(17);
    for (const auto& t : trace) {
        os << format_date(t.date) << ',' << t.region << ',' << t.x << ',' << t.log_L << ',' << t.log_Lhat << ','
           << t.log_U_diag << '\n';
    }
    os.precision(prec);
}

/// Line plot of X per region with optional detection (blue) and reference
/// (red) vertical markers.
inline void write_svg(std::ostream& os, const std::vector<RegionSeries>& series, std::optional<Date> detection,
                      std::optional<Date> reference) {
    if (series.empty() || series.front().size() == 0) throw input_error("nothing to plot");
    constexpr double w = 800, h = 420, ml = 60, mr = 140, mt = 20, mb = 40;
    const std::size_t len = series.front().size();
    double lo = 1e300, hi = -1e300;
    for (const auto& s : series)
        for (std::size_t n = 0; n < s.size(); ++n) {
            lo = std::min(lo, s.x(n));
            hi = std::max(hi, s.x(n));
        }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const Date d0 = series.front().start;
    auto px = [&](double day) { return ml + (w - ml - mr) * (len > 1 ? day / static_cast<double>(len - 1) : 0.5); };
    auto py = [&](double v) { return mt + (h - mt - mb) * (hi - v) / (hi - lo); };
    static const char* colors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};

    std::ostringstream o;
    o << std::fixed << std::setprecision(2);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
      << ' ' << h << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << ml << "\" y=\"" << h - 10 << "\" font-size=\"12\">" << format_date(d0) << "</text>\n";
    o << "<text x=\"" << w - mr << "\" y=\"" << h - 10 << "\" font-size=\"12\" text-anchor=\"end\">"
      << format_date(series.front().date(len - 1)) << "</text>\n";
    o << std::setprecision(6);
    o << "<text x=\"" << ml - 5 << "\" y=\"" << py(hi) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << hi << "</text>\n";
    o << "<text x=\"" << ml - 5 << "\" y=\"" << py(lo) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << lo << "</text>\n";
    o << std::setprecision(2);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* c = colors[i % 8];
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t n = 0; n < series[i].size(); ++n) o << (n ? " " : "") << px(double(n)) << ',' << py(series[i].x(n));
        o << "\"/>\n";
        o << "<text x=\"" << w - mr + 10 << "\" y=\"" << mt + 16 * (i + 1) << "\" font-size=\"12\" fill=\"" << c << "\">"
          << series[i].region << "</text>\n";
    }
    auto marker = [&](Date d, const char* color, const char* label) {
        const double day = static_cast<double>((d - d0).count());
        o << "<line x1=\"" << px(day) << "\" y1=\"" << mt << "\" x2=\"" << px(day) << "\" y2=\"" << h - mb
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << px(day) + 3 << "\" y=\"" << mt + 12 << "\" font-size=\"11\" fill=\"" << color << "\">" << label
          << ' ' << format_date(d) << "</text>\n";
    };
    if (detection) marker(*detection, "blue", "detection");
    if (reference) marker(*reference, "red", "reference");
    o << "</svg>\n";
    os << o.str();
}

enum class ReportFormat { csv, json, svg };

/// Writes decision.json, trace.csv and report.svg (or just one of them) into `dir`.
inline std::vector<std::string> emit_report(const OfflineResult& r, const std::vector<RegionSeries>& series,
                                            const std::string& dir, std::vector<ReportFormat> formats = {},
                                            std::optional<Date> reference = std::nullopt) {
    if (r.trace.empty()) throw input_error("empty trace");
    if (formats.empty()) formats = {ReportFormat::json, ReportFormat::csv, ReportFormat::svg};
    std::vector<std::string> written;
    auto open = [&](const std::string& name) {
        const std::string path = dir + "/" + name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw input_error("cannot write '" + path + "'");
        written.push_back(path);
        return f;
    };
    for (auto fmt : formats) {
        if (fmt == ReportFormat::json) {
            auto f = open("decision.json");
            f << decision_json(r, reference).dump(2) << '\n';
        } else if (fmt == ReportFormat::csv) {
            auto f = open("trace.csv");
            write_trace_csv(f, r.trace);
        } else {
            auto f = open("report.svg");
            write_svg(f, series, r.detection_date, reference);
        }
    }
    return written;
}

// ---- synthetic outbreaks ------------------------------------------------

struct SyntheticSpec {
    std::vector<std::string> regions{"Region1", "Region2", "Region3", "Region4", "Region5"};
    double law{100.0};          ///< p*_i = 1/(law + i)
    std::vector<double> capacity; ///< empty: V_i = 0.5 (i + 1) 1e4
    std::size_t days{61};       ///< day 0 plus 60 observations
    std::optional<std::size_t> outbreak_region; ///< 0-based
    std::size_t outbreak_day{20};               ///< days outbreak_day+1, ... are post-change
    double q{1.2};
    std::string start{"2020-02-01"};
    std::uint64_t seed{1};
};

/// Epidemic Gaussian paths X_0 = 1 per region, turned into hospitalization
/// counts H = V (1 - X).
inline std::vector<RegionSeries> synthesize(const SyntheticSpec& sp) {
    RandomSource rng(sp.seed);
    std::vector<RegionSeries> out;
    for (std::size_t i = 0; i < sp.regions.size(); ++i) {
        const double p = 1.0 / (sp.law + static_cast<double>(i + 1));
        const double v = sp.capacity.empty() ? epidemic_scale(i) : sp.capacity.at(i);
        const auto m = ModelSpec::epidemic_gaussian(p, v, 1.0);
        RegionSeries s{sp.regions[i], parse_date(sp.start), {}, v};
        StreamState x = m.initial_state();
        s.hospitalized.push_back(v * (1.0 - x(0)));
        for (std::size_t n = 1; n < sp.days; ++n) {
            const bool post = sp.outbreak_region && *sp.outbreak_region == i && n > sp.outbreak_day;
            x = simulate_step(m, post ? Regime::post(Point::Constant(1, sp.q * p)) : Regime::pre(), x, rng).second;
            s.hospitalized.push_back(std::clamp(v * (1.0 - x(0)), 0.0, v));
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline CapacityMap capacities_of(const std::vector<RegionSeries>& series) {
    CapacityMap m;
    for (const auto& s : series) m[s.region] = s.capacity;
    return m;
}

} // namespace msdi::apps
