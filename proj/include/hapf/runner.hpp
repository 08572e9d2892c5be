#pragma once

// Scenario execution and file artifacts:
//   timeseries.csv          decimated channels, time in the first column
//   spectrum_<channel>.csv  harmonic table for each analyzed channel
//   summary.txt             key = value mirror of RunSummary
//   scenario.conf           the fully resolved scenario that produced them

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hapf/analysis.hpp"
#include "hapf/circuit.hpp"
#include "hapf/errors.hpp"
#include "hapf/scenario.hpp"

namespace hapf {

inline constexpr std::array<const char*, 3> kPhaseNames{"r", "y", "b"};

/// Formats a double with 17 significant digits (round-trip exact).
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Time-series CSV column names after "time_s", in file order.
inline const std::vector<std::string>& timeseries_channels() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const char* group : {"v_s", "v_pcc"})
            for (const char* ph : kPhaseNames)
                n.push_back(std::string(group) + "_" + ph + "_V");
        for (const char* group : {"i_s", "i_load", "i_pass", "i_vsc", "i_vsc_ref"})
            for (const char* ph : kPhaseNames)
                n.push_back(std::string(group) + "_" + ph + "_A");
        for (const char* extra : {"v_cl_V", "v_dc_V", "p_load_W", "q_load_var", "p_ave_W"})
            n.emplace_back(extra);
        return n;
    }();
    return names;
}

inline std::string source_current_channel(int phase) { return std::string("i_s_") + kPhaseNames[phase] + "_A"; }
inline std::string load_current_channel(int phase) { return std::string("i_load_") + kPhaseNames[phase] + "_A"; }

struct RunSummary {
    Mode mode = Mode::Hybrid;
    double f1 = 50.0;
    double dt = 0.0;
    double window_start = 0.0;
    int n_cycles = 0;
    int h_max = 0;
    double thd_limit = 0.05;

    std::array<double, 3> thd{};             // source current, per phase
    std::array<double, 3> fundamental_rms{}; // source current, per phase [A]
    std::array<double, 3> displacement_pf{}; // source voltage vs current, per phase
    std::array<double, 3> load_thd{};        // load current, per phase
    double thd_mean = 0.0;
    double thd_max = 0.0;

    double v_dc_ref = 0.0;
    double v_dc_min = 0.0;
    double v_dc_mean = 0.0;
    double v_dc_max = 0.0;
    double switching_frequency = 0.0; // Hz, mean over phases, full switching cycles
    bool ieee519_pass = false;

    double kcl_residual_max = 0.0;      // A, over every step of the run
    double band_containment = 1.0;      // fraction of window samples inside band + one-step slew
    double tracking_error_max = 0.0;    // A, max |i_vsc - i_vsc_ref| over the window
    std::uint64_t steps = 0;
    int diode_iterations_max = 0;

    std::vector<double> harmonics; // mean source-current magnitude per order h = 0..h_max [A peak]

    /// "before_filtering" for the baseline, "after_filtering" otherwise.
    std::string stage() const { return mode == Mode::Baseline ? "before_filtering" : "after_filtering"; }
};

struct RunData {
    RunSummary summary;
    std::vector<std::vector<double>> rows;           // decimated time series, time first
    std::map<std::string, Spectrum> spectra;         // per analyzed channel
    std::map<std::string, std::vector<double>> window; // undecimated analysis buffers
    std::vector<double> tracking_error;              // per window sample, max over phases
    std::vector<double> tracking_bound;              // per window sample
};

namespace detail {

inline std::vector<double> make_row(double t, const StepOutputs& o) {
    std::vector<double> row;
    row.reserve(timeseries_channels().size() + 1);
    row.push_back(t);
    for (const PhaseTriple* x : {&o.v_source, &o.v_pcc, &o.i_source, &o.i_load, &o.i_passive, &o.i_vsc, &o.i_vsc_ref})
        for (int k = 0; k < 3; ++k)
            row.push_back((*x)[k]);
    row.push_back(o.v_cl);
    row.push_back(o.v_dc);
    row.push_back(o.load_pq.p);
    row.push_back(o.load_pq.q);
    row.push_back(o.p_ave);
    return row;
}

} // namespace detail

/// Runs the scenario in memory; no files are touched.
inline RunData simulate(const Scenario& sc) {
    sc.validate();
    const auto& p = sc.circuit;
    Simulator sim(p, sc.mode, sc.control, sc.v_dc_initial);

    const auto n_total = static_cast<std::uint64_t>(std::llround(sc.t_end / p.dt));
    const auto n0 = static_cast<std::uint64_t>(std::llround(sc.t_settle / p.dt));
    const std::size_t n_win = cycle_window_samples(p.dt, p.f1, sc.analysis.n_cycles);

    RunData data;
    RunSummary& s = data.summary;
    s.mode = sc.mode;
    s.f1 = p.f1;
    s.dt = p.dt;
    s.window_start = static_cast<double>(n0) * p.dt;
    s.n_cycles = sc.analysis.n_cycles;
    s.h_max = sc.analysis.h_max;
    s.thd_limit = sc.analysis.thd_limit;
    s.v_dc_ref = sc.control.dc_bus.v_ref;

    std::array<std::vector<double>, 3> i_s, i_l, v_s;
    for (int k = 0; k < 3; ++k) {
        i_s[k].reserve(n_win);
        i_l[k].reserve(n_win);
        v_s[k].reserve(n_win);
    }

    StepOutputs initial;
    initial.v_source = source_voltage(0.0, p);
    initial.v_dc = sim.state().v_dc;
    data.rows.push_back(detail::make_row(0.0, initial));

    double v_min = std::numeric_limits<double>::infinity(), v_max = -v_min, v_sum = 0.0;
    std::uint64_t transitions = 0, inside = 0;
    for (std::uint64_t n = 1; n <= n_total; ++n) {
        const StepOutputs& o = sim.step();
        const double t = static_cast<double>(n) * p.dt;
        s.kcl_residual_max = std::max(s.kcl_residual_max, o.kcl_residual);
        s.diode_iterations_max = std::max(s.diode_iterations_max, o.diode_iterations);
        if (n % static_cast<std::uint64_t>(sc.decimation) == 0)
            data.rows.push_back(detail::make_row(t, o));

        if (n < n0 || n >= n0 + n_win)
            continue;
        for (int k = 0; k < 3; ++k) {
            i_s[k].push_back(o.i_source[k]);
            i_l[k].push_back(o.i_load[k]);
            v_s[k].push_back(o.v_source[k]);
        }
        v_min = std::min(v_min, o.v_dc);
        v_max = std::max(v_max, o.v_dc);
        v_sum += o.v_dc;
        transitions += static_cast<std::uint64_t>(o.switch_transitions);
        if (sim.vsc_enabled()) {
            double err = 0.0;
            for (int k = 0; k < 3; ++k)
                err = std::max(err, std::abs(o.i_vsc_at_ref[k] - o.i_vsc_ref[k]));
            const double bound = sc.control.band_half_width + p.dt * o.v_dc / p.L_f;
            data.tracking_error.push_back(err);
            data.tracking_bound.push_back(bound);
            inside += err <= bound;
            s.tracking_error_max = std::max(s.tracking_error_max, err);
        }
    }
    s.steps = sim.steps();

    const double window_s = static_cast<double>(n_win) * p.dt;
    s.v_dc_min = v_min;
    s.v_dc_max = v_max;
    s.v_dc_mean = v_sum / static_cast<double>(n_win);
    s.switching_frequency = static_cast<double>(transitions) / 2.0 / 3.0 / window_s;
    s.band_containment = sim.vsc_enabled() ? static_cast<double>(inside) / static_cast<double>(n_win) : 1.0;

    s.harmonics.assign(static_cast<std::size_t>(sc.analysis.h_max) + 1, 0.0);
    s.thd_max = 0.0;
    s.thd_mean = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Spectrum si = dft_spectrum(i_s[k], p.dt, p.f1, sc.analysis.n_cycles, sc.analysis.h_max);
        const Spectrum sl = dft_spectrum(i_l[k], p.dt, p.f1, sc.analysis.n_cycles, sc.analysis.h_max);
        const Spectrum sv = dft_spectrum(v_s[k], p.dt, p.f1, sc.analysis.n_cycles, sc.analysis.h_max);
        s.thd[k] = thd(si);
        s.load_thd[k] = thd(sl);
        s.fundamental_rms[k] = si.magnitude[1] / std::numbers::sqrt2;
        s.displacement_pf[k] = displacement_power_factor(sv, si);
        s.thd_mean += s.thd[k] / 3.0;
        s.thd_max = std::max(s.thd_max, s.thd[k]);
        for (std::size_t h = 0; h < s.harmonics.size(); ++h)
            s.harmonics[h] += si.magnitude[h] / 3.0;
        data.spectra[source_current_channel(k)] = si;
        data.spectra[load_current_channel(k)] = sl;
        data.window[source_current_channel(k)] = std::move(i_s[k]);
        data.window[load_current_channel(k)] = std::move(i_l[k]);
    }
    s.ieee519_pass = s.thd_max < s.thd_limit;
    return data;
}

/// Analyzed channel names referenced by the summary (all present in the CSV header).
inline std::vector<std::string> analyzed_channels() {
    std::vector<std::string> c;
    for (int k = 0; k < 3; ++k)
        c.push_back(source_current_channel(k));
    for (int k = 0; k < 3; ++k)
        c.push_back(load_current_channel(k));
    return c;
}

inline std::string summary_to_text(const RunSummary& s) {
    std::ostringstream o;
    auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
    o << "# hybrid active power filter run summary\n";
    kv("mode", to_string(s.mode));
    kv("stage", s.stage());
    kv("f1", fmt17(s.f1));
    kv("dt", fmt17(s.dt));
    kv("window_start", fmt17(s.window_start));
    kv("n_cycles", std::to_string(s.n_cycles));
    kv("h_max", std::to_string(s.h_max));
    kv("thd_limit", fmt17(s.thd_limit));
    {
        std::string list;
        for (const auto& c : analyzed_channels())
            list += (list.empty() ? "" : ",") + c;
        kv("channels", list);
    }
    for (int k = 0; k < 3; ++k)
        kv("thd." + source_current_channel(k), fmt17(s.thd[k]));
    for (int k = 0; k < 3; ++k)
        kv("thd." + load_current_channel(k), fmt17(s.load_thd[k]));
    kv("thd_mean", fmt17(s.thd_mean));
    kv("thd_max", fmt17(s.thd_max));
    for (int k = 0; k < 3; ++k)
        kv("fundamental_rms." + source_current_channel(k), fmt17(s.fundamental_rms[k]));
    for (int k = 0; k < 3; ++k)
        kv("displacement_pf." + source_current_channel(k), fmt17(s.displacement_pf[k]));
    kv("v_dc_ref", fmt17(s.v_dc_ref));
    kv("v_dc_min", fmt17(s.v_dc_min));
    kv("v_dc_mean", fmt17(s.v_dc_mean));
    kv("v_dc_max", fmt17(s.v_dc_max));
    kv("switching_frequency_hz", fmt17(s.switching_frequency));
    kv("ieee519", s.ieee519_pass ? "pass" : "fail");
    kv("kcl_residual_max", fmt17(s.kcl_residual_max));
    kv("band_containment", fmt17(s.band_containment));
    kv("tracking_error_max", fmt17(s.tracking_error_max));
    kv("steps", std::to_string(s.steps));
    kv("diode_iterations_max", std::to_string(s.diode_iterations_max));
    for (std::size_t h = 0; h < s.harmonics.size(); ++h)
        kv("harmonic." + std::to_string(h), fmt17(s.harmonics[h]));
    return o.str();
}

/// Parses the document written by summary_to_text.
inline RunSummary summary_from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view t = detail::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("summary: expected 'key = value'", line_no);
        kv[std::string(detail::trim(t.substr(0, eq)))] = std::string(detail::trim(t.substr(eq + 1)));
    }
    auto get = [&](const std::string& k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end())
            throw ConfigError("summary: missing key '" + k + "'");
        return it->second;
    };
    auto num = [&](const std::string& k) { return detail::parse_double(get(k), k, 0); };
    auto integer = [&](const std::string& k) { return detail::parse_int(get(k), k, 0); };

    RunSummary s;
    const auto mode = parse_mode(get("mode"));
    if (!mode)
        throw ConfigError("summary: unknown mode '" + get("mode") + "'");
    s.mode = *mode;
    s.f1 = num("f1");
    s.dt = num("dt");
    s.window_start = num("window_start");
    s.n_cycles = integer("n_cycles");
    s.h_max = integer("h_max");
    s.thd_limit = num("thd_limit");
    for (int k = 0; k < 3; ++k) {
        s.thd[k] = num("thd." + source_current_channel(k));
        s.load_thd[k] = num("thd." + load_current_channel(k));
        s.fundamental_rms[k] = num("fundamental_rms." + source_current_channel(k));
        s.displacement_pf[k] = num("displacement_pf." + source_current_channel(k));
    }
    s.thd_mean = num("thd_mean");
    s.thd_max = num("thd_max");
    s.v_dc_ref = num("v_dc_ref");
    s.v_dc_min = num("v_dc_min");
    s.v_dc_mean = num("v_dc_mean");
    s.v_dc_max = num("v_dc_max");
    s.switching_frequency = num("switching_frequency_hz");
    s.ieee519_pass = get("ieee519") == "pass";
    s.kcl_residual_max = num("kcl_residual_max");
    s.band_containment = num("band_containment");
    s.tracking_error_max = num("tracking_error_max");
    s.steps = static_cast<std::uint64_t>(std::stoull(get("steps")));
    s.diode_iterations_max = integer("diode_iterations_max");
    s.harmonics.resize(static_cast<std::size_t>(s.h_max) + 1);
    for (int h = 0; h <= s.h_max; ++h)
        s.harmonics[h] = num("harmonic." + std::to_string(h));
    return s;
}

inline RunSummary read_summary_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open summary file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return summary_from_text(buf.str());
}

inline std::string spectrum_to_csv(const Spectrum& s) {
    std::string out = "h,frequency_Hz,magnitude,phase_rad,relative_to_fundamental\n";
    const double fund = s.magnitude.size() > 1 ? s.magnitude[1] : 0.0;
    for (int h = 0; h <= s.h_max(); ++h) {
        out += std::to_string(h) + "," + fmt17(h * s.f1) + "," + fmt17(s.magnitude[h]) + "," + fmt17(s.phase[h]) +
               "," + fmt17(fund > 0.0 ? s.magnitude[h] / fund : 0.0) + "\n";
    }
    return out;
}

inline std::string timeseries_to_csv(const std::vector<std::vector<double>>& rows) {
    std::string out = "time_s";
    for (const auto& c : timeseries_channels())
        out += "," + c;
    out += "\n";
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j)
                out += ',';
            out += fmt17(row[j]);
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot write '" + path.string() + "'");
    f << content;
    if (!f)
        throw Error("write failed for '" + path.string() + "'");
}

} // namespace detail

/// Writes every artifact of `data` into `dir` (created if needed).
inline void write_artifacts(const Scenario& sc, const RunData& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    detail::write_file(dir / "timeseries.csv", timeseries_to_csv(data.rows));
    for (const auto& [channel, spec] : data.spectra)
        detail::write_file(dir / ("spectrum_" + channel + ".csv"), spectrum_to_csv(spec));
    detail::write_file(dir / "summary.txt", summary_to_text(data.summary));
    detail::write_file(dir / "scenario.conf", to_text(sc));
}

/// simulate + write_artifacts into sc.out_dir.
inline RunData run(const Scenario& sc) {
    RunData data = simulate(sc);
    write_artifacts(sc, data, sc.out_dir);
    return data;
}

// ---------------------------------------------------------------------------
// Comparison

struct HarmonicAttenuation {
    int h = 0;
    double base = 0.0;        // A peak
    double compensated = 0.0; // A peak
    double attenuation_db = 0.0;
};

struct ComparisonReport {
    double thd_base = 0.0;
    double thd_compensated = 0.0;
    double reduction_ratio = 1.0;
    std::vector<HarmonicAttenuation> harmonics;
};

/// THD reduction ratio (base / compensated, mean phase THD) and per-harmonic
/// attenuation 20 log10(base / compensated).
inline ComparisonReport compare(const RunSummary& base, const RunSummary& comp) {
    if (base.f1 != comp.f1)
        throw ComparisonError("fundamental mismatch: " + fmt17(base.f1) + " Hz vs " + fmt17(comp.f1) + " Hz");
    if (base.n_cycles != comp.n_cycles || std::abs(base.window_start - comp.window_start) > 1e-9)
        throw ComparisonError("analysis windows differ (start " + fmt17(base.window_start) + " s / " +
                              std::to_string(base.n_cycles) + " cycles vs " + fmt17(comp.window_start) + " s / " +
                              std::to_string(comp.n_cycles) + " cycles)");
    ComparisonReport r;
    r.thd_base = base.thd_mean;
    r.thd_compensated = comp.thd_mean;
    r.reduction_ratio = comp.thd_mean > 0.0 ? base.thd_mean / comp.thd_mean : std::numeric_limits<double>::infinity();
    const std::size_t n = std::min(base.harmonics.size(), comp.harmonics.size());
    for (std::size_t h = 1; h < n; ++h) {
        HarmonicAttenuation a;
        a.h = static_cast<int>(h);
        a.base = base.harmonics[h];
        a.compensated = comp.harmonics[h];
        if (a.base == a.compensated)
            a.attenuation_db = 0.0;
        else if (a.compensated > 0.0 && a.base > 0.0)
            a.attenuation_db = 20.0 * std::log10(a.base / a.compensated);
        else
            a.attenuation_db = a.compensated > 0.0 ? -std::numeric_limits<double>::infinity()
                                                   : std::numeric_limits<double>::infinity();
        r.harmonics.push_back(a);
    }
    return r;
}

inline std::string comparison_to_text(const ComparisonReport& r) {
    std::ostringstream o;
    char line[160];
    std::snprintf(line, sizeof line, "thd_base = %.6f\nthd_compensated = %.6f\nreduction_ratio = %.4f\n", r.thd_base,
                  r.thd_compensated, r.reduction_ratio);
    o << line << "# h  base_A  compensated_A  attenuation_dB\n";
    for (const auto& a : r.harmonics) {
        std::snprintf(line, sizeof line, "%3d %12.6g %12.6g %10.3f\n", a.h, a.base, a.compensated, a.attenuation_db);
        o << line;
    }
    return o.str();
}

// ---------------------------------------------------------------------------
// CSV input (for re-analysing a written time series)

struct CsvChannel {
    std::vector<double> time;
    std::vector<double> values;
};

inline CsvChannel read_csv_channel(const std::string& path, const std::string& channel) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open CSV '" + path + "'");
    std::string header;
    if (!std::getline(in, header))
        throw Error("CSV '" + path + "' is empty");
    std::vector<std::string> cols;
    {
        std::stringstream hs(header);
        std::string c;
        while (std::getline(hs, c, ','))
            cols.emplace_back(detail::trim(c));
    }
    const auto it = std::find(cols.begin(), cols.end(), channel);
    if (it == cols.end())
        throw Error("channel '" + channel + "' not found in '" + path + "'");
    const auto col = static_cast<std::size_t>(it - cols.begin());

    CsvChannel out;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty())
            continue;
        std::stringstream ls(line);
        std::string cell;
        std::size_t j = 0;
        double t = 0.0, v = 0.0;
        bool have_v = false;
        while (std::getline(ls, cell, ',')) {
            if (j == 0)
                t = detail::parse_double(detail::trim(cell), "time", line_no);
            if (j == col) {
                v = detail::parse_double(detail::trim(cell), channel, line_no);
                have_v = true;
            }
            ++j;
        }
        if (!have_v)
            throw Error("CSV line " + std::to_string(line_no) + " has too few columns");
        out.time.push_back(t);
        out.values.push_back(v);
    }
    return out;
}

/// Spectrum of a CSV channel over n_cycles starting at t_start (or the last
/// n_cycles of the file when t_start is NaN).
inline Spectrum csv_spectrum(const CsvChannel& ch, double f1, int n_cycles, double t_start, int h_max) {
    if (ch.time.size() < 2)
        throw AnalysisError("time series too short");
    const double dt = (ch.time.back() - ch.time.front()) / static_cast<double>(ch.time.size() - 1);
    for (std::size_t k = 1; k < ch.time.size(); ++k)
        if (std::abs(ch.time[k] - ch.time[k - 1] - dt) > 1e-6 * dt)
            throw AnalysisError("time column is not uniformly sampled");
    const std::size_t n = cycle_window_samples(dt, f1, n_cycles);
    if (n > ch.values.size())
        throw AnalysisError("time series holds fewer than " + std::to_string(n_cycles) + " cycles");
    std::size_t first = ch.values.size() - n;
    if (!std::isnan(t_start)) {
        const double idx = (t_start - ch.time.front()) / dt;
        if (idx < -1e-6 || std::llround(idx) + static_cast<long long>(n) > static_cast<long long>(ch.values.size()))
            throw AnalysisError("requested window exceeds the time series");
        first = static_cast<std::size_t>(std::llround(idx));
    }
    return dft_spectrum(std::span<const double>(ch.values).subspan(first, n), dt, f1, n_cycles, h_max);
}

} // namespace hapf
