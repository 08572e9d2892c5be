#pragma once

// Scenario documents: plain-text sections of `key = value` lines.
//
//   # comment
//   [simulation]
//   mode = hybrid
//   t_end = 0.3
//
// Unknown sections and keys are rejected. Omitted keys keep the defaults
// below (the nominal plant and filter values). See docs/scenario-format.md.

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "hapf/analysis.hpp"
#include "hapf/circuit.hpp"
#include "hapf/errors.hpp"

namespace hapf {

struct AnalysisParams {
    int n_cycles = 10;
    int h_max = 50;
    double thd_limit = 0.05;
};

struct Scenario {
    CircuitParams circuit;
    ControllerParams control;
    std::optional<double> v_dc_initial; // defaults to v_ref (pre-charged bus)
    Mode mode = Mode::Hybrid;
    double t_end = 0.3;    // s
    double t_settle = 0.1; // s, start of the measurement window
    AnalysisParams analysis;
    std::string out_dir = "out";
    int decimation = 10;

    double window_duration() const noexcept { return analysis.n_cycles / circuit.f1; }

    /// Throws ConfigError on the first violated invariant.
    void validate() const {
        try {
            circuit.validate();
            DcBusController check(control.dc_bus);
            HysteresisBand band(control.band_half_width);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (v_dc_initial && !(*v_dc_initial >= 0.0))
            throw ConfigError("v_dc_initial must be non-negative");
        if (analysis.n_cycles < 5)
            throw ConfigError("n_cycles must be at least 5");
        if (analysis.h_max < 1)
            throw ConfigError("h_max must be at least 1");
        if (!(analysis.thd_limit > 0.0))
            throw ConfigError("thd_limit must be positive");
        if (decimation < 1)
            throw ConfigError("decimation must be at least 1");
        if (!(t_settle >= 2.0 / circuit.f1))
            throw ConfigError("t_settle must cover at least two fundamental periods");
        const double need = t_settle + window_duration();
        if (t_end < need * (1.0 - 1e-12))
            throw ConfigError("t_end = " + std::to_string(t_end) + " s is shorter than t_settle + window = " +
                              std::to_string(need) + " s");
        try {
            cycle_window_samples(circuit.dt, circuit.f1, analysis.n_cycles);
        } catch (const AnalysisError& e) {
            throw ConfigError(e.what());
        }
        const double settle_steps = t_settle / circuit.dt;
        if (std::abs(settle_steps - std::round(settle_steps)) > 1e-6 * settle_steps)
            throw ConfigError("t_settle must be a whole number of time steps");
    }
};

inline std::string to_string(VoltageSense v) { return v == VoltageSense::Source ? "source" : "pcc"; }
inline std::string to_string(ReferenceInput r) { return r == ReferenceInput::Load ? "load" : "load_and_passive"; }

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view v, std::string_view key, std::size_t line) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out))
        throw ConfigError("invalid number '" + std::string(v) + "'" +
                              (key.empty() ? std::string() : " for key '" + std::string(key) + "'"),
                          line);
    return out;
}

inline int parse_int(std::string_view v, std::string_view key, std::size_t line) {
    int out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("invalid integer '" + std::string(v) + "'" +
                              (key.empty() ? std::string() : " for key '" + std::string(key) + "'"),
                          line);
    return out;
}

using Setter = std::function<void(Scenario&, std::string_view value, std::size_t line)>;

inline Setter real(double Scenario::*member) {
    return [member](Scenario& s, std::string_view v, std::size_t) { s.*member = parse_double(v, "", 0); };
}

template <typename F>
Setter real_at(F access) {
    return [access](Scenario& s, std::string_view v, std::size_t) { access(s) = parse_double(v, "", 0); };
}

template <typename F>
Setter integer_at(F access) {
    return [access](Scenario& s, std::string_view v, std::size_t) { access(s) = parse_int(v, "", 0); };
}

/// section -> key -> setter
inline const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> table = [] {
        std::map<std::string, std::map<std::string, Setter>> t;
        auto& c = t["circuit"];
        c["V_s"] = real_at([](Scenario& s) -> double& { return s.circuit.V_s; });
        c["f1"] = real_at([](Scenario& s) -> double& { return s.circuit.f1; });
        c["L_s"] = real_at([](Scenario& s) -> double& { return s.circuit.L_s; });
        c["R_s"] = real_at([](Scenario& s) -> double& { return s.circuit.R_s; });
        c["L_L"] = real_at([](Scenario& s) -> double& { return s.circuit.L_L; });
        c["C_L"] = real_at([](Scenario& s) -> double& { return s.circuit.C_L; });
        c["R_L"] = real_at([](Scenario& s) -> double& { return s.circuit.R_L; });
        c["C_dc"] = real_at([](Scenario& s) -> double& { return s.circuit.C_dc; });
        c["L_f"] = real_at([](Scenario& s) -> double& { return s.circuit.L_f; });
        c["R_on"] = real_at([](Scenario& s) -> double& { return s.circuit.R_on; });
        c["R_off"] = real_at([](Scenario& s) -> double& { return s.circuit.R_off; });
        c["dt"] = real_at([](Scenario& s) -> double& { return s.circuit.dt; });
        c["max_diode_iters"] = integer_at([](Scenario& s) -> int& { return s.circuit.max_diode_iters; });

        auto& p = t["passive"];
        p["C_5th"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.fifth.C; });
        p["L_5th"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.fifth.L; });
        p["R_5th"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.fifth.R; });
        p["C_7th"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.seventh.C; });
        p["L_7th"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.seventh.L; });
        p["R_7th"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.seventh.R; });
        p["C_hp"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.high_pass.C; });
        p["L_hp"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.high_pass.L; });
        p["R_hp"] = real_at([](Scenario& s) -> double& { return s.circuit.passive.high_pass.R; });

        auto& k = t["control"];
        k["v_ref"] = real_at([](Scenario& s) -> double& { return s.control.dc_bus.v_ref; });
        k["gain"] = real_at([](Scenario& s) -> double& { return s.control.dc_bus.gain; });
        k["v_filter_tau"] = real_at([](Scenario& s) -> double& { return s.control.dc_bus.v_meas_filter_tau; });
        k["band"] = real_at([](Scenario& s) -> double& { return s.control.band_half_width; });
        k["v_dc_initial"] = [](Scenario& s, std::string_view v, std::size_t line) {
            s.v_dc_initial = parse_double(v, "v_dc_initial", line);
        };
        k["voltage_sense"] = [](Scenario& s, std::string_view v, std::size_t line) {
            if (v == "source") s.control.voltage_sense = VoltageSense::Source;
            else if (v == "pcc") s.control.voltage_sense = VoltageSense::Pcc;
            else throw ConfigError("voltage_sense must be 'source' or 'pcc', got '" + std::string(v) + "'", line);
        };
        k["reference_input"] = [](Scenario& s, std::string_view v, std::size_t line) {
            if (v == "load") s.control.reference_input = ReferenceInput::Load;
            else if (v == "load_and_passive") s.control.reference_input = ReferenceInput::LoadAndPassive;
            else
                throw ConfigError("reference_input must be 'load' or 'load_and_passive', got '" + std::string(v) + "'",
                                  line);
        };

        auto& m = t["simulation"];
        m["mode"] = [](Scenario& s, std::string_view v, std::size_t line) {
            const auto mode = parse_mode(std::string(v));
            if (!mode)
                throw ConfigError("unknown mode '" + std::string(v) + "' (baseline, passive_only, hybrid)", line);
            s.mode = *mode;
        };
        m["t_end"] = real(&Scenario::t_end);
        m["t_settle"] = real(&Scenario::t_settle);

        auto& a = t["analysis"];
        a["n_cycles"] = integer_at([](Scenario& s) -> int& { return s.analysis.n_cycles; });
        a["h_max"] = integer_at([](Scenario& s) -> int& { return s.analysis.h_max; });
        a["thd_limit"] = real_at([](Scenario& s) -> double& { return s.analysis.thd_limit; });

        auto& o = t["output"];
        o["dir"] = [](Scenario& s, std::string_view v, std::size_t) { s.out_dir = std::string(v); };
        o["decimation"] = integer_at([](Scenario& s) -> int& { return s.decimation; });
        return t;
    }();
    return table;
}

} // namespace detail

/// Parses a scenario document. Errors carry the offending line number.
inline Scenario load_scenario(std::string_view text) {
    Scenario s;
    const auto& schema = detail::schema();
    const std::map<std::string, detail::Setter>* section = nullptr;
    std::string section_name;
    std::set<std::string> seen;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        const auto hash = raw.find_first_of("#;");
        const std::string_view line = detail::trim(raw.substr(0, hash));
        if (line.empty())
            continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("malformed section header '" + std::string(line) + "'", line_no);
            section_name = std::string(detail::trim(line.substr(1, line.size() - 2)));
            const auto it = schema.find(section_name);
            if (it == schema.end())
                throw ConfigError("unknown section [" + section_name + "]", line_no);
            section = &it->second;
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("expected 'key = value', got '" + std::string(line) + "'", line_no);
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("missing key before '='", line_no);
        if (section == nullptr)
            throw ConfigError("key '" + key + "' appears before any [section]", line_no);
        const auto it = section->find(key);
        if (it == section->end())
            throw ConfigError("unknown key '" + key + "' in section [" + section_name + "]", line_no);
        if (!seen.insert(section_name + "." + key).second)
            throw ConfigError("duplicate key '" + key + "' in section [" + section_name + "]", line_no);
        if (value.empty())
            throw ConfigError("empty value for key '" + key + "'", line_no);
        try {
            it->second(s, value, line_no);
        } catch (const ConfigError& e) {
            if (e.line() != 0)
                throw;
            throw ConfigError(std::string(e.what()) + " (key '" + key + "')", line_no);
        }
    }
    s.validate();
    return s;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return load_scenario(buf.str());
}

/// Serializes every key (round-trips through load_scenario).
inline std::string to_text(const Scenario& s) {
    std::ostringstream o;
    o.precision(17);
    const auto& c = s.circuit;
    o << "[circuit]\n"
      << "V_s = " << c.V_s << "\nf1 = " << c.f1 << "\nL_s = " << c.L_s << "\nR_s = " << c.R_s << "\nL_L = " << c.L_L
      << "\nC_L = " << c.C_L << "\nR_L = " << c.R_L << "\nC_dc = " << c.C_dc << "\nL_f = " << c.L_f
      << "\nR_on = " << c.R_on << "\nR_off = " << c.R_off << "\ndt = " << c.dt
      << "\nmax_diode_iters = " << c.max_diode_iters << "\n\n";
    const auto& p = c.passive;
    o << "[passive]\n"
      << "C_5th = " << p.fifth.C << "\nL_5th = " << p.fifth.L << "\nR_5th = " << p.fifth.R << "\nC_7th = "
      << p.seventh.C << "\nL_7th = " << p.seventh.L << "\nR_7th = " << p.seventh.R << "\nC_hp = " << p.high_pass.C
      << "\nL_hp = " << p.high_pass.L << "\nR_hp = " << p.high_pass.R << "\n\n";
    o << "[control]\n"
      << "v_ref = " << s.control.dc_bus.v_ref << "\ngain = " << s.control.dc_bus.gain
      << "\nv_filter_tau = " << s.control.dc_bus.v_meas_filter_tau << "\nband = " << s.control.band_half_width
      << "\nvoltage_sense = " << to_string(s.control.voltage_sense)
      << "\nreference_input = " << to_string(s.control.reference_input) << "\n";
    if (s.v_dc_initial)
        o << "v_dc_initial = " << *s.v_dc_initial << "\n";
    o << "\n[simulation]\nmode = " << to_string(s.mode) << "\nt_end = " << s.t_end << "\nt_settle = " << s.t_settle
      << "\n\n[analysis]\nn_cycles = " << s.analysis.n_cycles << "\nh_max = " << s.analysis.h_max
      << "\nthd_limit = " << s.analysis.thd_limit << "\n\n[output]\ndir = " << s.out_dir
      << "\ndecimation = " << s.decimation << "\n";
    return o.str();
}

} // namespace hapf
