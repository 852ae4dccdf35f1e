#pragma once

// Run configuration: an INI file of [section] key = value tables. Values are
// resolved as command-line overrides > file > built-in defaults; unknown keys
// are rejected so typos fail loudly.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fpcim/cimmacro.hpp"
#include "fpcim/errors.hpp"
#include "fpcim/netsim.hpp"
#include "fpcim/perfmodel.hpp"

namespace fpcim {

using boost::property_tree::ptree;

struct RunConfig {
    FpFormat format = FpFormat::e2m5();
    std::optional<double> v_unit;  // volts; unset means the format default
    DacConfig dac;
    AdcConfig adc = AdcConfig::for_format(FpFormat::e2m5());
    DeviceModel device;
    Readout readout = Readout::fp_adc;
    PowerTargets power;

    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string network = "data/fixture/network.json";
    std::string dataset = "data/fixture/test.json";
    std::string calibration = "data/fixture/calib.json";
    std::vector<NumberFormat> eval_formats{NumberFormat::ideal, NumberFormat::e2m5, NumberFormat::e3m4,
                                           NumberFormat::int8};
    std::size_t max_samples = 0;   // 0 = whole dataset
    double adc_current = 5.38e-6;  // amperes, for the adc subcommand
    std::vector<double> linearity_conductances{20e-6, 18e-6, 15e-6, 12e-6};

    /// Fully resolved macro for the selected format.
    MacroConfig macro() const {
        MacroConfig c = MacroConfig::for_format(format);
        const double v_default = c.dac.v_unit;
        c.dac = dac;
        c.dac.v_unit = v_unit.value_or(v_default);
        const AdcConfig fmt_adc = AdcConfig::for_format(format, adc.c_int);
        c.adc = adc;
        c.adc.cap_bank = fmt_adc.cap_bank;
        c.adc.ramp_steps = fmt_adc.ramp_steps;
        c.device = device;
        c.readout = readout;
        c.latency = c.adc.conversion_time();
        return c;
    }

    void validate() const {
        macro().validate();
        require_config(!eval_formats.empty(), "run: eval_formats must not be empty");
        require_config(adc_current >= 0.0, "adc: current must be non-negative");
        for (double g : linearity_conductances) require_config(g > 0.0, "linearity: conductances must be positive");
        EnergyParams::calibrated(power).validate();
    }
};

inline Readout parse_readout(std::string_view s) {
    if (s == "fp_adc") return Readout::fp_adc;
    if (s == "fp_adc_transient") return Readout::fp_adc_transient;
    if (s == "int8_adc") return Readout::int8_adc;
    if (s == "identity") return Readout::identity;
    throw ConfigError("unknown readout '" + std::string(s) + "'");
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

} // namespace detail

/// Every key with its current value, in file units.
inline ptree to_ptree(const RunConfig& c) {
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(12);
        os << v;
        return os.str();
    };
    ptree t;
    t.put("format.name", c.format.name());
    t.put("dac.v_unit", c.v_unit ? num(*c.v_unit) : std::string("auto"));
    t.put("dac.v_supply", num(c.dac.v_supply));
    t.put("dac.gain_error", num(c.dac.gain_error));
    t.put("dac.ladder_error", num(c.dac.ladder_error));
    t.put("adc.c_int_fF", num(c.adc.c_int * 1e15));
    t.put("adc.t_start_ns", num(c.adc.t_start * 1e9));
    t.put("adc.t_int_ns", num(c.adc.t_int * 1e9));
    t.put("adc.t_step_ns", num(c.adc.t_step * 1e9));
    t.put("adc.v_th", num(c.adc.v_th));
    t.put("adc.v_mid", num(c.adc.v_mid));
    t.put("adc.v_reset", num(c.adc.v_reset));
    t.put("adc.offset", num(c.adc.offset));
    t.put("adc.offset_cancel", c.adc.offset_cancel ? "true" : "false");
    t.put("adc.current_uA", num(c.adc_current * 1e6));
    t.put("device.g_min_uS", num(c.device.g_min * 1e6));
    t.put("device.g_max_uS", num(c.device.g_max * 1e6));
    t.put("device.levels", std::to_string(c.device.levels));
    t.put("device.sigma_rel", num(c.device.sigma_rel));
    t.put("macro.readout", to_string(c.readout));
    std::string gs;
    for (double g : c.linearity_conductances) gs += (gs.empty() ? "" : ",") + num(g * 1e6);
    t.put("linearity.conductances_uS", gs);
    t.put("power.e2m5_efficiency_tops_w", num(c.power.e2m5_efficiency * 1e-12));
    t.put("power.e3m4_efficiency_tops_w", num(c.power.e3m4_efficiency * 1e-12));
    t.put("power.adc_reduction", num(c.power.adc_reduction));
    t.put("power.total_reduction", num(c.power.total_reduction));
    t.put("power.dac_share", num(c.power.dac_share));
    t.put("power.array_share", num(c.power.array_share));
    t.put("power.digital_share", num(c.power.digital_share));
    t.put("run.seed", std::to_string(c.seed));
    t.put("run.out_dir", c.out_dir);
    t.put("run.network", c.network);
    t.put("run.dataset", c.dataset);
    t.put("run.calibration", c.calibration);
    std::string fs;
    for (auto f : c.eval_formats) fs += (fs.empty() ? "" : ",") + std::string(to_string(f));
    t.put("run.eval_formats", fs);
    t.put("run.max_samples", std::to_string(c.max_samples));
    return t;
}

/// Applies one "section.key" = value setting.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    auto d = [&] { return to_double(key, v); };
    if (key == "format.name") {
        try {
            c.format = parse_format(v);
        } catch (const std::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
        c.adc.ramp_steps = c.format.mantissa_steps();
        c.adc.cap_bank = AdcConfig::doubling_bank(c.adc.c_int, c.format);
    } else if (key == "dac.v_unit") {
        c.v_unit = v == "auto" ? std::nullopt : std::optional<double>(d());
    } else if (key == "dac.v_supply") c.dac.v_supply = d();
    else if (key == "dac.gain_error") c.dac.gain_error = d();
    else if (key == "dac.ladder_error") c.dac.ladder_error = d();
    else if (key == "adc.c_int_fF") {
        c.adc.c_int = d() * 1e-15;
        c.adc.cap_bank = AdcConfig::doubling_bank(c.adc.c_int, c.format);
    } else if (key == "adc.t_start_ns") c.adc.t_start = d() * 1e-9;
    else if (key == "adc.t_int_ns") c.adc.t_int = d() * 1e-9;
    else if (key == "adc.t_step_ns") c.adc.t_step = d() * 1e-9;
    else if (key == "adc.v_th") c.adc.v_th = d();
    else if (key == "adc.v_mid") c.adc.v_mid = d();
    else if (key == "adc.v_reset") c.adc.v_reset = d();
    else if (key == "adc.offset") c.adc.offset = d();
    else if (key == "adc.offset_cancel") c.adc.offset_cancel = to_bool(key, v);
    else if (key == "adc.current_uA") c.adc_current = d() * 1e-6;
    else if (key == "device.g_min_uS") c.device.g_min = d() * 1e-6;
    else if (key == "device.g_max_uS") c.device.g_max = d() * 1e-6;
    else if (key == "device.levels") {
        const double l = d();
        require_config(l == std::floor(l) && l >= 2 && l <= 1e12, key + ": expected an integer >= 2");
        c.device.levels = static_cast<std::int64_t>(l);
    } else if (key == "device.sigma_rel") c.device.sigma_rel = d();
    else if (key == "macro.readout") c.readout = parse_readout(v);
    else if (key == "linearity.conductances_uS") {
        c.linearity_conductances.clear();
        for (const auto& s : split_list(v)) c.linearity_conductances.push_back(to_double(key, s) * 1e-6);
    } else if (key == "power.e2m5_efficiency_tops_w") c.power.e2m5_efficiency = d() * 1e12;
    else if (key == "power.e3m4_efficiency_tops_w") c.power.e3m4_efficiency = d() * 1e12;
    else if (key == "power.adc_reduction") c.power.adc_reduction = d();
    else if (key == "power.total_reduction") c.power.total_reduction = d();
    else if (key == "power.dac_share") c.power.dac_share = d();
    else if (key == "power.array_share") c.power.array_share = d();
    else if (key == "power.digital_share") c.power.digital_share = d();
    else if (key == "run.seed") {
        const double s = d();
        require_config(s >= 0 && s == std::floor(s), key + ": expected a non-negative integer");
        c.seed = static_cast<std::uint64_t>(std::stoull(v));
    } else if (key == "run.out_dir") c.out_dir = v;
    else if (key == "run.network") c.network = v;
    else if (key == "run.dataset") c.dataset = v;
    else if (key == "run.calibration") c.calibration = v;
    else if (key == "run.eval_formats") {
        c.eval_formats.clear();
        for (const auto& s : split_list(v)) c.eval_formats.push_back(parse_number_format(s));
    } else if (key == "run.max_samples") {
        const double n = d();
        require_config(n >= 0 && n == std::floor(n), key + ": expected a non-negative integer");
        c.max_samples = static_cast<std::size_t>(n);
    } else
        throw ConfigError("unknown config key '" + key + "'");
}

/// format.name is applied first so the ADC bank and ramp follow it.
inline void apply_tree(RunConfig& c, const ptree& t) {
    if (auto f = t.get_optional<std::string>("format.name")) apply_setting(c, "format.name", *f);
    for (const auto& [section, body] : t) {
        if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            if (full != "format.name") apply_setting(c, full, value.data());
        }
    }
}

inline RunConfig parse_config(const std::string& ini_text) {
    ptree t;
    std::istringstream is(ini_text);
    try {
        boost::property_tree::read_ini(is, t);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    apply_tree(c, t);
    return c;
}

inline std::string config_to_ini(const RunConfig& c) {
    std::ostringstream os;
    boost::property_tree::write_ini(os, to_ptree(c));
    return os.str();
}

} // namespace fpcim
