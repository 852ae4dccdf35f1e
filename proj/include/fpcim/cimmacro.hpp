#pragma once

// One 576x256 macro: FP-DACs drive the rows, each signed weight sits in a
// differential column pair, and every column of the pair is read out by its
// own unsigned ADC. The digital unit subtracts the two readings in double
// precision and rescales by the scale chain into "decode x level" units.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fpcim/adc.hpp"
#include "fpcim/dac.hpp"
#include "fpcim/errors.hpp"
#include "fpcim/fpcodec.hpp"
#include "fpcim/matrix.hpp"
#include "fpcim/xbar.hpp"

namespace fpcim {

enum class Readout {
    fp_adc,            // closed-form FP-ADC
    fp_adc_transient,  // event-driven FP-ADC
    int8_adc,          // fixed-range 8-bit single-slope baseline
    identity,          // ideal readout, returns the analog x value
};

/// Hardware units of an INT8 activation code: code / 16 spans [0, 16) like E2M5.
inline constexpr double kInt8ValueStep = 1.0 / 16.0;

struct MacroConfig {
    std::size_t rows = kMacroRows;
    std::size_t cols = kMacroCols;
    FpFormat format = FpFormat::e2m5();
    DacConfig dac;
    AdcConfig adc = AdcConfig::for_format(FpFormat::e2m5());
    DeviceModel device;
    double latency = 200e-9;
    Readout readout = Readout::fp_adc;

    /// Defaults for a format. E3M4 needs a 10x smaller v_unit so its 2^7 PGA
    /// gain stays under the supply, and its 16-step ramp finishes in 150 ns.
    static MacroConfig for_format(FpFormat format) {
        MacroConfig c;
        c.format = format;
        c.adc = AdcConfig::for_format(format);
        if (format == FpFormat::e3m4()) c.dac.v_unit = 0.01;
        c.latency = c.adc.conversion_time();
        return c;
    }

    void validate() const {
        require_config(format.valid(), "macro: invalid format");
        require_config(rows >= 1 && rows <= kMacroRows && cols >= 1 && cols <= kMacroCols,
                       "macro: dimensions must be within 576x256");
        require_config(latency > adc.t_int, "macro: latency must exceed the integration window");
        dac.validate(format);
        adc.validate(format);
        device.validate();
    }
};

/// Factor from sum_i decode(x_i) * level_ij to the ADC's normalized x:
/// v_unit * g_lsb * t_int / (c_int * (v_mid - v_reset)).
inline double scale_chain(const MacroConfig& c) {
    return c.dac.v_unit * c.device.g_lsb() * c.adc.t_int / (c.adc.c_int * (c.adc.v_mid - c.adc.v_reset));
}

struct ColumnReadout {
    std::uint8_t bits = 0;  // FP code bits, or the INT8 code
    double value = 0.0;     // readout on the x scale
    bool underflow = false;
    bool saturated = false;
};

struct MacroResult {
    std::vector<ColumnReadout> pos;
    std::vector<ColumnReadout> neg;
    std::vector<double> digital_values;
    std::vector<double> i_pos;  // amperes, for inspection
    std::vector<double> i_neg;

    FpCode pos_code(std::size_t col, FpFormat f) const { return FpCode::from_bits(pos[col].bits, f); }
    FpCode neg_code(std::size_t col, FpFormat f) const { return FpCode::from_bits(neg[col].bits, f); }
};

inline ColumnReadout read_column(double current, const MacroConfig& c) {
    ColumnReadout out;
    switch (c.readout) {
    case Readout::fp_adc:
    case Readout::fp_adc_transient: {
        const auto r = c.readout == Readout::fp_adc ? convert_analytic(current, c.adc, c.format)
                                                    : simulate_transient(current, c.adc, c.format);
        out.bits = r.code.bits();
        out.value = decode(r.code);
        out.underflow = r.underflow;
        out.saturated = r.saturated;
        break;
    }
    case Readout::int8_adc: {
        const auto r = int8_baseline_convert(current, c.adc);
        out.bits = r.code;
        out.value = int8_adc_value(r.code, c.adc);
        out.saturated = r.saturated;
        break;
    }
    case Readout::identity:
        out.value = current * c.adc.t_int / (c.adc.c_int * (c.adc.v_mid - c.adc.v_reset));
        break;
    }
    return out;
}

/// Core MAC on row voltages. Rows flagged negative drive the pair with its
/// lines swapped, so their product lands on the opposite column.
inline MacroResult macro_mac_voltages(std::span<const double> volts, const std::vector<bool>& negative,
                                      const ConductancePair& g, const MacroConfig& c) {
    require(volts.size() == g.rows(), "macro_mac: input length must equal programmed rows");
    require(negative.empty() || negative.size() == volts.size(), "macro_mac: sign vector length mismatch");
    require(g.rows() <= c.rows && g.cols() <= c.cols, "macro_mac: conductance matrix exceeds macro");

    MacroResult r;
    bool any_negative = false;
    for (std::size_t i = 0; i < negative.size(); ++i) any_negative = any_negative || (negative[i] && volts[i] != 0.0);
    if (!any_negative) {
        r.i_pos = mac_currents(volts, g.g_pos, c.adc.v_reset);
        r.i_neg = mac_currents(volts, g.g_neg, c.adc.v_reset);
    } else {
        ConductancePair routed = g;
        for (std::size_t i = 0; i < volts.size(); ++i) {
            if (!negative[i]) continue;
            auto p = routed.g_pos.row(i);
            auto n = routed.g_neg.row(i);
            std::swap_ranges(p.begin(), p.end(), n.begin());
        }
        r.i_pos = mac_currents(volts, routed.g_pos, c.adc.v_reset);
        r.i_neg = mac_currents(volts, routed.g_neg, c.adc.v_reset);
    }

    const double s = scale_chain(c);
    r.pos.reserve(g.cols());
    r.neg.reserve(g.cols());
    r.digital_values.reserve(g.cols());
    for (std::size_t j = 0; j < g.cols(); ++j) {
        r.pos.push_back(read_column(r.i_pos[j], c));
        r.neg.push_back(read_column(r.i_neg[j], c));
        r.digital_values.push_back((r.pos.back().value - r.neg.back().value) / s);
    }
    return r;
}

/// FP activations through the FP-DAC. A DAC saturation aborts with ConfigError.
inline MacroResult macro_mac(std::span<const FpCode> inputs, const std::vector<bool>& negative,
                             const ConductancePair& g, const MacroConfig& c) {
    for (const auto& code : inputs) require(code.format == c.format, "macro_mac: input format mismatch");
    const auto volts = dac_convert(inputs, c.dac);
    return macro_mac_voltages(volts, negative, g, c);
}

/// INT8 activations through a linear DAC: v = v_unit * code / 16.
inline MacroResult macro_mac_int8(std::span<const std::uint8_t> inputs, const std::vector<bool>& negative,
                                  const ConductancePair& g, const MacroConfig& c) {
    std::vector<double> volts;
    volts.reserve(inputs.size());
    for (auto code : inputs) {
        const double v = c.dac.v_unit * code * kInt8ValueStep;
        require_config(v <= c.dac.v_supply, "dac: int8 output exceeds supply");
        volts.push_back(v);
    }
    return macro_mac_voltages(volts, negative, g, c);
}

/// Unquantized magnitudes through an ideal linear DAC: v = v_unit * value.
inline MacroResult macro_mac_values(std::span<const double> magnitudes, const std::vector<bool>& negative,
                                    const ConductancePair& g, const MacroConfig& c) {
    std::vector<double> volts;
    volts.reserve(magnitudes.size());
    for (double m : magnitudes) {
        require(m >= 0.0, "macro_mac_values: magnitudes must be non-negative");
        volts.push_back(c.dac.v_unit * m);
    }
    return macro_mac_voltages(volts, negative, g, c);
}

/// Golden model in the same units as MacroResult::digital_values:
/// sum_i x_i * (+/- level(|w_ij|)), weights rounded to the device levels only.
inline std::vector<double> ideal_reference(std::span<const double> inputs, const Matrix& weights,
                                           const DeviceModel& device) {
    require(inputs.size() == weights.rows(), "ideal_reference: input length must equal weight rows");
    std::vector<double> out(weights.cols(), 0.0);
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        for (std::size_t j = 0; j < weights.cols(); ++j) {
            const double w = weights(i, j);
            const double level = static_cast<double>(device.level_of(std::abs(w)));
            out[j] += inputs[i] * (w < 0.0 ? -level : level);
        }
    }
    return out;
}

} // namespace fpcim
