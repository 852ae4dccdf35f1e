#pragma once

// Dynamic-range-adaptive FP-ADC.
//
// The column current is integrated on C_1. Each time V_O reaches v_th the
// comparator closes the next switch and the integrated charge is shared with
// the next capacitor of the bank [C, C, 2C, 4C, ...], which doubles the
// active capacitance and drops V_O back to (v_th + v_reset)/2 = v_mid. The
// number of shares is the exponent; at the sample moment V_O = V_M lies in
// [v_mid, v_th) and a single-slope ramp turns it into the mantissa.
//
// simulate_transient() walks this process event by event. convert_analytic()
// is the closed form of the same circuit and serves as its oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "fpcim/errors.hpp"
#include "fpcim/fpcodec.hpp"

namespace fpcim {

struct AdcConfig {
    double c_int = 100e-15;        // farads, C_1
    std::vector<double> cap_bank;  // farads, C_1..C_n
    double v_th = 2.0;             // comparator threshold
    double v_mid = 1.0;            // level after every charge share
    double v_reset = 0.0;          // clamp / reset level V_r
    double t_start = 5e-9;         // end of reset phase
    double t_int = 95e-9;          // integration window; sample at t_start + t_int
    double t_step = 3.125e-9;      // ramp clock period
    int ramp_steps = 32;           // 2^mantissa_bits
    bool offset_cancel = true;     // C_CDS stores the offset during reset
    double offset = 0.0;           // comparator + integrator input offset, volts

    /// Doubling bank with 2^exponent_bits capacitors, first two equal.
    static std::vector<double> doubling_bank(double c_int, FpFormat format) {
        const int n = 1 << format.exponent_bits;
        std::vector<double> bank{c_int};
        for (int k = 1; k < n; ++k) bank.push_back(c_int * std::ldexp(1.0, k - 1));
        return bank;
    }

    static AdcConfig for_format(FpFormat format, double c_int = 100e-15) {
        AdcConfig c;
        c.c_int = c_int;
        c.cap_bank = doubling_bank(c_int, format);
        c.ramp_steps = format.mantissa_steps();
        return c;
    }

    double t_sample() const { return t_start + t_int; }
    double readout_time() const { return ramp_steps * t_step; }
    /// Reset + integration + single-slope readout: 200 ns for E2M5 defaults.
    double conversion_time() const { return t_sample() + readout_time(); }
    double total_capacitance() const { return std::accumulate(cap_bank.begin(), cap_bank.end(), 0.0); }

    void validate(FpFormat format) const {
        require_config(c_int > 0.0, "adc: c_int must be positive");
        require_config(static_cast<int>(cap_bank.size()) == (1 << format.exponent_bits),
                       "adc: cap_bank size must be 2^exponent_bits");
        require_config(cap_bank.front() == c_int, "adc: cap_bank[0] must equal c_int");
        require_config(v_th > v_reset, "adc: v_th must exceed v_reset");
        require_config(std::abs(v_mid - 0.5 * (v_th + v_reset)) <= 1e-12 * std::abs(v_th),
                       "adc: v_mid must equal (v_th + v_reset) / 2");
        require_config(t_int > 0.0 && t_start >= 0.0 && t_step > 0.0, "adc: timing must be positive");
        require_config(ramp_steps == format.mantissa_steps(), "adc: ramp_steps must be 2^mantissa_bits");
    }
};

enum class AdcEventKind { reset, threshold_crossing, charge_share, sample, ramp_compare };

inline const char* to_string(AdcEventKind k) {
    switch (k) {
    case AdcEventKind::reset: return "reset";
    case AdcEventKind::threshold_crossing: return "threshold-crossing";
    case AdcEventKind::charge_share: return "charge-share";
    case AdcEventKind::sample: return "sample";
    case AdcEventKind::ramp_compare: return "ramp-compare";
    }
    return "?";
}

struct AdcEvent {
    double time = 0.0; // seconds from the start of reset
    AdcEventKind kind = AdcEventKind::reset;
    double v_o = 0.0;
    int active_caps = 1;
    std::uint32_t switches = 0; // bit k set: sw_{k+1} closed
    bool comparator = false;
    double c_active = 0.0;      // farads after the event
};

struct AdcResult {
    FpCode code;
    double v_m = 0.0;
    bool underflow = false;
    bool saturated = false;
    int shares = 0;
    std::vector<AdcEvent> trace;
};

/// Voltage after connecting an uncharged (reset) capacitor to the active bank.
inline double charge_share(double v_o, double c_active, double c_next, double v_reset) {
    return (c_active * v_o + c_next * v_reset) / (c_active + c_next);
}

/// Counter value when the ramp v_mid + k * lsb first reaches v_m, clamped to
/// the top code. Ceiling semantics: 1.271 V reads as 9 with a 32-step ramp.
inline int single_slope(double v_m, const AdcConfig& config) {
    require(v_m >= config.v_mid && v_m < config.v_th, "single_slope: V_M outside [v_mid, v_th)");
    const double lsb_units = (v_m - config.v_mid) / (config.v_th - config.v_mid) * config.ramp_steps;
    const int k = static_cast<int>(std::ceil(lsb_units));
    return std::min(k, config.ramp_steps - 1);
}

namespace detail {

inline FpCode assemble(int exponent, int mantissa, FpFormat format) {
    // exponent 0 / mantissa 0 only occurs for V_M exactly at v_mid; the code
    // is reserved for zero so it reads as the next step up
    if (exponent == 0 && mantissa == 0) mantissa = 1;
    return {static_cast<std::uint8_t>(exponent), static_cast<std::uint8_t>(mantissa), format};
}

} // namespace detail

/// Closed-form conversion of a constant current. x is the charge in units of
/// C_int * (v_mid - v_reset); with defaults x = i * t_int / c_int.
inline AdcResult convert_analytic(double i_mac, const AdcConfig& config, FpFormat format) {
    require(i_mac >= 0.0 && std::isfinite(i_mac), "convert_analytic: current must be non-negative");
    AdcResult r;
    r.code = FpCode::zero(format);
    const double span = config.v_mid - config.v_reset;
    const double x = i_mac * config.t_int / (config.c_int * span);
    if (x < 1.0) {
        r.underflow = true;
        r.v_m = config.v_reset + span * x;
        return r;
    }
    int k = 0;
    std::frexp(x, &k);
    const int e = k - 1;
    if (e > format.max_exponent()) {
        r.saturated = true;
        r.shares = format.max_exponent();
        r.v_m = config.v_th;
        r.code = FpCode::top(format);
        return r;
    }
    r.shares = e;
    r.v_m = config.v_reset + span * std::ldexp(x, -e);
    r.code = detail::assemble(e, single_slope(r.v_m, config), format);
    return r;
}

/// Piecewise-constant current over the integration window. Times are relative
/// to the start of integration; the last segment extends to the sample moment.
struct CurrentWaveform {
    struct Segment {
        double duration = 0.0; // seconds
        double current = 0.0;  // amperes
    };
    std::vector<Segment> segments;

    static CurrentWaveform constant(double i) { return {{{std::numeric_limits<double>::infinity(), i}}}; }
};

inline AdcResult simulate_transient(const CurrentWaveform& waveform, const AdcConfig& config, FpFormat format) {
    require(!waveform.segments.empty(), "simulate_transient: empty waveform");
    for (const auto& s : waveform.segments)
        require(s.current >= 0.0 && std::isfinite(s.current) && s.duration >= 0.0,
                "simulate_transient: current must be non-negative");

    AdcResult r;
    r.code = FpCode::zero(format);
    const auto caps = static_cast<int>(config.cap_bank.size());

    double t = config.t_start;
    double v = config.v_reset + (config.offset_cancel ? 0.0 : config.offset);
    double c_active = config.cap_bank.front();
    int active = 1;
    std::uint32_t sw = 0;

    auto emit = [&](double time, AdcEventKind kind, double v_o, bool cmp) {
        r.trace.push_back({time, kind, v_o, active, sw, cmp, c_active});
    };
    emit(0.0, AdcEventKind::reset, config.v_reset, false);
    emit(config.t_start, AdcEventKind::reset, v, false);

    const double t_sample = config.t_sample();
    double seg_begin = config.t_start;
    bool halted = false;
    for (std::size_t s = 0; s < waveform.segments.size() && t < t_sample && !halted; ++s) {
        const bool last = s + 1 == waveform.segments.size();
        const double i = waveform.segments[s].current;
        const double seg_end = last ? t_sample : std::min(t_sample, seg_begin + waveform.segments[s].duration);
        seg_begin = seg_end;
        while (true) {
            if (i > 0.0) {
                const double t_cross = t + (config.v_th - v) * c_active / i;
                if (t_cross <= seg_end || v + i * (seg_end - t) / c_active >= config.v_th) {
                    t = std::min(t_cross, seg_end);
                    v = config.v_th;
                    emit(t, AdcEventKind::threshold_crossing, v, true);
                    if (active == caps) {
                        r.saturated = true;
                        halted = true;
                        break;
                    }
                    const double c_next = config.cap_bank[active];
                    v = charge_share(v, c_active, c_next, config.v_reset);
                    c_active += c_next;
                    sw |= 1u << (active - 1);
                    ++active;
                    ++r.shares;
                    emit(t, AdcEventKind::charge_share, v, false);
                    continue;
                }
            }
            v += i * (seg_end - t) / c_active;
            t = seg_end;
            break;
        }
    }

    r.v_m = v;
    emit(t_sample, AdcEventKind::sample, v, false);

    if (r.saturated) {
        r.code = FpCode::top(format);
        return r;
    }
    if (r.shares == 0 && v < config.v_mid) {
        r.underflow = true;
        return r;
    }
    const int m = single_slope(v, config);
    emit(t_sample + m * config.t_step, AdcEventKind::ramp_compare, v, true);
    r.code = detail::assemble(r.shares, m, format);
    return r;
}

inline AdcResult simulate_transient(double i_mac, const AdcConfig& config, FpFormat format) {
    return simulate_transient(CurrentWaveform::constant(i_mac), config, format);
}

/// Current implied by V_O through the active capacitance (segment form):
/// (V_O - V_r) * C_active / T, T measured from the start of integration.
inline double implied_current_segment(const AdcEvent& ev, const AdcConfig& config) {
    return (ev.v_o - config.v_reset) * ev.c_active / (ev.time - config.t_start);
}

/// The same quantity through the power-of-two form C_int * V_O * 2^e / T,
/// which holds for v_reset = 0 and the doubling bank.
inline double implied_current_pow2(const AdcEvent& ev, const AdcConfig& config) {
    return config.c_int * ev.v_o * std::ldexp(1.0, ev.active_caps - 1) / (ev.time - config.t_start);
}

struct Int8AdcResult {
    std::uint8_t code = 0;
    double v_sampled = 0.0;
    bool saturated = false;
    double conversion_time = 0.0;
};

/// Readout stretch of the fixed-range INT ADC: two extra bits at the same LSB
/// accuracy cost 2^2 times the FP ramp.
inline constexpr int kInt8RampFactor = 4;

/// Conventional fixed-range single-slope ADC: integrate on the whole bank,
/// one 256-step ramp over [v_reset, v_th). Same x scale as the FP path, so the
/// code quantizes x uniformly over [0, 16) (E2M5 bank).
inline Int8AdcResult int8_baseline_convert(double i_mac, const AdcConfig& config) {
    require(i_mac >= 0.0 && std::isfinite(i_mac), "int8_baseline_convert: current must be non-negative");
    Int8AdcResult r;
    r.v_sampled = config.v_reset + i_mac * config.t_int / config.total_capacitance();
    const double frac = (r.v_sampled - config.v_reset) / (config.v_th - config.v_reset);
    const double k = std::ceil(frac * 256.0);
    r.saturated = k > 255.0;
    r.code = static_cast<std::uint8_t>(std::min(k, 255.0));
    r.conversion_time = config.t_sample() + kInt8RampFactor * config.readout_time();
    return r;
}

/// Value of an INT8 ADC code on the FP path's x scale: full bank / (v_mid - v_reset).
inline double int8_adc_value(std::uint8_t code, const AdcConfig& config) {
    const double full_x = config.total_capacitance() / config.c_int * (config.v_th - config.v_reset) /
                          (config.v_mid - config.v_reset);
    return code * full_x / 256.0;
}

inline std::string switch_string(std::uint32_t sw, int n_switches) {
    std::string s(static_cast<std::size_t>(n_switches), '0');
    for (int k = 0; k < n_switches; ++k)
        if (sw & (1u << k)) s[k] = '1';
    return s;
}

inline const char* phase_of(const AdcEvent& ev, const AdcConfig& config) {
    if (ev.kind == AdcEventKind::reset) return ev.time < config.t_start ? "reset" : "integrate";
    if (ev.kind == AdcEventKind::sample) return "sample";
    if (ev.kind == AdcEventKind::ramp_compare) return "convert";
    return "integrate";
}

inline void write_trace_csv(std::ostream& os, const AdcResult& r, const AdcConfig& config) {
    os << "time_ns,v_o_volts,active_caps,sw_bits,comparator_out,phase\n";
    os.precision(10);
    const int n_sw = static_cast<int>(config.cap_bank.size()) - 1;
    for (const auto& ev : r.trace)
        os << ev.time * 1e9 << ',' << ev.v_o << ',' << ev.active_caps << ',' << switch_string(ev.switches, n_sw)
           << ',' << int(ev.comparator) << ',' << phase_of(ev, config) << '\n';
}

} // namespace fpcim
