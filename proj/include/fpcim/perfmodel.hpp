#pragma once

// Calibrated latency / throughput / power model. Block powers are inputs; the
// defaults are back-solved from published efficiency and ratio targets, so the
// tests check arithmetic consistency rather than circuit physics.

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "fpcim/adc.hpp"
#include "fpcim/errors.hpp"
#include "fpcim/fpcodec.hpp"
#include "fpcim/xbar.hpp"

namespace fpcim {

enum class PerfVariant { e2m5, e3m4, int8 };

inline const char* to_string(PerfVariant v) {
    switch (v) {
    case PerfVariant::e2m5: return "E2M5";
    case PerfVariant::e3m4: return "E3M4";
    case PerfVariant::int8: return "INT8";
    }
    return "?";
}

struct BlockPower {
    double dac = 0.0;
    double array = 0.0;
    double adc = 0.0;
    double digital = 0.0;

    double total() const { return dac + array + adc + digital; }
    bool valid() const { return dac >= 0 && array >= 0 && adc >= 0 && digital >= 0; }
};

/// Calibration targets. Everything in EnergyParams::calibrated() follows from these.
struct PowerTargets {
    double e2m5_efficiency = 19.89e12;   // ops/J
    double e3m4_efficiency = 14.12e12;
    double adc_reduction = 0.564;        // E2M5 ADC power vs INT8 ADC power
    double total_reduction = 0.465;      // E2M5 total vs INT8 total
    // Split of the non-ADC power, shared by all variants.
    double dac_share = 0.35;
    double array_share = 0.45;
    double digital_share = 0.20;
};

struct EnergyParams {
    BlockPower e2m5;
    BlockPower e3m4;
    BlockPower int8;

    const BlockPower& of(PerfVariant v) const {
        switch (v) {
        case PerfVariant::e3m4: return e3m4;
        case PerfVariant::int8: return int8;
        default: return e2m5;
        }
    }

    void validate() const {
        for (const auto* b : {&e2m5, &e3m4, &int8}) {
            require_config(b->valid(), "power: block powers must be >= 0");
            require_config(b->total() > 0.0, "power: total power must be > 0");
        }
    }

    /// Back-solves block powers for 576x256 macros at the default latencies.
    /// With P_fp fixed by throughput / efficiency:
    ///   P_int8 = P_fp / (1 - total_reduction)
    ///   ADC_int8 = (P_int8 - P_fp) / adc_reduction, ADC_fp = (1 - adc_reduction) ADC_int8
    ///   rest = P_fp - ADC_fp, split by the share fractions.
    /// E3M4 reuses the same non-ADC blocks; its ADC takes the remainder.
    static EnergyParams calibrated(const PowerTargets& t = {});
};

inline double default_latency(PerfVariant v) {
    switch (v) {
    case PerfVariant::e2m5: return AdcConfig::for_format(FpFormat::e2m5()).conversion_time();
    case PerfVariant::e3m4: return AdcConfig::for_format(FpFormat::e3m4()).conversion_time();
    case PerfVariant::int8: {
        const auto a = AdcConfig::for_format(FpFormat::e2m5());
        return a.t_sample() + kInt8RampFactor * a.readout_time();
    }
    }
    return 0.0;
}

/// ops/s with one multiply and one add per cell per macro cycle.
inline double throughput(std::size_t rows, std::size_t cols, double latency) {
    require(latency > 0.0, "throughput: latency must be > 0");
    return 2.0 * static_cast<double>(rows) * static_cast<double>(cols) / latency;
}

/// ops/J.
inline double efficiency(double ops_per_second, double power) {
    require(power > 0.0, "efficiency: power must be > 0");
    return ops_per_second / power;
}

inline EnergyParams EnergyParams::calibrated(const PowerTargets& t) {
    require_config(t.adc_reduction > 0 && t.adc_reduction < 1, "power: adc_reduction must be in (0, 1)");
    require_config(t.total_reduction > 0 && t.total_reduction < 1, "power: total_reduction must be in (0, 1)");
    require_config(t.dac_share >= 0 && t.array_share >= 0 && t.digital_share >= 0 &&
                       t.dac_share + t.array_share + t.digital_share > 0,
                   "power: shares must be >= 0 and not all zero");
    const double p_fp = throughput(kMacroRows, kMacroCols, default_latency(PerfVariant::e2m5)) / t.e2m5_efficiency;
    const double p_e3 = throughput(kMacroRows, kMacroCols, default_latency(PerfVariant::e3m4)) / t.e3m4_efficiency;
    const double p_int8 = p_fp / (1.0 - t.total_reduction);
    const double adc_int8 = (p_int8 - p_fp) / t.adc_reduction;
    const double adc_fp = (1.0 - t.adc_reduction) * adc_int8;
    const double rest = p_fp - adc_fp;
    require_config(rest >= 0.0, "power: targets leave negative non-ADC power");
    const double shares = t.dac_share + t.array_share + t.digital_share;
    BlockPower common{rest * t.dac_share / shares, rest * t.array_share / shares, 0.0,
                      rest * t.digital_share / shares};
    EnergyParams p;
    p.e2m5 = common;
    p.e2m5.adc = adc_fp;
    p.int8 = common;
    p.int8.adc = adc_int8;
    p.e3m4 = common;
    p.e3m4.adc = p_e3 - rest;
    require_config(p.e3m4.adc >= 0.0, "power: E3M4 target below the shared non-ADC power");
    return p;
}

struct PerfReport {
    PerfVariant variant = PerfVariant::e2m5;
    std::size_t rows = kMacroRows;
    std::size_t cols = kMacroCols;
    double latency = 0.0;     // s
    double throughput = 0.0;  // ops/s
    BlockPower power;         // W
    double efficiency = 0.0;  // ops/J
};

inline PerfReport perf_report(PerfVariant v, const EnergyParams& params, std::size_t rows = kMacroRows,
                              std::size_t cols = kMacroCols, double latency = 0.0) {
    PerfReport r;
    r.variant = v;
    r.rows = rows;
    r.cols = cols;
    r.latency = latency > 0.0 ? latency : default_latency(v);
    r.throughput = throughput(rows, cols, r.latency);
    r.power = params.of(v);
    r.efficiency = efficiency(r.throughput, r.power.total());
    return r;
}

struct AdcComparison {
    double fp_time = 0.0;     // s
    double int8_time = 0.0;   // s
    double time_ratio = 0.0;  // int8 / fp
    int ramp_factor = kInt8RampFactor;
    double fp_adc_power = 0.0;
    double int8_adc_power = 0.0;
    double power_reduction = 0.0; // 1 - fp / int8
};

inline AdcComparison adc_comparison(const EnergyParams& params, const AdcConfig& adc = AdcConfig::for_format(FpFormat::e2m5())) {
    AdcComparison c;
    c.fp_time = adc.conversion_time();
    c.int8_time = adc.t_sample() + kInt8RampFactor * adc.readout_time();
    c.time_ratio = c.int8_time / c.fp_time;
    c.fp_adc_power = params.e2m5.adc;
    c.int8_adc_power = params.int8.adc;
    c.power_reduction = 1.0 - c.fp_adc_power / c.int8_adc_power;
    return c;
}

/// One row per variant, E2M5 / E3M4 / INT8.
inline std::vector<PerfReport> total_comparison(const EnergyParams& params) {
    return {perf_report(PerfVariant::e2m5, params), perf_report(PerfVariant::e3m4, params),
            perf_report(PerfVariant::int8, params)};
}

inline std::string perf_csv(const std::vector<PerfReport>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "variant,rows,cols,latency_ns,throughput_gops,dac_mw,array_mw,adc_mw,digital_mw,total_mw,efficiency_tops_w\n";
    for (const auto& r : rows)
        os << to_string(r.variant) << ',' << r.rows << ',' << r.cols << ',' << r.latency * 1e9 << ','
           << r.throughput * 1e-9 << ',' << r.power.dac * 1e3 << ',' << r.power.array * 1e3 << ','
           << r.power.adc * 1e3 << ',' << r.power.digital * 1e3 << ',' << r.power.total() * 1e3 << ','
           << r.efficiency * 1e-12 << '\n';
    return os.str();
}

} // namespace fpcim
