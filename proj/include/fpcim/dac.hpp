#pragma once

// FP-DAC: a shared 2^M-level reference ladder selects V_mantissa, then a
// programmable-gain stage driven by a one-hot exponent decoder multiplies by
// 2^E. Output is v_unit * decode(code) when ideal.

#include <cmath>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "fpcim/errors.hpp"
#include "fpcim/fpcodec.hpp"

namespace fpcim {

struct DacConfig {
    double v_unit = 0.1;       // volts produced by decoded value 1.0
    double v_supply = 2.5;     // analog rail
    double gain_error = 0.0;   // relative PGA gain error on non-unity gains
    double ladder_error = 0.0; // relative error of the ladder step

    void validate(FpFormat format) const {
        require_config(v_unit > 0.0, "dac: v_unit must be positive");
        require_config(v_unit * format.max_value() < v_supply,
                       "dac: v_unit * max code value must stay below v_supply");
    }
};

inline std::vector<double> ladder_levels(const DacConfig& config, FpFormat format) {
    const int steps = format.mantissa_steps();
    std::vector<double> out(steps);
    for (int m = 0; m < steps; ++m)
        out[m] = config.v_unit * (1.0 + static_cast<double>(m) / steps * (1.0 + config.ladder_error));
    return out;
}

/// One-hot exponent select, as the 2-4 (or 3-8) decoder drives the PGA switches.
inline unsigned exponent_one_hot(const FpCode& code) { return 1u << code.exponent; }

inline double dac_convert(const FpCode& code, const DacConfig& config) {
    if (code.is_zero()) return 0.0;
    const int steps = code.format.mantissa_steps();
    const double v_mantissa =
        config.v_unit * (1.0 + static_cast<double>(code.mantissa) / steps * (1.0 + config.ladder_error));
    double gain = static_cast<double>(exponent_one_hot(code));
    if (code.exponent > 0) gain *= 1.0 + config.gain_error;
    const double v = v_mantissa * gain;
    if (v > config.v_supply)
        throw ConfigError("dac: output " + std::to_string(v) + " V exceeds supply (code " + code.to_string() + ")");
    return v;
}

inline std::vector<double> dac_convert(std::span<const FpCode> codes, const DacConfig& config) {
    std::vector<double> out;
    out.reserve(codes.size());
    for (const auto& c : codes) out.push_back(dac_convert(c, config));
    return out;
}

struct SweepRow {
    FpCode code;
    double conductance = 0.0; // siemens
    double current = 0.0;     // amperes
};

/// Single-cell current for every code and every conductance.
inline std::vector<SweepRow> linearity_sweep(std::span<const double> conductances, const DacConfig& config,
                                             FpFormat format) {
    config.validate(format);
    std::vector<SweepRow> rows;
    for (double g : conductances) {
        require(g >= 0.0, "linearity_sweep: conductance must be non-negative");
        for (const auto& code : all_codes(format)) rows.push_back({code, g, dac_convert(code, config) * g});
    }
    return rows;
}

struct GroupFit {
    double conductance = 0.0;
    int exponent = 0;
    double slope = 0.0;     // amperes per mantissa code
    double intercept = 0.0; // amperes
    double r_squared = 1.0;
    double max_residual = 0.0;
    int points = 0;
};

/// Least-squares line of current vs mantissa per (conductance, exponent)
/// group. The reserved zero code is not part of any segment and is skipped.
inline std::vector<GroupFit> fit_exponent_groups(std::span<const SweepRow> rows) {
    std::map<std::pair<double, int>, std::vector<std::pair<double, double>>> groups;
    for (const auto& r : rows) {
        if (r.code.is_zero()) continue;
        groups[{r.conductance, r.code.exponent}].emplace_back(r.code.mantissa, r.current);
    }
    std::vector<GroupFit> out;
    for (const auto& [key, pts] : groups) {
        const double n = static_cast<double>(pts.size());
        double sx = 0, sy = 0;
        for (auto [x, y] : pts) { sx += x; sy += y; }
        const double mx = sx / n, my = sy / n;
        double sxx = 0, sxy = 0, syy = 0;
        for (auto [x, y] : pts) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
            syy += (y - my) * (y - my);
        }
        GroupFit f;
        f.conductance = key.first;
        f.exponent = key.second;
        f.points = static_cast<int>(pts.size());
        f.slope = sxx > 0 ? sxy / sxx : 0.0;
        f.intercept = my - f.slope * mx;
        double ss_res = 0;
        for (auto [x, y] : pts) {
            const double e = y - (f.intercept + f.slope * x);
            ss_res += e * e;
            f.max_residual = std::max(f.max_residual, std::abs(e));
        }
        f.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
        out.push_back(f);
    }
    return out;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
    os << "code_bits,exponent,mantissa,conductance_uS,current_uA\n";
    os.precision(12);
    for (const auto& r : rows)
        os << r.code.to_string() << ',' << int(r.code.exponent) << ',' << int(r.code.mantissa) << ','
           << r.conductance * 1e6 << ',' << r.current * 1e6 << '\n';
}

} // namespace fpcim
