#pragma once

// Unsigned 7-bit hardware floating-point codes (E2M5 / E3M4) and the INT8
// baseline quantizer.
//
// A code is [e...e m...m] packed into the low 7 bits of a byte. Value is
// (1 + m/2^M) * 2^e with exponent bias 0 and an implicit leading one; the
// all-zeros code is reserved for exact zero. No subnormals, infinities or NaNs.
// Signs never live inside the code; tensors carry them in a separate array.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpcim/errors.hpp"

namespace fpcim {

struct FpFormat {
    int exponent_bits = 2;
    int mantissa_bits = 5;

    static constexpr FpFormat e2m5() { return {2, 5}; }
    static constexpr FpFormat e3m4() { return {3, 4}; }

    constexpr bool valid() const {
        return exponent_bits + mantissa_bits == 7 && (exponent_bits == 2 || exponent_bits == 3);
    }
    constexpr int mantissa_steps() const { return 1 << mantissa_bits; }
    constexpr int max_exponent() const { return (1 << exponent_bits) - 1; }
    constexpr int code_count() const { return 1 << (exponent_bits + mantissa_bits); }

    /// Largest decodable value, e.g. 15.75 for E2M5.
    double max_value() const {
        return (2.0 - 1.0 / mantissa_steps()) * std::ldexp(1.0, max_exponent());
    }
    /// Smallest non-zero value; (1 + 2^-M) because 1.0 * 2^0 is the zero code.
    double min_value() const { return 1.0 + 1.0 / mantissa_steps(); }

    std::string name() const {
        return "e" + std::to_string(exponent_bits) + "m" + std::to_string(mantissa_bits);
    }

    friend constexpr bool operator==(const FpFormat&, const FpFormat&) = default;
};

inline FpFormat parse_format(std::string_view name) {
    if (name == "e2m5" || name == "E2M5") return FpFormat::e2m5();
    if (name == "e3m4" || name == "E3M4") return FpFormat::e3m4();
    throw ConfigError("unknown floating-point format '" + std::string(name) + "' (expected e2m5 or e3m4)");
}

struct FpCode {
    std::uint8_t exponent = 0;
    std::uint8_t mantissa = 0;
    FpFormat format = FpFormat::e2m5();

    constexpr bool is_zero() const { return exponent == 0 && mantissa == 0; }

    constexpr std::uint8_t bits() const {
        return static_cast<std::uint8_t>((exponent << format.mantissa_bits) | mantissa);
    }

    static FpCode from_bits(std::uint8_t bits, FpFormat format) {
        require(format.valid(), "invalid FpFormat");
        require(bits < format.code_count(), "code does not fit in 7 bits");
        return {static_cast<std::uint8_t>(bits >> format.mantissa_bits),
                static_cast<std::uint8_t>(bits & (format.mantissa_steps() - 1)), format};
    }

    /// Parses "1011110"-style strings, exponent first.
    static FpCode from_string(std::string_view s, FpFormat format) {
        require(s.size() == 7, "code string must have 7 characters");
        std::uint8_t bits = 0;
        for (char c : s) {
            require(c == '0' || c == '1', "code string must be binary");
            bits = static_cast<std::uint8_t>((bits << 1) | (c == '1'));
        }
        return from_bits(bits, format);
    }

    std::string to_string() const {
        std::string out(7, '0');
        const auto b = bits();
        for (int i = 0; i < 7; ++i)
            if (b & (1u << (6 - i))) out[i] = '1';
        return out;
    }

    static FpCode zero(FpFormat format) { return {0, 0, format}; }
    static FpCode top(FpFormat format) {
        return {static_cast<std::uint8_t>(format.max_exponent()),
                static_cast<std::uint8_t>(format.mantissa_steps() - 1), format};
    }

    friend constexpr bool operator==(const FpCode&, const FpCode&) = default;
};

inline double decode(const FpCode& code) {
    if (code.is_zero()) return 0.0;
    return (1.0 + static_cast<double>(code.mantissa) / code.format.mantissa_steps()) *
           std::ldexp(1.0, code.exponent);
}

enum class RoundMode { nearest, ceiling };

struct EncodeResult {
    FpCode code;
    bool underflow = false;  // non-zero input flushed to the zero code
    bool overflow = false;   // input above max_value(), clamped to the top code
};

inline EncodeResult encode(double value, FpFormat format, RoundMode mode = RoundMode::nearest) {
    require(format.valid(), "invalid FpFormat");
    require(value >= 0.0 && !std::isnan(value), "encode: value must be non-negative");

    EncodeResult r{FpCode::zero(format)};
    if (value == 0.0) return r;
    if (value > format.max_value()) {
        r.code = FpCode::top(format);
        r.overflow = true;
        return r;
    }

    const int steps = format.mantissa_steps();
    if (value < 1.0) {
        if (mode == RoundMode::nearest && value < 0.5 * format.min_value()) {
            r.underflow = true;
            return r;
        }
        r.code = {0, 1, format};
        return r;
    }

    int k = 0;
    const double f = std::frexp(value, &k);  // value = f * 2^k, f in [0.5, 1)
    int e = k - 1;
    const double scaled = (2.0 * f - 1.0) * steps;  // exact
    long m = mode == RoundMode::nearest ? std::lrint(scaled) : static_cast<long>(std::ceil(scaled));
    if (m == steps) {
        m = 0;
        ++e;
    }
    if (e > format.max_exponent()) {
        r.code = FpCode::top(format);
        return r;
    }
    if (e == 0 && m == 0) m = 1;
    r.code = {static_cast<std::uint8_t>(e), static_cast<std::uint8_t>(m), format};
    return r;
}

/// Every code of the format in bit order (128 entries).
inline std::vector<FpCode> all_codes(FpFormat format) {
    std::vector<FpCode> out;
    out.reserve(format.code_count());
    for (int b = 0; b < format.code_count(); ++b)
        out.push_back(FpCode::from_bits(static_cast<std::uint8_t>(b), format));
    return out;
}

struct QuantScale {
    double scale = 1.0;  // real value * scale lands in the code's decodable range
};

struct QuantizedTensor {
    std::vector<FpCode> codes;
    std::vector<bool> negative;
    QuantScale scale;
    std::size_t underflows = 0;
    std::size_t overflows = 0;

    std::vector<double> dequantize() const {
        std::vector<double> out(codes.size());
        for (std::size_t i = 0; i < codes.size(); ++i)
            out[i] = (negative[i] ? -1.0 : 1.0) * decode(codes[i]) / scale.scale;
        return out;
    }
};

/// Per-tensor max-abs calibration: max|values| maps onto the top code.
inline QuantScale max_abs_scale(std::span<const double> values, double top_value) {
    double max_abs = 0.0;
    for (double v : values) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs == 0.0) return {1.0};
    return {top_value / max_abs};
}

inline QuantizedTensor quantize_tensor(std::span<const double> values, FpFormat format,
                                       std::optional<QuantScale> forced = std::nullopt) {
    require(!values.empty(), "quantize_tensor: empty input");
    QuantizedTensor q;
    q.scale = forced ? *forced : max_abs_scale(values, format.max_value());
    require(q.scale.scale > 0.0, "quantize_tensor: scale must be positive");
    q.codes.reserve(values.size());
    q.negative.reserve(values.size());
    for (double v : values) {
        require(std::isfinite(v), "quantize_tensor: non-finite value");
        const auto r = encode(std::abs(v) * q.scale.scale, format);
        q.codes.push_back(r.code);
        q.negative.push_back(v < 0.0);
        q.underflows += r.underflow;
        q.overflows += r.overflow;
    }
    return q;
}

/// Uniform unsigned 256-level quantizer over [0, range]; code 255 is range.
struct Int8Quantizer {
    double range = 1.0;

    double lsb() const { return range / 255.0; }

    std::uint8_t quantize(double x) const {
        require(x >= 0.0, "int8 quantize: value must be non-negative");
        if (range <= 0.0) return 0;
        const double c = std::nearbyint(x / range * 255.0);
        return static_cast<std::uint8_t>(std::clamp(c, 0.0, 255.0));
    }
    double dequantize(std::uint8_t code) const { return static_cast<double>(code) * range / 255.0; }
};

inline std::vector<std::uint8_t> int8_quantize(std::span<const double> values, const Int8Quantizer& q) {
    std::vector<std::uint8_t> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(q.quantize(v));
    return out;
}

inline std::vector<double> int8_dequantize(std::span<const std::uint8_t> codes, const Int8Quantizer& q) {
    std::vector<double> out;
    out.reserve(codes.size());
    for (auto c : codes) out.push_back(q.dequantize(c));
    return out;
}

} // namespace fpcim
