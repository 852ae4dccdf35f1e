#pragma once

// Independent reference computations used by the tests. None of these call
// into the library's conversion code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

/// Every decodable value of a format, built from the bit layout alone.
inline std::vector<double> value_table(int exponent_bits, int mantissa_bits) {
    std::vector<double> v;
    for (int bits = 0; bits < (1 << (exponent_bits + mantissa_bits)); ++bits) {
        const int e = bits >> mantissa_bits;
        const int m = bits & ((1 << mantissa_bits) - 1);
        v.push_back(bits == 0 ? 0.0 : (1.0 + m / double(1 << mantissa_bits)) * double(1 << e));
    }
    return v;
}

/// Index of the nearest table entry; ties go to the even mantissa.
inline int nearest_index(const std::vector<double>& table, double x) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(table.size()); ++i) {
        const double d = std::abs(table[i] - x);
        if (d < best_d || (d == best_d && (i % 2 == 0))) {
            best = i;
            best_d = d;
        }
    }
    return best;
}

inline double nearest_value(const std::vector<double>& table, double x) { return table[nearest_index(table, x)]; }

/// Laplace(0, 1) samples by inverse CDF from a 64-bit Mersenne twister.
inline std::vector<double> laplacian(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<double> out(n);
    for (auto& x : out) {
        const double p = u(rng);
        x = -std::copysign(1.0, p) * std::log(1.0 - 2.0 * std::abs(p));
    }
    return out;
}

/// Max-abs scaled nearest-value quantization MSE, signs kept out of band.
inline double fp_mse(const std::vector<double>& xs, const std::vector<double>& table) {
    double mx = 0;
    for (double x : xs) mx = std::max(mx, std::abs(x));
    const double top = *std::max_element(table.begin(), table.end());
    const double s = top / mx;
    double acc = 0;
    for (double x : xs) {
        const double q = nearest_value(table, std::abs(x) * s) / s;
        const double d = std::abs(x) - q;
        acc += d * d;
    }
    return acc / xs.size();
}

/// Unsigned 256-level uniform grid over [0, max|x|], signs out of band.
inline double int8_mse(const std::vector<double>& xs) {
    double mx = 0;
    for (double x : xs) mx = std::max(mx, std::abs(x));
    double acc = 0;
    for (double x : xs) {
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < 256; ++c) best = std::min(best, std::abs(std::abs(x) - c * mx / 255.0));
        acc += best * best;
    }
    return acc / xs.size();
}

/// Direct nested-loop convolution; weights (out, in, k, k), input (c, h, w).
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t c1, std::size_t h, std::size_t w,
                                  const std::vector<double>& wt, std::size_t c2, std::size_t k, std::size_t stride,
                                  std::size_t pad, std::size_t& oh, std::size_t& ow) {
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (w + 2 * pad - k) / stride + 1;
    std::vector<double> out(c2 * oh * ow, 0.0);
    for (std::size_t co = 0; co < c2; ++co)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0;
                for (std::size_t ci = 0; ci < c1; ++ci)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long iy = long(y * stride + ky) - long(pad);
                            const long ix = long(x * stride + kx) - long(pad);
                            if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                            acc += in[(ci * h + iy) * w + ix] * wt[((co * c1 + ci) * k + ky) * k + kx];
                        }
                out[(co * oh + y) * ow + x] = acc;
            }
    return out;
}

} // namespace oracle
