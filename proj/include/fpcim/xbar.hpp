#pragma once

// RRAM crossbar: signed weights stored as differential conductance pairs,
// column currents by Ohm's and Kirchhoff's laws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fpcim/errors.hpp"
#include "fpcim/matrix.hpp"

namespace fpcim {

struct DeviceModel {
    double g_min = 0.5e-6;    // siemens, high-resistance state leak
    double g_max = 20e-6;     // siemens
    std::int64_t levels = 16; // programmable conductance levels per cell
    double sigma_rel = 0.0;   // relative std-dev of programming error

    void validate() const {
        require_config(g_min >= 0.0 && g_min < g_max, "device: need 0 <= g_min < g_max");
        require_config(levels >= 2, "device: need at least 2 conductance levels");
        require_config(sigma_rel >= 0.0, "device: sigma_rel must be non-negative");
    }

    double g_lsb() const { return (g_max - g_min) / static_cast<double>(levels - 1); }

    /// Integer level of a weight magnitude in [0, 1].
    std::int64_t level_of(double magnitude) const {
        return std::llround(magnitude * static_cast<double>(levels - 1));
    }

    double conductance_of_level(std::int64_t level) const {
        return g_min + static_cast<double>(level) / static_cast<double>(levels - 1) * (g_max - g_min);
    }
};

struct ConductancePair {
    Matrix g_pos;
    Matrix g_neg;

    std::size_t rows() const { return g_pos.rows(); }
    std::size_t cols() const { return g_pos.cols(); }
};

inline constexpr std::size_t kMacroRows = 576;
inline constexpr std::size_t kMacroCols = 256;

/// Programs weights (pre-scaled to [-1, 1]) into differential pairs. A positive
/// weight raises g_pos above g_min and leaves g_neg at g_min; negative is the
/// mirror. With sigma_rel > 0 every cell gets a multiplicative N(1, sigma)
/// error drawn from `seed`, then is clamped to [g_min, g_max].
inline ConductancePair program_weights(const Matrix& weights, const DeviceModel& model, std::uint64_t seed = 0) {
    model.validate();
    ConductancePair g{Matrix(weights.rows(), weights.cols(), model.g_min),
                      Matrix(weights.rows(), weights.cols(), model.g_min)};
    for (std::size_t r = 0; r < weights.rows(); ++r) {
        for (std::size_t c = 0; c < weights.cols(); ++c) {
            const double w = weights(r, c);
            require(std::isfinite(w) && std::abs(w) <= 1.0,
                    "program_weights: weight magnitude must be <= 1 (pre-scale the matrix)");
            const double cell = model.conductance_of_level(model.level_of(std::abs(w)));
            (w >= 0.0 ? g.g_pos : g.g_neg)(r, c) = cell;
        }
    }
    if (model.sigma_rel > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n01(0.0, 1.0);
        for (Matrix* m : {&g.g_pos, &g.g_neg})
            for (double& v : m->data())
                v = std::clamp(v * (1.0 + model.sigma_rel * n01(rng)), model.g_min, model.g_max);
    }
    return g;
}

/// Column currents I_j = sum_i (v_i - v_clamp) * g_ij, as the magnitude
/// flowing into the integrator. Rows are accumulated in ascending order.
inline std::vector<double> mac_currents(std::span<const double> v_in, const Matrix& g, double v_clamp = 0.0) {
    require(v_in.size() == g.rows(), "mac_currents: input length must equal crossbar rows");
    std::vector<double> out(g.cols(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        const double v = v_in[r] - v_clamp;
        if (v == 0.0) continue;
        const auto row = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) out[c] += v * row[c];
    }
    return out;
}

inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
    os.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) os << ',';
            os << m(r, c);
        }
        os << '\n';
    }
}

inline Matrix read_matrix_csv(std::istream& is) {
    std::vector<double> data;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t n = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                data.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("matrix csv: bad number '" + cell + "'");
            }
            ++n;
        }
        if (rows == 0) cols = n;
        require_config(n == cols, "matrix csv: ragged row " + std::to_string(rows + 1));
        ++rows;
    }
    return Matrix(rows, cols, std::move(data));
}

} // namespace fpcim
