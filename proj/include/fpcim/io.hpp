#pragma once

// File plumbing shared by the tools: atomic writes, raw little-endian float32
// blobs, and JSON views of plans and macro results.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpcim/cimmacro.hpp"
#include "fpcim/errors.hpp"
#include "fpcim/mapper.hpp"

namespace fpcim {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Writes via a sibling temp file and rename, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigError("cannot write " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw ConfigError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
    }
}

namespace detail {
inline std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    return v;
}
} // namespace detail

/// Raw little-endian float32 blob with exactly `expected` elements.
inline std::vector<double> read_f32_blob(const fs::path& path, std::size_t expected) {
    const std::string bytes = read_file(path);
    if (bytes.size() != expected * 4)
        throw ConfigError("shape mismatch: " + path.filename().string() + " holds " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected * 4));
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint32_t u = 0;
        std::memcpy(&u, bytes.data() + 4 * i, 4);
        out[i] = static_cast<double>(std::bit_cast<float>(detail::to_little(u)));
    }
    return out;
}

inline std::string f32_blob(std::span<const double> values) {
    std::string bytes(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t u = detail::to_little(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
        std::memcpy(bytes.data() + 4 * i, &u, 4);
    }
    return bytes;
}

inline json to_json(const TilePlan& p) {
    json tiles = json::array();
    for (const auto& t : p.tiles)
        tiles.push_back({{"id", t.id},
                         {"macro", t.macro_id},
                         {"rows", {t.row_begin, t.row_end}},
                         {"cols", {t.col_begin, t.col_end}}});
    return {{"matrix_rows", p.matrix_rows},
            {"matrix_cols", p.matrix_cols},
            {"row_blocks", p.row_blocks},
            {"col_blocks", p.col_blocks},
            {"tiles", tiles},
            {"partial_sum_groups", p.partial_sum_groups}};
}

inline const char* to_string(Readout r) {
    switch (r) {
    case Readout::fp_adc: return "fp_adc";
    case Readout::fp_adc_transient: return "fp_adc_transient";
    case Readout::int8_adc: return "int8_adc";
    case Readout::identity: return "identity";
    }
    return "?";
}

inline json to_json(const MacroConfig& c) {
    return {{"rows", c.rows},
            {"cols", c.cols},
            {"format", c.format.name()},
            {"latency_ns", c.latency * 1e9},
            {"readout", to_string(c.readout)},
            {"dac", {{"v_unit", c.dac.v_unit}, {"v_supply", c.dac.v_supply},
                     {"gain_error", c.dac.gain_error}, {"ladder_error", c.dac.ladder_error}}},
            {"adc", {{"c_int_fF", c.adc.c_int * 1e15}, {"cap_bank_fF", [&] {
                          std::vector<double> v;
                          for (double x : c.adc.cap_bank) v.push_back(x * 1e15);
                          return v;
                      }()},
                     {"v_th", c.adc.v_th}, {"v_mid", c.adc.v_mid}, {"v_reset", c.adc.v_reset},
                     {"t_start_ns", c.adc.t_start * 1e9}, {"t_int_ns", c.adc.t_int * 1e9},
                     {"t_step_ns", c.adc.t_step * 1e9}, {"ramp_steps", c.adc.ramp_steps},
                     {"offset_cancel", c.adc.offset_cancel}, {"offset", c.adc.offset}}},
            {"device", {{"g_min_uS", c.device.g_min * 1e6}, {"g_max_uS", c.device.g_max * 1e6},
                        {"levels", c.device.levels}, {"sigma_rel", c.device.sigma_rel}}},
            {"scale_chain", scale_chain(c)}};
}

inline json to_json(const MacroResult& r, const MacroConfig& c) {
    json cols = json::array();
    const bool fp = c.readout == Readout::fp_adc || c.readout == Readout::fp_adc_transient;
    for (std::size_t j = 0; j < r.digital_values.size(); ++j) {
        json col = {{"col", j},
                    {"i_pos_uA", r.i_pos[j] * 1e6},
                    {"i_neg_uA", r.i_neg[j] * 1e6},
                    {"pos_value", r.pos[j].value},
                    {"neg_value", r.neg[j].value},
                    {"digital", r.digital_values[j]},
                    {"pos_underflow", r.pos[j].underflow},
                    {"neg_underflow", r.neg[j].underflow},
                    {"pos_saturated", r.pos[j].saturated},
                    {"neg_saturated", r.neg[j].saturated}};
        if (fp) {
            col["pos_code"] = r.pos_code(j, c.format).to_string();
            col["neg_code"] = r.neg_code(j, c.format).to_string();
        } else if (c.readout == Readout::int8_adc) {
            col["pos_code"] = r.pos[j].bits;
            col["neg_code"] = r.neg[j].bits;
        }
        cols.push_back(col);
    }
    return {{"columns", cols}};
}

} // namespace fpcim
