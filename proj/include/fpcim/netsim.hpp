#pragma once

// Small-network inference on simulated macros.
//
// A network is an ordered list of conv / fc / relu / maxpool / flatten layers
// loaded from a JSON manifest plus raw float32 blobs. Every conv and fc layer
// is mapped onto macros; between layers the digital unit adds partial sums and
// bias in double precision, applies relu / pooling, and the next compute layer
// re-quantizes its input once to the activation format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fpcim/cimmacro.hpp"
#include "fpcim/errors.hpp"
#include "fpcim/fpcodec.hpp"
#include "fpcim/io.hpp"
#include "fpcim/mapper.hpp"
#include "fpcim/matrix.hpp"
#include "fpcim/xbar.hpp"

namespace fpcim {

enum class LayerType { conv, fc, relu, maxpool, flatten };

inline const char* to_string(LayerType t) {
    switch (t) {
    case LayerType::conv: return "conv";
    case LayerType::fc: return "fc";
    case LayerType::relu: return "relu";
    case LayerType::maxpool: return "maxpool";
    case LayerType::flatten: return "flatten";
    }
    return "?";
}

inline LayerType parse_layer_type(std::string_view s) {
    if (s == "conv") return LayerType::conv;
    if (s == "fc") return LayerType::fc;
    if (s == "relu") return LayerType::relu;
    if (s == "maxpool") return LayerType::maxpool;
    if (s == "flatten") return LayerType::flatten;
    throw ConfigError("unknown layer type '" + std::string(s) + "'");
}

struct Shape {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t size() const { return c * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

struct Layer {
    LayerType type = LayerType::relu;
    LayerSpec spec;            // conv / fc
    std::size_t pool = 2;      // maxpool window and stride
    Matrix weights;            // crossbar orientation: matrix_rows x matrix_cols
    std::vector<double> bias;  // matrix_cols entries, may be empty
    std::string weights_file;
    std::string bias_file;

    bool is_compute() const { return type == LayerType::conv || type == LayerType::fc; }
};

struct TileCalibration {
    double max_column_sum = 0.0; // max over samples, positions, columns of the larger differential half
    double max_input_sum = 0.0;  // max over samples, positions of sum |a| over the tile rows
};

struct LayerCalibration {
    double input_range = 1.0; // max |input| over the calibration set (1 if all zero)
    TilePlan plan;
    std::vector<TileCalibration> tiles;
};

struct NetworkGraph {
    std::string name;
    Shape input_shape;
    std::vector<Layer> layers;
    std::vector<std::optional<LayerCalibration>> calibration; // per layer, set for compute layers
    json metadata = json::object();

    bool calibrated() const { return calibration.size() == layers.size(); }

    /// Output shape of every layer; throws on incompatible neighbours.
    std::vector<Shape> shapes() const {
        std::vector<Shape> out;
        Shape s = input_shape;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const Layer& l = layers[i];
            const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.type) + "): ";
            switch (l.type) {
            case LayerType::conv:
                if (s.c != l.spec.in_channels) throw ConfigError(where + "input channels do not match");
                s = {l.spec.out_channels, l.spec.out_size(s.h), l.spec.out_size(s.w)};
                break;
            case LayerType::fc:
                if (s.size() != l.spec.in_features) throw ConfigError(where + "input size does not match in_features");
                s = {l.spec.out_features, 1, 1};
                break;
            case LayerType::maxpool:
                if (l.pool < 1 || s.h < l.pool || s.w < l.pool) throw ConfigError(where + "pool window too large");
                s = {s.c, s.h / l.pool, s.w / l.pool};
                break;
            case LayerType::flatten: s = {s.size(), 1, 1}; break;
            case LayerType::relu: break;
            }
            out.push_back(s);
        }
        return out;
    }

    Shape output_shape() const {
        auto s = shapes();
        return s.empty() ? input_shape : s.back();
    }
};

namespace detail {

inline std::size_t get_dim(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) throw ConfigError(std::string("manifest: missing '") + key + "'");
    return j[key].get<std::size_t>();
}

inline Shape shape_of(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("manifest: shape must be [c, h, w]");
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

} // namespace detail

/// Reads a manifest such as
///   {"name": ..., "input_shape": [1, 8, 8],
///    "layers": [{"type": "conv", "in_channels": 1, "out_channels": 8, "kernel": 3,
///                "stride": 1, "padding": 1, "weights": "conv1_w.bin", "bias": "conv1_b.bin"},
///               {"type": "relu"}, {"type": "maxpool", "size": 2}, {"type": "flatten"},
///               {"type": "fc", "in_features": 128, "out_features": 10, ...}]}
/// Blob paths are relative to the manifest. Conv blobs are (out, in, k, k),
/// fc blobs (out, in), both row-major float32.
inline NetworkGraph load_network(const fs::path& manifest_path) {
    const json m = read_json(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    NetworkGraph g;
    g.name = m.value("name", manifest_path.stem().string());
    if (!m.contains("input_shape") || !m.contains("layers")) throw ConfigError("manifest: need input_shape and layers");
    g.input_shape = detail::shape_of(m["input_shape"]);
    for (auto it = m.begin(); it != m.end(); ++it)
        if (it.key() != "name" && it.key() != "input_shape" && it.key() != "layers") g.metadata[it.key()] = it.value();

    for (const auto& jl : m["layers"]) {
        Layer l;
        l.type = parse_layer_type(jl.at("type").get<std::string>());
        if (l.type == LayerType::conv) {
            l.spec = LayerSpec::conv(detail::get_dim(jl, "in_channels"), detail::get_dim(jl, "kernel"),
                                     detail::get_dim(jl, "out_channels"), jl.value("stride", std::size_t{1}),
                                     jl.value("padding", std::size_t{0}));
        } else if (l.type == LayerType::fc) {
            l.spec = LayerSpec::fc(detail::get_dim(jl, "in_features"), detail::get_dim(jl, "out_features"));
        } else if (l.type == LayerType::maxpool) {
            l.pool = jl.value("size", std::size_t{2});
        }
        if (l.is_compute()) {
            try {
                l.spec.validate();
            } catch (const ContractViolation& e) {
                throw ConfigError(std::string("manifest: ") + e.what());
            }
            l.weights_file = jl.at("weights").get<std::string>();
            const auto w = read_f32_blob(dir / l.weights_file, l.spec.matrix_rows() * l.spec.matrix_cols());
            for (double v : w)
                if (!std::isfinite(v)) throw ConfigError("non-finite weight in " + l.weights_file);
            l.weights = l.type == LayerType::conv ? conv_weight_matrix(w, l.spec) : fc_weight_matrix(w, l.spec);
            if (jl.contains("bias")) {
                l.bias_file = jl["bias"].get<std::string>();
                l.bias = read_f32_blob(dir / l.bias_file, l.spec.matrix_cols());
                for (double v : l.bias)
                    if (!std::isfinite(v)) throw ConfigError("non-finite bias in " + l.bias_file);
            }
        }
        g.layers.push_back(std::move(l));
    }
    g.shapes();
    return g;
}

inline void save_network(const NetworkGraph& g, const fs::path& manifest_path) {
    const fs::path dir = manifest_path.parent_path();
    json m = g.metadata;
    m["name"] = g.name;
    m["input_shape"] = {g.input_shape.c, g.input_shape.h, g.input_shape.w};
    json layers = json::array();
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const Layer& l = g.layers[i];
        json jl = {{"type", to_string(l.type)}};
        if (l.type == LayerType::maxpool) jl["size"] = l.pool;
        if (l.is_compute()) {
            std::vector<double> w;
            if (l.type == LayerType::conv) {
                jl.update({{"in_channels", l.spec.in_channels}, {"out_channels", l.spec.out_channels},
                           {"kernel", l.spec.kernel}, {"stride", l.spec.stride}, {"padding", l.spec.padding}});
                for (std::size_t co = 0; co < l.spec.out_channels; ++co)
                    for (std::size_t r = 0; r < l.spec.matrix_rows(); ++r) w.push_back(l.weights(r, co));
            } else {
                jl.update({{"in_features", l.spec.in_features}, {"out_features", l.spec.out_features}});
                w = l.weights.transposed().data();
            }
            const std::string wf = l.weights_file.empty() ? "layer" + std::to_string(i) + "_w.bin" : l.weights_file;
            write_file_atomic(dir / wf, f32_blob(w));
            jl["weights"] = wf;
            if (!l.bias.empty()) {
                const std::string bf = l.bias_file.empty() ? "layer" + std::to_string(i) + "_b.bin" : l.bias_file;
                write_file_atomic(dir / bf, f32_blob(l.bias));
                jl["bias"] = bf;
            }
        }
        layers.push_back(jl);
    }
    m["layers"] = layers;
    write_file_atomic(manifest_path, m.dump(2) + "\n");
}

struct Dataset {
    Shape shape;
    std::vector<Tensor3> images;
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

/// {"count": N, "shape": [c, h, w], "images": "x.bin", "labels": "y.bin"};
/// images float32, labels int32, both little-endian.
inline Dataset load_dataset(const fs::path& manifest_path) {
    const json m = read_json(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    Dataset d;
    d.shape = detail::shape_of(m.at("shape"));
    const auto n = m.at("count").get<std::size_t>();
    const auto pixels = read_f32_blob(dir / m.at("images").get<std::string>(), n * d.shape.size());
    const std::string lb = read_file(dir / m.at("labels").get<std::string>());
    if (lb.size() != n * 4) throw ConfigError("shape mismatch: label blob length");
    for (std::size_t i = 0; i < n; ++i) {
        d.images.emplace_back(d.shape.c, d.shape.h, d.shape.w,
                              std::vector<double>(pixels.begin() + i * d.shape.size(),
                                                  pixels.begin() + (i + 1) * d.shape.size()));
        std::uint32_t u = 0;
        std::memcpy(&u, lb.data() + 4 * i, 4);
        d.labels.push_back(static_cast<int>(static_cast<std::int32_t>(detail::to_little(u))));
    }
    return d;
}

/// Forward pass with a pluggable compute kernel. `compute(index, layer, X)`
/// receives the layer input as matrix_rows x positions and returns
/// matrix_cols x positions. `outputs`, when given, receives every layer's output.
template <class Compute>
Tensor3 forward(const NetworkGraph& g, const Tensor3& input, Compute&& compute, std::vector<Tensor3>* outputs = nullptr) {
    require(Shape{input.channels, input.height, input.width} == g.input_shape, "forward: input shape mismatch");
    Tensor3 x = input;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const Layer& l = g.layers[i];
        switch (l.type) {
        case LayerType::conv: {
            const Matrix cols = im2col(x, l.spec);
            const std::size_t oh = l.spec.out_size(x.height), ow = l.spec.out_size(x.width);
            Matrix y = compute(i, l, cols);
            x = Tensor3(l.spec.out_channels, oh, ow, std::move(y.data()));
            break;
        }
        case LayerType::fc: {
            require(x.size() == l.spec.in_features, "forward: fc input size mismatch");
            Matrix y = compute(i, l, Matrix(x.size(), 1, x.data));
            x = Tensor3(l.spec.out_features, 1, 1, std::move(y.data()));
            break;
        }
        case LayerType::relu:
            for (double& v : x.data) v = std::max(v, 0.0);
            break;
        case LayerType::maxpool: {
            const std::size_t p = l.pool;
            Tensor3 y(x.channels, x.height / p, x.width / p);
            for (std::size_t c = 0; c < y.channels; ++c)
                for (std::size_t oy = 0; oy < y.height; ++oy)
                    for (std::size_t ox = 0; ox < y.width; ++ox) {
                        double m = -std::numeric_limits<double>::infinity();
                        for (std::size_t dy = 0; dy < p; ++dy)
                            for (std::size_t dx = 0; dx < p; ++dx) m = std::max(m, x.at(c, oy * p + dy, ox * p + dx));
                        y.at(c, oy, ox) = m;
                    }
            x = std::move(y);
            break;
        }
        case LayerType::flatten: {
            const std::size_t n = x.size();
            x = Tensor3(n, 1, 1, std::move(x.data));
            break;
        }
        }
        if (outputs) outputs->push_back(x);
    }
    return x;
}

/// Dense double-precision product plus bias.
inline Matrix dense_layer(const Layer& l, const Matrix& x) {
    Matrix y(l.weights.cols(), x.cols(), 0.0);
    for (std::size_t n = 0; n < x.cols(); ++n) {
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double a = x(r, n);
            if (a == 0.0) continue;
            for (std::size_t c = 0; c < y.rows(); ++c) y(c, n) += a * l.weights(r, c);
        }
        if (!l.bias.empty())
            for (std::size_t c = 0; c < y.rows(); ++c) y(c, n) += l.bias[c];
    }
    return y;
}

inline std::vector<double> infer_ideal(const NetworkGraph& g, const Tensor3& input,
                                       std::vector<Tensor3>* outputs = nullptr) {
    auto compute = [](std::size_t, const Layer& l, const Matrix& x) { return dense_layer(l, x); };
    return forward(g, input, compute, outputs).data;
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Max-abs of every compute layer's input over the calibration runs of the
/// float model, plus per-tile column-sum statistics that size the macros.
inline NetworkGraph ptq_calibrate(const NetworkGraph& graph, std::span<const Tensor3> samples,
                                  MacroDims dims = {}) {
    require(!samples.empty(), "ptq_calibrate: need at least one calibration sample");
    NetworkGraph g = graph;
    g.calibration.assign(g.layers.size(), std::nullopt);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (!g.layers[i].is_compute()) continue;
        LayerCalibration lc;
        lc.input_range = 0.0;
        lc.plan = map_layer(g.layers[i].spec, dims);
        lc.tiles.resize(lc.plan.tiles.size());
        g.calibration[i] = std::move(lc);
    }
    auto record = [&](std::size_t i, const Layer& l, const Matrix& x) {
        LayerCalibration& lc = *g.calibration[i];
        for (double v : x.data()) lc.input_range = std::max(lc.input_range, std::abs(v));
        for (std::size_t t = 0; t < lc.plan.tiles.size(); ++t) {
            const Tile& tile = lc.plan.tiles[t];
            TileCalibration& tc = lc.tiles[t];
            for (std::size_t n = 0; n < x.cols(); ++n) {
                double in_sum = 0.0;
                for (std::size_t r = tile.row_begin; r < tile.row_end; ++r) in_sum += std::abs(x(r, n));
                tc.max_input_sum = std::max(tc.max_input_sum, in_sum);
                for (std::size_t c = tile.col_begin; c < tile.col_end; ++c) {
                    double pos = 0.0, neg = 0.0;
                    for (std::size_t r = tile.row_begin; r < tile.row_end; ++r) {
                        const double p = x(r, n) * l.weights(r, c);
                        (p >= 0.0 ? pos : neg) += std::abs(p);
                    }
                    tc.max_column_sum = std::max({tc.max_column_sum, pos, neg});
                }
            }
        }
        return dense_layer(l, x);
    };
    for (const auto& s : samples) forward(g, s, record);
    for (auto& lc : g.calibration)
        if (lc && lc->input_range == 0.0) lc->input_range = 1.0;
    return g;
}

enum class NumberFormat { ideal, identity, e2m5, e3m4, int8 };

inline const char* to_string(NumberFormat f) {
    switch (f) {
    case NumberFormat::ideal: return "ideal";
    case NumberFormat::identity: return "identity";
    case NumberFormat::e2m5: return "e2m5";
    case NumberFormat::e3m4: return "e3m4";
    case NumberFormat::int8: return "int8";
    }
    return "?";
}

inline NumberFormat parse_number_format(std::string_view s) {
    if (s == "ideal") return NumberFormat::ideal;
    if (s == "identity") return NumberFormat::identity;
    if (s == "e2m5" || s == "E2M5") return NumberFormat::e2m5;
    if (s == "e3m4" || s == "E3M4") return NumberFormat::e3m4;
    if (s == "int8" || s == "INT8") return NumberFormat::int8;
    throw ConfigError("unknown number format '" + std::string(s) + "' (ideal, identity, e2m5, e3m4, int8)");
}

/// Macro defaults for an activation format: which ADC reads the columns and
/// which DAC drives the rows.
inline MacroConfig macro_config_for(NumberFormat f, const std::optional<MacroConfig>& base = std::nullopt) {
    const FpFormat fp = f == NumberFormat::e3m4 ? FpFormat::e3m4() : FpFormat::e2m5();
    MacroConfig c = MacroConfig::for_format(fp);
    if (base) {
        c.device = base->device;
        c.adc.c_int = base->adc.c_int;
        c.adc.cap_bank = AdcConfig::doubling_bank(base->adc.c_int, fp);
        c.adc.t_int = base->adc.t_int;
        c.adc.t_start = base->adc.t_start;
        c.dac.v_supply = base->dac.v_supply;
        c.dac.gain_error = base->dac.gain_error;
        c.dac.ladder_error = base->dac.ladder_error;
        if (base->format == fp) c.dac.v_unit = base->dac.v_unit;
    }
    switch (f) {
    case NumberFormat::int8:
        c.readout = Readout::int8_adc;
        c.latency = c.adc.t_sample() + kInt8RampFactor * c.adc.readout_time();
        break;
    case NumberFormat::identity: c.readout = Readout::identity; break;
    default: c.readout = base ? (base->readout == Readout::fp_adc_transient ? Readout::fp_adc_transient : Readout::fp_adc)
                              : Readout::fp_adc;
    }
    return c;
}

struct CimOptions {
    NumberFormat format = NumberFormat::e2m5;
    std::optional<MacroConfig> macro; // device / ADC overrides; format-specific parts are derived
    std::uint64_t seed = 1;
};

/// Per-layer probe for error statistics.
struct LayerProbe {
    std::size_t layer = 0;
    Matrix input;             // matrix_rows x positions, real units
    Matrix output;            // matrix_cols x positions, before relu
    double act_sq_error = 0;  // sum of squared input quantization error (real units)
    std::size_t act_count = 0;
};

/// A calibrated network programmed onto simulated macros for one format.
class CimNetwork {
public:
    struct ProgrammedTile {
        ConductancePair g;
        MacroConfig config;
        double weight_scale = 1.0; // crossbar weight = layer weight * weight_scale
    };
    struct MappedLayer {
        TilePlan plan;
        std::vector<ProgrammedTile> tiles;
        double act_scale = 1.0;    // hardware value = real activation * act_scale
    };

    CimNetwork(const NetworkGraph& graph, CimOptions options) : graph_(graph), options_(std::move(options)) {
        if (options_.format == NumberFormat::ideal) return;
        if (!graph_.calibrated()) throw ContractViolation("infer_cim: network is not calibrated (run ptq_calibrate)");
        base_ = macro_config_for(options_.format, options_.macro);
        base_.validate();
        layers_.resize(graph_.layers.size());
        for (std::size_t i = 0; i < graph_.layers.size(); ++i)
            if (graph_.layers[i].is_compute()) layers_[i] = map_layer(i);
    }

    const MacroConfig& base_config() const { return base_; }
    const std::vector<std::optional<MappedLayer>>& mapped_layers() const { return layers_; }

    std::vector<double> infer(const Tensor3& input, std::vector<LayerProbe>* probes = nullptr) const {
        if (options_.format == NumberFormat::ideal) {
            if (!probes) return infer_ideal(graph_, input);
            auto compute = [&](std::size_t i, const Layer& l, const Matrix& x) {
                Matrix y = dense_layer(l, x);
                probes->push_back({i, x, y, 0.0, x.size()});
                return y;
            };
            return forward(graph_, input, compute).data;
        }
        auto compute = [&](std::size_t i, const Layer& l, const Matrix& x) {
            return run_layer(i, l, x, probes);
        };
        return forward(graph_, input, compute).data;
    }

    /// Hardware activation value (sign included) for a real activation.
    double quantize_activation(double a, double act_scale) const {
        const double mag = std::abs(a) * act_scale;
        double q = 0.0;
        switch (options_.format) {
        case NumberFormat::e2m5:
        case NumberFormat::e3m4: q = decode(encode(mag, base_.format).code); break;
        case NumberFormat::int8: q = std::min(std::nearbyint(mag / kInt8ValueStep), 255.0) * kInt8ValueStep; break;
        default: q = mag;
        }
        return a < 0.0 ? -q : q;
    }

private:
    /// Largest hardware activation value of the format.
    double top_value() const {
        switch (options_.format) {
        case NumberFormat::e2m5:
        case NumberFormat::e3m4: return base_.format.max_value();
        case NumberFormat::int8: return 255.0 * kInt8ValueStep;
        default: return FpFormat::e2m5().max_value();
        }
    }

    /// Normalizes each tile's weights to the full level range and picks the
    /// tile's DAC unit voltage so the calibrated worst-case column lands at the
    /// top of the ADC range (never above the configured v_unit).
    MappedLayer map_layer(std::size_t index) const {
        const Layer& l = graph_.layers[index];
        const LayerCalibration& lc = *graph_.calibration[index];
        MappedLayer m;
        m.plan = lc.plan;
        m.act_scale = top_value() / lc.input_range;
        const DeviceModel& dev = base_.device;
        const double levels = static_cast<double>(dev.levels - 1);
        const double x_per_volt_siemens = base_.adc.t_int / (base_.adc.c_int * (base_.adc.v_mid - base_.adc.v_reset));
        for (const Tile& t : m.plan.tiles) {
            ProgrammedTile pt;
            Matrix w = l.weights.block(t.row_begin, t.row_end, t.col_begin, t.col_end);
            double max_w = 0.0;
            for (double v : w.data()) max_w = std::max(max_w, std::abs(v));
            pt.weight_scale = max_w > 0.0 ? 1.0 / max_w : 1.0;
            for (double& v : w.data()) v = std::clamp(v * pt.weight_scale, -1.0, 1.0);
            pt.config = base_;
            pt.config.rows = kMacroRows;
            pt.config.cols = kMacroCols;
            const TileCalibration& tc = lc.tiles[t.id];
            // x = v_unit * x_per_volt_siemens * (g_lsb * sum(q * level) + g_min * sum(q))
            const double worst = m.act_scale * (dev.g_lsb() * pt.weight_scale * levels * tc.max_column_sum +
                                                dev.g_min * tc.max_input_sum);
            if (worst > 0.0)
                pt.config.dac.v_unit = std::min(base_.dac.v_unit, target_x() / (x_per_volt_siemens * worst));
            pt.g = program_weights(w, dev, options_.seed * 1000003u + index * 1009u + t.id);
            m.tiles.push_back(std::move(pt));
        }
        return m;
    }

    double target_x() const {
        switch (options_.format) {
        case NumberFormat::e2m5:
        case NumberFormat::e3m4: return base_.format.max_value();
        case NumberFormat::int8: return 255.0 * kInt8ValueStep;
        default: return FpFormat::e2m5().max_value();
        }
    }

    Matrix run_layer(std::size_t index, const Layer& l, const Matrix& x, std::vector<LayerProbe>* probes) const {
        const MappedLayer& m = *layers_[index];
        Matrix q(x.rows(), x.cols());
        double sq = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            q.data()[k] = quantize_activation(x.data()[k], m.act_scale);
            const double back = q.data()[k] / m.act_scale;
            sq += (back - x.data()[k]) * (back - x.data()[k]);
        }
        const double levels = static_cast<double>(base_.device.levels - 1);
        auto tile_mac = [&](const Tile& t, std::span<const double> hw) {
            const ProgrammedTile& pt = m.tiles[t.id];
            std::vector<bool> neg(hw.size());
            for (std::size_t r = 0; r < hw.size(); ++r) neg[r] = hw[r] < 0.0;
            MacroResult res;
            switch (options_.format) {
            case NumberFormat::e2m5:
            case NumberFormat::e3m4: {
                std::vector<FpCode> codes;
                codes.reserve(hw.size());
                for (double v : hw) codes.push_back(encode(std::abs(v), pt.config.format).code);
                res = macro_mac(codes, neg, pt.g, pt.config);
                break;
            }
            case NumberFormat::int8: {
                std::vector<std::uint8_t> codes;
                codes.reserve(hw.size());
                for (double v : hw) codes.push_back(static_cast<std::uint8_t>(std::nearbyint(std::abs(v) / kInt8ValueStep)));
                res = macro_mac_int8(codes, neg, pt.g, pt.config);
                break;
            }
            default: {
                std::vector<double> mags(hw.size());
                for (std::size_t r = 0; r < hw.size(); ++r) mags[r] = std::abs(hw[r]);
                res = macro_mac_values(mags, neg, pt.g, pt.config);
            }
            }
            const double to_real = 1.0 / (m.act_scale * pt.weight_scale * levels);
            for (double& d : res.digital_values) d *= to_real;
            return res.digital_values;
        };
        Matrix y = execute_plan(m.plan, q, tile_mac);
        if (!l.bias.empty())
            for (std::size_t c = 0; c < y.rows(); ++c)
                for (std::size_t n = 0; n < y.cols(); ++n) y(c, n) += l.bias[c];
        if (probes) probes->push_back({index, x, y, sq, x.size()});
        return y;
    }

    const NetworkGraph& graph_;
    CimOptions options_;
    MacroConfig base_;
    std::vector<std::optional<MappedLayer>> layers_;
};

inline std::vector<double> infer_cim(const NetworkGraph& graph, const Tensor3& input, const CimOptions& options) {
    return CimNetwork(graph, options).infer(input);
}

struct LayerStats {
    std::size_t layer = 0;
    double output_mse = 0.0;     // vs the float model's output of the same layer
    double output_max_abs = 0.0;
    double act_quant_mse = 0.0;  // input activation quantization error
};

struct FormatReport {
    NumberFormat format = NumberFormat::ideal;
    double accuracy = 0.0;   // top-1 vs labels
    double agreement = 0.0;  // top-1 vs the float model
    std::vector<LayerStats> layers;
};

struct EvalReport {
    std::size_t samples = 0;
    double float_accuracy = 0.0;
    std::vector<FormatReport> formats;
};

inline EvalReport evaluate(const NetworkGraph& graph, const Dataset& data, std::span<const NumberFormat> formats,
                           const CimOptions& base = {}) {
    require(data.size() > 0, "evaluate: empty dataset");
    require(data.labels.size() == data.size(), "evaluate: label count mismatch");
    EvalReport rep;
    rep.samples = data.size();

    std::vector<std::size_t> float_top(data.size());
    std::vector<std::vector<LayerProbe>> float_probes(data.size());
    const CimNetwork float_net(graph, {NumberFormat::ideal, base.macro, base.seed});
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto scores = float_net.infer(data.images[s], &float_probes[s]);
        float_top[s] = argmax(scores);
        correct += static_cast<int>(float_top[s]) == data.labels[s];
    }
    rep.float_accuracy = static_cast<double>(correct) / data.size();

    for (NumberFormat f : formats) {
        CimOptions opt = base;
        opt.format = f;
        const CimNetwork net(graph, opt);
        FormatReport fr;
        fr.format = f;
        std::size_t hits = 0, agree = 0;
        std::vector<double> sq, mx, act_sq;
        std::vector<std::size_t> count, act_count;
        std::vector<std::size_t> layer_ids;
        for (std::size_t s = 0; s < data.size(); ++s) {
            std::vector<LayerProbe> probes;
            const auto top = argmax(net.infer(data.images[s], &probes));
            hits += static_cast<int>(top) == data.labels[s];
            agree += top == float_top[s];
            if (layer_ids.empty()) {
                for (const auto& p : probes) layer_ids.push_back(p.layer);
                sq.assign(probes.size(), 0.0);
                mx.assign(probes.size(), 0.0);
                act_sq.assign(probes.size(), 0.0);
                count.assign(probes.size(), 0);
                act_count.assign(probes.size(), 0);
            }
            for (std::size_t k = 0; k < probes.size(); ++k) {
                const auto& a = probes[k].output.data();
                const auto& b = float_probes[s][k].output.data();
                for (std::size_t e = 0; e < a.size(); ++e) {
                    const double d = a[e] - b[e];
                    sq[k] += d * d;
                    mx[k] = std::max(mx[k], std::abs(d));
                }
                count[k] += a.size();
                act_sq[k] += probes[k].act_sq_error;
                act_count[k] += probes[k].act_count;
            }
        }
        fr.accuracy = static_cast<double>(hits) / data.size();
        fr.agreement = static_cast<double>(agree) / data.size();
        for (std::size_t k = 0; k < layer_ids.size(); ++k)
            fr.layers.push_back({layer_ids[k], sq[k] / count[k], mx[k], act_count[k] ? act_sq[k] / act_count[k] : 0.0});
        rep.formats.push_back(std::move(fr));
    }
    return rep;
}

inline json to_json(const EvalReport& r) {
    json formats = json::array();
    for (const auto& f : r.formats) {
        json layers = json::array();
        for (const auto& l : f.layers)
            layers.push_back({{"layer", l.layer}, {"output_mse", l.output_mse},
                              {"output_max_abs", l.output_max_abs}, {"act_quant_mse", l.act_quant_mse}});
        formats.push_back({{"format", to_string(f.format)}, {"accuracy", f.accuracy},
                           {"agreement", f.agreement}, {"layers", layers}});
    }
    return {{"samples", r.samples}, {"float_accuracy", r.float_accuracy}, {"formats", formats}};
}

/// One row per (format, layer).
inline std::string to_csv(const EvalReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "format,accuracy,agreement,layer,output_mse,output_max_abs,act_quant_mse\n";
    for (const auto& f : r.formats)
        for (const auto& l : f.layers)
            os << to_string(f.format) << ',' << f.accuracy << ',' << f.agreement << ',' << l.layer << ','
               << l.output_mse << ',' << l.output_max_abs << ',' << l.act_quant_mse << '\n';
    return os.str();
}

} // namespace fpcim
