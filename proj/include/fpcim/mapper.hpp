#pragma once

// Layer-to-macro mapping. A conv kernel C2 x C1 x k x k becomes a
// (C1*k*k) x C2 matrix, an FC layer an in x out matrix; either is cut into
// tiles of at most 576 x 256. Tiles that share a column block hold row slices
// of the same outputs, and their results are partial sums added digitally.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fpcim/errors.hpp"
#include "fpcim/matrix.hpp"
#include "fpcim/xbar.hpp"

namespace fpcim {

enum class LayerKind { conv, fc };

struct LayerSpec {
    LayerKind kind = LayerKind::fc;
    // conv
    std::size_t in_channels = 0;
    std::size_t kernel = 1;
    std::size_t out_channels = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    // fc
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    static LayerSpec conv(std::size_t c1, std::size_t k, std::size_t c2, std::size_t stride = 1,
                          std::size_t padding = 0) {
        LayerSpec s;
        s.kind = LayerKind::conv;
        s.in_channels = c1;
        s.kernel = k;
        s.out_channels = c2;
        s.stride = stride;
        s.padding = padding;
        return s;
    }
    static LayerSpec fc(std::size_t in, std::size_t out) {
        LayerSpec s;
        s.kind = LayerKind::fc;
        s.in_features = in;
        s.out_features = out;
        return s;
    }

    void validate() const {
        if (kind == LayerKind::conv)
            require(in_channels >= 1 && kernel >= 1 && out_channels >= 1 && stride >= 1,
                    "conv layer dimensions must be >= 1");
        else
            require(in_features >= 1 && out_features >= 1, "fc layer dimensions must be >= 1");
    }

    std::size_t matrix_rows() const { return kind == LayerKind::conv ? in_channels * kernel * kernel : in_features; }
    std::size_t matrix_cols() const { return kind == LayerKind::conv ? out_channels : out_features; }

    std::size_t out_size(std::size_t in) const {
        require(in + 2 * padding >= kernel, "conv: input smaller than kernel");
        return (in + 2 * padding - kernel) / stride + 1;
    }
};

struct MacroDims {
    std::size_t rows = kMacroRows;
    std::size_t cols = kMacroCols;
};

struct Tile {
    std::size_t id = 0;
    std::size_t row_begin = 0, row_end = 0;
    std::size_t col_begin = 0, col_end = 0;
    std::size_t macro_id = 0;

    std::size_t rows() const { return row_end - row_begin; }
    std::size_t cols() const { return col_end - col_begin; }
};

struct TilePlan {
    std::size_t matrix_rows = 0;
    std::size_t matrix_cols = 0;
    std::size_t row_blocks = 0;
    std::size_t col_blocks = 0;
    std::vector<Tile> tiles;
    /// One group per column block, listing its row-slice tiles in row order.
    std::vector<std::vector<std::size_t>> partial_sum_groups;

    /// Groups that actually need the digital adder (more than one row slice).
    std::size_t adder_groups() const {
        std::size_t n = 0;
        for (const auto& g : partial_sum_groups) n += g.size() > 1;
        return n;
    }
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

inline TilePlan plan_matrix(std::size_t rows, std::size_t cols, MacroDims dims = {}) {
    require(rows >= 1 && cols >= 1, "plan_matrix: empty weight matrix");
    require(dims.rows >= 1 && dims.cols >= 1, "plan_matrix: empty macro");
    TilePlan p;
    p.matrix_rows = rows;
    p.matrix_cols = cols;
    p.row_blocks = ceil_div(rows, dims.rows);
    p.col_blocks = ceil_div(cols, dims.cols);
    for (std::size_t cb = 0; cb < p.col_blocks; ++cb) {
        std::vector<std::size_t> group;
        for (std::size_t rb = 0; rb < p.row_blocks; ++rb) {
            Tile t;
            t.id = p.tiles.size();
            t.macro_id = t.id;
            t.row_begin = rb * dims.rows;
            t.row_end = std::min(rows, t.row_begin + dims.rows);
            t.col_begin = cb * dims.cols;
            t.col_end = std::min(cols, t.col_begin + dims.cols);
            group.push_back(t.id);
            p.tiles.push_back(t);
        }
        p.partial_sum_groups.push_back(std::move(group));
    }
    return p;
}

inline TilePlan map_conv(const LayerSpec& layer, MacroDims dims = {}) {
    require(layer.kind == LayerKind::conv, "map_conv: not a conv layer");
    layer.validate();
    return plan_matrix(layer.matrix_rows(), layer.matrix_cols(), dims);
}

inline TilePlan map_fc(const LayerSpec& layer, MacroDims dims = {}) {
    require(layer.kind == LayerKind::fc, "map_fc: not an fc layer");
    layer.validate();
    return plan_matrix(layer.matrix_rows(), layer.matrix_cols(), dims);
}

inline TilePlan map_layer(const LayerSpec& layer, MacroDims dims = {}) {
    return layer.kind == LayerKind::conv ? map_conv(layer, dims) : map_fc(layer, dims);
}

/// Conv weights in (C2, C1, k, k) order to the (C1*k*k) x C2 crossbar matrix.
inline Matrix conv_weight_matrix(std::span<const double> w, const LayerSpec& layer) {
    const std::size_t kk = layer.kernel * layer.kernel;
    require(w.size() == layer.out_channels * layer.in_channels * kk, "conv weights: size mismatch");
    Matrix m(layer.matrix_rows(), layer.matrix_cols());
    for (std::size_t co = 0; co < layer.out_channels; ++co)
        for (std::size_t r = 0; r < layer.matrix_rows(); ++r) m(r, co) = w[co * layer.matrix_rows() + r];
    return m;
}

/// FC weights in (out, in) order to the in x out crossbar matrix.
inline Matrix fc_weight_matrix(std::span<const double> w, const LayerSpec& layer) {
    require(w.size() == layer.in_features * layer.out_features, "fc weights: size mismatch");
    return Matrix(layer.out_features, layer.in_features, std::vector<double>(w.begin(), w.end())).transposed();
}

/// One (C1*k*k) column per output position, rows ordered (channel, ky, kx) to
/// match conv_weight_matrix. Columns run over output positions row-major.
inline Matrix im2col(const Tensor3& input, const LayerSpec& layer) {
    require(layer.kind == LayerKind::conv, "im2col: not a conv layer");
    require(input.channels == layer.in_channels, "im2col: channel count mismatch");
    const std::size_t oh = layer.out_size(input.height);
    const std::size_t ow = layer.out_size(input.width);
    const std::size_t k = layer.kernel;
    Matrix cols(layer.matrix_rows(), oh * ow);
    for (std::size_t c = 0; c < input.channels; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const std::size_t r = (c * k + ky) * k + kx;
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * layer.stride + ky) -
                                        static_cast<std::ptrdiff_t>(layer.padding);
                        const auto ix = static_cast<std::ptrdiff_t>(ox * layer.stride + kx) -
                                        static_cast<std::ptrdiff_t>(layer.padding);
                        double v = 0.0;
                        if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(input.height) &&
                            ix < static_cast<std::ptrdiff_t>(input.width))
                            v = input.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        cols(r, oy * ow + ox) = v;
                    }
            }
    return cols;
}

/// Runs every tile on every input vector (a column of `inputs`, matrix_rows
/// long) and adds each group's partial sums in row order. `tile_mac` receives
/// the tile and its input slice and returns tile.cols() wide-precision values.
/// Output is matrix_cols x inputs.cols(); re-quantization is left to the caller
/// so it happens once per output element.
template <class TileMac>
Matrix execute_plan(const TilePlan& plan, const Matrix& inputs, TileMac&& tile_mac) {
    require(inputs.rows() == plan.matrix_rows, "execute_plan: input rows must equal weight matrix rows");
    Matrix out(plan.matrix_cols, inputs.cols(), 0.0);
    std::vector<double> slice;
    for (std::size_t n = 0; n < inputs.cols(); ++n) {
        for (const auto& group : plan.partial_sum_groups) {
            for (std::size_t tid : group) {
                const Tile& t = plan.tiles.at(tid);
                slice.resize(t.rows());
                for (std::size_t r = t.row_begin; r < t.row_end; ++r) slice[r - t.row_begin] = inputs(r, n);
                const std::vector<double> partial = tile_mac(t, std::span<const double>(slice));
                require(partial.size() == t.cols(), "execute_plan: tile returned wrong width");
                for (std::size_t c = 0; c < t.cols(); ++c) out(t.col_begin + c, n) += partial[c];
            }
        }
    }
    return out;
}

/// Exact digital readout: each tile is the plain product of its weight block.
struct IdentityTileMac {
    const Matrix& weights;

    std::vector<double> operator()(const Tile& t, std::span<const double> x) const {
        std::vector<double> y(t.cols(), 0.0);
        for (std::size_t r = 0; r < t.rows(); ++r) {
            if (x[r] == 0.0) continue;
            for (std::size_t c = 0; c < t.cols(); ++c) y[c] += x[r] * weights(t.row_begin + r, t.col_begin + c);
        }
        return y;
    }
};

} // namespace fpcim
