// fpcim: experiment runner over the simulator library.
//
// Exit status: 0 success, 2 configuration error, 3 contract violation.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fpcim/adc.hpp"
#include "fpcim/cimmacro.hpp"
#include "fpcim/config.hpp"
#include "fpcim/dac.hpp"
#include "fpcim/fpcodec.hpp"
#include "fpcim/io.hpp"
#include "fpcim/mapper.hpp"
#include "fpcim/netsim.hpp"
#include "fpcim/perfmodel.hpp"

using namespace fpcim;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::string format;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_file, "INI config file");
    cmd->add_option("--set", c.sets, "override a config key: section.key=value (repeatable)");
    cmd->add_option("-f,--format", c.format, "E2M5 or E3M4");
    cmd->add_option("-o,--out-dir", c.out_dir, "output directory");
    cmd->add_option("--seed", c.seed, "random seed");
}

/// Defaults, then the file, then flags.
RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config_file.empty() ? RunConfig{} : parse_config(read_file(c.config_file));
    if (!c.format.empty()) apply_setting(cfg, "format.name", c.format);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
        apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
    if (c.seed) cfg.seed = *c.seed;
    cfg.validate();
    return cfg;
}

void emit(const RunConfig& cfg, const std::string& name, const std::string& content) {
    const fs::path p = fs::path(cfg.out_dir) / name;
    write_file_atomic(p, content);
    std::cout << "wrote " << p.string() << '\n';
}

std::string codec_csv(FpFormat f) {
    std::ostringstream os;
    os.precision(10);
    os << "code_bits,exponent,mantissa,value\n";
    for (const auto& code : all_codes(f))
        os << code.to_string() << ',' << int(code.exponent) << ',' << int(code.mantissa) << ',' << decode(code) << '\n';
    return os.str();
}

json adc_json(const AdcResult& r, double current, const RunConfig& cfg) {
    int shares = 0;
    for (const auto& ev : r.trace) shares += ev.kind == AdcEventKind::charge_share;
    return {{"current_uA", current * 1e6}, {"format", cfg.format.name()}, {"code", r.code.to_string()},
            {"exponent", r.code.exponent}, {"mantissa", r.code.mantissa}, {"value", decode(r.code)},
            {"v_m", r.v_m}, {"underflow", r.underflow}, {"saturated", r.saturated},
            {"charge_shares", shares}};
}

LayerSpec parse_layer(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("--layer expects conv:C1,K,C2[,stride,pad] or fc:IN,OUT");
    const std::string kind = s.substr(0, colon);
    std::vector<std::size_t> v;
    for (const auto& t : detail::split_list(s.substr(colon + 1))) {
        const double d = detail::to_double("--layer", t);
        if (d < 0 || d != std::floor(d)) throw ConfigError("--layer: dimensions must be non-negative integers");
        v.push_back(static_cast<std::size_t>(d));
    }
    if (kind == "conv" && (v.size() == 3 || v.size() == 5))
        return LayerSpec::conv(v[0], v[1], v[2], v.size() == 5 ? v[3] : 1, v.size() == 5 ? v[4] : 0);
    if (kind == "fc" && v.size() == 2) return LayerSpec::fc(v[0], v[1]);
    throw ConfigError("--layer expects conv:C1,K,C2[,stride,pad] or fc:IN,OUT");
}

NetworkGraph load_calibrated(const RunConfig& cfg) {
    const NetworkGraph g = load_network(cfg.network);
    const Dataset calib = load_dataset(cfg.calibration);
    return ptq_calibrate(g, calib.images);
}

CimOptions cim_options(const RunConfig& cfg) { return {NumberFormat::e2m5, cfg.macro(), cfg.seed}; }

Dataset limit(Dataset d, std::size_t n) {
    if (n > 0 && n < d.size()) {
        d.images.resize(n);
        d.labels.resize(n);
    }
    return d;
}

json perf_json(const std::vector<PerfReport>& rows, const AdcComparison& a) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"variant", to_string(r.variant)}, {"latency_ns", r.latency * 1e9},
                       {"throughput_gops", r.throughput * 1e-9},
                       {"power_mw", {{"dac", r.power.dac * 1e3}, {"array", r.power.array * 1e3},
                                     {"adc", r.power.adc * 1e3}, {"digital", r.power.digital * 1e3},
                                     {"total", r.power.total() * 1e3}}},
                       {"efficiency_tops_w", r.efficiency * 1e-12}});
    return {{"formats", out},
            {"adc_comparison", {{"fp_time_ns", a.fp_time * 1e9}, {"int8_time_ns", a.int8_time * 1e9},
                                {"time_ratio", a.time_ratio}, {"ramp_factor", a.ramp_factor},
                                {"fp_adc_mw", a.fp_adc_power * 1e3}, {"int8_adc_mw", a.int8_adc_power * 1e3},
                                {"adc_power_reduction", a.power_reduction}}}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Floating-point compute-in-memory macro simulator"};
    app.require_subcommand(1);

    Common common;
    std::string init_path = "fpcim.ini";
    auto* init = app.add_subcommand("init", "write a config file with every default");
    init->add_option("path", init_path, "destination");

    auto* codec = app.add_subcommand("codec", "table of all codes and decoded values");
    add_common(codec, common);

    std::optional<double> current_ua;
    auto* adc = app.add_subcommand("adc", "transient FP-ADC conversion of one constant current");
    add_common(adc, common);
    adc->add_option("-i,--current-ua", current_ua, "column current in microamperes");

    auto* lin = app.add_subcommand("linearity", "single-cell current for every code at several conductances");
    add_common(lin, common);

    std::string weights_csv, inputs_csv;
    auto* macro = app.add_subcommand("macro", "one macro MAC: signed weights in [-1, 1] times real activations");
    add_common(macro, common);
    macro->add_option("-w,--weights", weights_csv, "weights CSV (rows x cols)")->required();
    macro->add_option("-x,--inputs", inputs_csv, "inputs CSV (one value per row, or one line)")->required();

    std::vector<std::string> layers;
    auto* map = app.add_subcommand("map", "tile plan for layers or for the configured network");
    add_common(map, common);
    map->add_option("-l,--layer", layers, "conv:C1,K,C2[,stride,pad] or fc:IN,OUT (repeatable)");

    std::size_t sample = 0;
    auto* infer = app.add_subcommand("infer", "class scores of one dataset sample in every format");
    add_common(infer, common);
    infer->add_option("-s,--sample", sample, "dataset index");

    auto* eval = app.add_subcommand("eval", "accuracy and per-layer error for every format");
    add_common(eval, common);

    auto* perf = app.add_subcommand("perf", "latency / throughput / power / efficiency table");
    add_common(perf, common);

    double sweep_max_ua = 20.0;
    std::size_t sweep_points = 2001;
    auto* sweep = app.add_subcommand("sweep", "ADC transfer curve over a current range");
    add_common(sweep, common);
    sweep->add_option("--max-ua", sweep_max_ua, "upper end of the sweep in microamperes");
    sweep->add_option("-n,--points", sweep_points, "number of points")->check(CLI::Range(2, 10000000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*init) {
            write_file_atomic(init_path, config_to_ini(RunConfig{}));
            std::cout << "wrote " << init_path << '\n';
            return 0;
        }
        const RunConfig cfg = resolve(common);

        if (*codec) {
            emit(cfg, "codec_" + cfg.format.name() + ".csv", codec_csv(cfg.format));
        } else if (*adc) {
            const double i = current_ua ? *current_ua * 1e-6 : cfg.adc_current;
            require_config(i >= 0.0, "adc: current must be non-negative");
            const MacroConfig m = cfg.macro();
            const AdcResult r = simulate_transient(i, m.adc, m.format);
            std::ostringstream trace;
            write_trace_csv(trace, r, m.adc);
            emit(cfg, "adc_trace.csv", trace.str());
            const json j = adc_json(r, i, cfg);
            emit(cfg, "adc_result.json", j.dump(2) + "\n");
            std::cout << j.dump() << '\n';
        } else if (*lin) {
            const MacroConfig m = cfg.macro();
            const auto rows = linearity_sweep(cfg.linearity_conductances, m.dac, m.format);
            std::ostringstream csv;
            write_sweep_csv(csv, rows);
            emit(cfg, "linearity.csv", csv.str());
            json fits = json::array();
            for (const auto& f : fit_exponent_groups(rows))
                fits.push_back({{"conductance_uS", f.conductance * 1e6}, {"exponent", f.exponent},
                                {"slope_uA_per_code", f.slope * 1e6}, {"intercept_uA", f.intercept * 1e6},
                                {"r_squared", f.r_squared}, {"max_residual_uA", f.max_residual * 1e6},
                                {"points", f.points}});
            emit(cfg, "linearity_fits.json", fits.dump(2) + "\n");
        } else if (*macro) {
            MacroConfig m = cfg.macro();
            std::ifstream wf(weights_csv), xf(inputs_csv);
            if (!wf) throw ConfigError("cannot open " + weights_csv);
            if (!xf) throw ConfigError("cannot open " + inputs_csv);
            const Matrix w = read_matrix_csv(wf);
            const Matrix xm = read_matrix_csv(xf);
            require_config(xm.size() == w.rows(), "macro: input count must equal weight rows");
            for (double v : w.data()) require_config(std::abs(v) <= 1.0, "macro: weights must lie in [-1, 1]");
            std::vector<FpCode> codes;
            std::vector<bool> neg;
            for (double v : xm.data()) {
                codes.push_back(encode(std::abs(v), m.format).code);
                neg.push_back(v < 0.0);
            }
            const auto g = program_weights(w, m.device, cfg.seed);
            const MacroResult r = macro_mac(codes, neg, g, m);
            std::vector<double> xq;
            for (std::size_t k = 0; k < codes.size(); ++k) xq.push_back(neg[k] ? -decode(codes[k]) : decode(codes[k]));
            json j = to_json(r, m);
            j["config"] = to_json(m);
            j["reference"] = ideal_reference(xq, w, m.device);
            emit(cfg, "macro_result.json", j.dump(2) + "\n");
        } else if (*map) {
            json plans = json::array();
            if (layers.empty()) {
                const NetworkGraph g = load_network(cfg.network);
                for (std::size_t i = 0; i < g.layers.size(); ++i)
                    if (g.layers[i].is_compute()) {
                        json p = to_json(map_layer(g.layers[i].spec));
                        p["layer"] = i;
                        plans.push_back(p);
                    }
            } else {
                for (const auto& s : layers) {
                    const LayerSpec spec = parse_layer(s);
                    try {
                        spec.validate();
                    } catch (const ContractViolation& e) {
                        throw ConfigError(e.what());
                    }
                    json p = to_json(map_layer(spec));
                    p["layer"] = s;
                    plans.push_back(p);
                }
            }
            emit(cfg, "map.json", plans.dump(2) + "\n");
        } else if (*infer) {
            const NetworkGraph g = load_calibrated(cfg);
            const Dataset d = load_dataset(cfg.dataset);
            require_config(sample < d.size(), "infer: sample index out of range");
            json out = {{"sample", sample}, {"label", d.labels[sample]}};
            for (auto f : cfg.eval_formats) {
                CimOptions opt = cim_options(cfg);
                opt.format = f;
                const auto scores = CimNetwork(g, opt).infer(d.images[sample]);
                out["formats"][to_string(f)] = {{"scores", scores}, {"top1", argmax(scores)}};
            }
            emit(cfg, "infer.json", out.dump(2) + "\n");
        } else if (*eval) {
            const NetworkGraph g = load_calibrated(cfg);
            const Dataset d = limit(load_dataset(cfg.dataset), cfg.max_samples);
            const EvalReport rep = evaluate(g, d, cfg.eval_formats, cim_options(cfg));
            emit(cfg, "eval.csv", to_csv(rep));
            emit(cfg, "eval.json", to_json(rep).dump(2) + "\n");
            for (const auto& f : rep.formats)
                std::cout << to_string(f.format) << ": accuracy " << f.accuracy << ", agreement " << f.agreement
                          << '\n';
        } else if (*perf) {
            const EnergyParams p = EnergyParams::calibrated(cfg.power);
            const auto rows = total_comparison(p);
            emit(cfg, "perf.csv", perf_csv(rows));
            emit(cfg, "perf.json", perf_json(rows, adc_comparison(p, cfg.macro().adc)).dump(2) + "\n");
        } else if (*sweep) {
            require_config(sweep_max_ua > 0.0, "sweep: --max-ua must be positive");
            const MacroConfig m = cfg.macro();
            std::ostringstream os;
            os.precision(10);
            os << "current_uA,code_bits,value,underflow,saturated\n";
            for (std::size_t k = 0; k < sweep_points; ++k) {
                const double i = sweep_max_ua * 1e-6 * static_cast<double>(k) / static_cast<double>(sweep_points - 1);
                const auto r = convert_analytic(i, m.adc, m.format);
                os << i * 1e6 << ',' << r.code.to_string() << ',' << decode(r.code) << ',' << r.underflow << ','
                   << r.saturated << '\n';
            }
            emit(cfg, "adc_sweep.csv", os.str());
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ContractViolation& e) {
        std::cerr << "contract violation: " << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
}
