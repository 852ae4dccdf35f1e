// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fpcim/adc.hpp"
#include "fpcim/cimmacro.hpp"
#include "fpcim/dac.hpp"
#include "fpcim/fpcodec.hpp"
#include "fpcim/mapper.hpp"
#include "fpcim/netsim.hpp"
#include "fpcim/perfmodel.hpp"
#include "oracles.hpp"

using namespace fpcim;

namespace {

// Pinned tolerances and limits.
constexpr double kVmExpected = 1.2777;
constexpr double kVmTol = 1e-4;  // one unit of the last stated digit
constexpr double kCircuitVm = 1.271;
constexpr double kCircuitRel = 0.01;
constexpr double kChargeRel = 1e-12;
constexpr double kContinuityRel = 1e-12;
constexpr double kHalfUlpE2M5 = 1.0 / 64.0;
constexpr double kSlopeRatioRel = 1e-9;
constexpr double kAffineRel = 1e-12;
constexpr double kSigFig5 = 0.5e-5;  // relative, 5 significant figures
constexpr double kSigFig3 = 0.5e-3;  // relative, 3 significant figures

struct Check {
    bool ok = true;
    std::ostringstream why;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) why << what;
        if (!cond) ok = false;
    }
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    if (limit_s > 0 && dt >= limit_s) {
        std::ostringstream os;
        os << "runtime " << dt << " s >= " << limit_s << " s";
        c.expect(false, os.str());
    }
    std::printf("%s  %d. %s (%.3f s)%s%s\n", c.ok ? "PASS" : "FAIL", id, title, dt, c.ok ? "" : ": ",
                c.why.str().c_str());
    std::fflush(stdout);
    failures += !c.ok;
}

bool rel_close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::abs(b); }

int count(const AdcResult& r, AdcEventKind k) {
    int n = 0;
    for (const auto& ev : r.trace) n += ev.kind == k;
    return n;
}

} // namespace

int main() {
    const FpFormat e2 = FpFormat::e2m5();
    const AdcConfig adc = AdcConfig::for_format(e2);

    criterion(1, "transient reproduction at 5.38 uA", 1.0, [&](Check& c) {
        const auto r = simulate_transient(5.38e-6, adc, e2);
        c.expect(count(r, AdcEventKind::charge_share) == 2, "charge shares != 2");
        const std::string bits = r.code.to_string();
        c.expect(bits.substr(0, 2) == "10", "exponent code " + bits.substr(0, 2));
        c.expect(bits.substr(2) == "01001", "mantissa code " + bits.substr(2));
        c.expect(bits == "1001001", "code " + bits);
        c.expect(std::abs(r.v_m - kVmExpected) <= kVmTol, "V_M " + std::to_string(r.v_m));
        c.expect(std::abs(r.v_m - kCircuitVm) / kCircuitVm <= kCircuitRel, "V_M off the circuit value by > 1%");
    });

    criterion(2, "transient vs analytic on 10000 random currents", 10.0, [&](Check& c) {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(0.0, 20e-6);
        for (int n = 0; n < 10000; ++n) {
            const double i = u(rng);
            const auto a = simulate_transient(i, adc, e2);
            const auto b = convert_analytic(i, adc, e2);
            c.expect(a.code == b.code && a.underflow == b.underflow && a.saturated == b.saturated,
                     "mismatch at " + std::to_string(i));
        }
    });

    criterion(3, "charge-sharing algebra and piecewise continuity", 0, [&](Check& c) {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(0.0, 20e-6);
        std::size_t checked = 0;
        for (int n = 0; n < 1000; ++n) {
            const double i = u(rng);
            const auto r = simulate_transient(i, adc, e2);
            for (std::size_t k = 0; k < r.trace.size(); ++k) {
                const auto& ev = r.trace[k];
                if (ev.kind == AdcEventKind::charge_share) {
                    const auto& before = r.trace[k - 1];
                    c.expect(ev.v_o == adc.v_mid, "share voltage " + std::to_string(ev.v_o));
                    const double q0 = before.c_active * (before.v_o - adc.v_reset);
                    const double q1 = ev.c_active * (ev.v_o - adc.v_reset);
                    c.expect(rel_close(q1, q0, kChargeRel), "charge not conserved");
                }
                // both closed forms of the integrator voltage must imply the input current;
                // a saturated conversion is clamped at the threshold from its last crossing on
                const bool clamped = r.saturated && ev.kind == AdcEventKind::sample;
                if (ev.time > adc.t_start && ev.kind != AdcEventKind::ramp_compare && !clamped) {
                    ++checked;
                    c.expect(rel_close(implied_current_segment(ev, adc), i, kContinuityRel), "segment form off");
                    c.expect(rel_close(implied_current_pow2(ev, adc), i, kContinuityRel), "power-of-two form off");
                }
            }
        }
        c.expect(checked > 3000, "too few events checked");
    });

    criterion(4, "codec round-trip, monotonicity, half-ULP bound", 0, [&](Check& c) {
        for (FpFormat f : {FpFormat::e2m5(), FpFormat::e3m4()}) {
            const auto table = oracle::value_table(f.exponent_bits, f.mantissa_bits);
            for (const auto& code : all_codes(f)) {
                c.expect(encode(decode(code), f).code == code, "round-trip " + code.to_string());
                c.expect(decode(code) == table[code.bits()], "decode " + code.to_string());
            }
            double prev = -1;
            for (int k = 0; k < 100000; ++k) {
                const double x = f.max_value() * 1.05 * k / 99999.0;
                const double q = decode(encode(x, f).code);
                c.expect(q >= prev, "encode not monotone");
                prev = q;
            }
        }
        // relative bound across the normal range up to the last rounding boundary
        const double hi = e2.max_value() + 0.125 * 1.75;
        double worst = 0, worst_x = 0, worst_above_hole = 0;
        for (int k = 0; k < 100000; ++k) {
            const double x = 1.0 + (hi - 1.0) * k / 99999.0;
            const double err = std::abs(decode(encode(x, e2).code) - x) / x;
            if (err > worst) {
                worst = err;
                worst_x = x;
            }
            // 1.0 itself is not representable (its bit pattern is the zero code)
            if (x >= 1.0 + kHalfUlpE2M5) worst_above_hole = std::max(worst_above_hole, err);
        }
        std::printf("      4 E2M5 max relative error %.6g overall, %.6g for x >= 1 + 2^-6\n", worst, worst_above_hole);
        std::ostringstream os;
        os << "max relative error " << worst << " at x = " << worst_x << " exceeds 2^-6";
        c.expect(worst <= kHalfUlpE2M5, os.str());
    });

    criterion(5, "throughput, efficiency and ADC time arithmetic", 0, [&](Check& c) {
        const auto p = EnergyParams::calibrated();
        const auto rows = total_comparison(p);
        c.expect(rel_close(throughput(576, 256, 200e-9), 1474.56e9, kSigFig5), "E2M5 throughput");
        c.expect(rel_close(throughput(576, 256, 150e-9), 1966.08e9, kSigFig5), "E3M4 throughput");
        c.expect(rel_close(rows[0].throughput, 2.0 * 576 * 256 / 200e-9, kSigFig5), "E2M5 report throughput");
        c.expect(rel_close(rows[0].efficiency, 19.89e12, kSigFig3), "E2M5 efficiency");
        c.expect(rel_close(rows[1].efficiency, 14.12e12, kSigFig3), "E3M4 efficiency");
        const auto a = adc_comparison(p, adc);
        c.expect(a.time_ratio == 2.5, "ADC time ratio " + std::to_string(a.time_ratio));
        c.expect(int8_baseline_convert(1e-6, adc).conversion_time / adc.conversion_time() == 2.5, "INT8 ADC time");
    });

    criterion(6, "mapper losslessness on 100 random shapes", 30.0, [&](Check& c) {
        std::mt19937_64 rng(6);
        std::uniform_int_distribution<std::size_t> rows_d(1, 1800), cols_d(1, 700), pos_d(1, 4);
        std::uniform_int_distribution<int> q(-128, 128);
        bool big_rows = false, big_cols = false;
        for (int n = 0; n < 100; ++n) {
            std::size_t r = rows_d(rng), cl = cols_d(rng);
            if (n == 0) r = 1153;
            if (n == 1) cl = 513;
            big_rows = big_rows || r > kMacroRows;
            big_cols = big_cols || cl > kMacroCols;
            const std::size_t npos = pos_d(rng);
            Matrix w(r, cl), x(r, npos);
            // dyadic values keep every partial sum exact in double
            for (double& v : w.data()) v = q(rng) / 128.0;
            for (double& v : x.data()) v = q(rng) / 8.0;
            const auto y = execute_plan(plan_matrix(r, cl), x, IdentityTileMac{w});
            for (std::size_t j = 0; j < cl; ++j)
                for (std::size_t k = 0; k < npos; ++k) {
                    double acc = 0;
                    for (std::size_t i = 0; i < r; ++i) acc += x(i, k) * w(i, j);
                    c.expect(y(j, k) == acc, "mismatch for shape " + std::to_string(r) + "x" + std::to_string(cl));
                }
        }
        c.expect(big_rows && big_cols, "shape coverage");
    });

    criterion(7, "macro end-to-end vs dot product and analytic ADC", 0, [&](Check& c) {
        std::mt19937_64 rng(77);
        std::uniform_int_distribution<int> row(0, 575), bits(1, 127), lvl(-15, 15), coin(0, 1), active_d(1, 12);
        std::uniform_real_distribution<double> vu(0.0, 1.0);
        const double x_per_amp = adc.t_int / (adc.c_int * (adc.v_mid - adc.v_reset));
        const double g_min = 0.5e-6, g_max = 20e-6;
        int in_range = 0;
        for (int n = 0; n < 1000; ++n) {
            MacroConfig cfg;
            std::vector<FpCode> codes(576, FpCode::zero(e2));
            std::vector<bool> neg(576, false);
            const int active = active_d(rng);
            for (int k = 0; k < active; ++k) {
                const auto r = static_cast<std::size_t>(row(rng));
                codes[r] = FpCode::from_bits(static_cast<std::uint8_t>(bits(rng)), e2);
                neg[r] = coin(rng);
            }
            Matrix w(576, 256);
            for (double& v : w.data()) v = lvl(rng) / 15.0;
            // scale the DAC so the heaviest column stays inside the ADC range
            double worst = 0;
            std::vector<double> unit_pos(256, 0.0), unit_neg(256, 0.0);
            for (std::size_t j = 0; j < 256; ++j) {
                for (std::size_t i = 0; i < 576; ++i) {
                    if (codes[i].is_zero()) continue;
                    const double lv = std::llround(std::abs(w(i, j)) * 15);
                    const double g_on = g_min + lv / 15 * (g_max - g_min);
                    const bool to_pos = (w(i, j) >= 0) != neg[i];
                    unit_pos[j] += decode(codes[i]) * (to_pos ? g_on : g_min);
                    unit_neg[j] += decode(codes[i]) * (to_pos ? g_min : g_on);
                }
                worst = std::max({worst, unit_pos[j], unit_neg[j]});
            }
            cfg.dac.v_unit = std::min(0.1, 15.0 / (worst * x_per_amp)) * (0.5 + 0.5 * vu(rng));
            const auto res = macro_mac(codes, neg, program_weights(w, cfg.device), cfg);
            for (std::size_t j = 0; j < 256; ++j) {
                double ip = 0, in = 0;
                for (std::size_t i = 0; i < 576; ++i) {
                    if (codes[i].is_zero()) continue;
                    const double v = cfg.dac.v_unit * decode(codes[i]);
                    const double lv = std::llround(std::abs(w(i, j)) * 15);
                    const double g_on = g_min + lv / 15 * (g_max - g_min);
                    const bool to_pos = (w(i, j) >= 0) != neg[i];
                    ip += v * (to_pos ? g_on : g_min);
                    in += v * (to_pos ? g_min : g_on);
                }
                const auto ep = convert_analytic(ip, adc, e2), en = convert_analytic(in, adc, e2);
                in_range += !ep.underflow && !ep.saturated;
                c.expect(res.pos_code(j, e2) == ep.code, "positive column code, case " + std::to_string(n));
                c.expect(res.neg_code(j, e2) == en.code, "negative column code, case " + std::to_string(n));
            }
        }
        c.expect(in_range > 1000 * 256 / 2, "too few in-range columns");
    });

    criterion(8, "linearity sweep affine per exponent group", 0, [&](Check& c) {
        const std::vector<double> gs{20e-6, 18e-6, 15e-6, 12e-6};
        const DacConfig dac;
        const auto rows = linearity_sweep(gs, dac, e2);
        c.expect(rows.size() == 4 * 128, "row count");
        // per (conductance, exponent): current step between neighbouring mantissa codes
        std::vector<std::vector<double>> step(gs.size(), std::vector<double>(4, 0.0));
        for (std::size_t gi = 0; gi < gs.size(); ++gi)
            for (int e = 0; e <= e2.max_exponent(); ++e) {
                std::vector<double> cur;
                for (const auto& r : rows)
                    if (r.conductance == gs[gi] && r.code.exponent == e && !r.code.is_zero()) cur.push_back(r.current);
                const double d = cur[1] - cur[0];
                for (std::size_t k = 1; k < cur.size(); ++k)
                    c.expect(std::abs((cur[k] - cur[0]) - k * d) <= kAffineRel * cur.back(), "not affine");
                step[gi][e] = d;
            }
        for (std::size_t gi = 1; gi < gs.size(); ++gi)
            for (int e = 0; e <= e2.max_exponent(); ++e)
                c.expect(rel_close(step[gi][e] / step[0][e], gs[gi] / gs[0], kSlopeRatioRel), "slope ratio");
        for (const auto& f : fit_exponent_groups(rows))
            c.expect(rel_close(f.slope, step[0][0] * (f.conductance / gs[0]) * std::ldexp(1.0, f.exponent), 1e-9),
                     "library fit slope");
    });

    criterion(9, "fixture format comparison", 120.0, [&](Check& c) {
        const fs::path dir = FPCIM_FIXTURE_DIR;
        const NetworkGraph g = load_network(dir / "network.json");
        const Dataset test = load_dataset(dir / "test.json");
        const Dataset calib = load_dataset(dir / "calib.json");
        const NetworkGraph cal = ptq_calibrate(g, calib.images);

        // (a) ideal bypass is bit-identical to float inference
        const CimNetwork bypass(cal, {NumberFormat::ideal});
        for (const auto& x : test.images) c.expect(bypass.infer(x) == infer_ideal(g, x), "(a) bypass differs");

        // (b) E2M5 top-1 agreement with the float model
        const double threshold = g.metadata.at("e2m5_min_agreement").get<double>();
        const CimNetwork net(cal, {NumberFormat::e2m5});
        std::size_t agree = 0;
        for (const auto& x : test.images) agree += argmax(net.infer(x)) == argmax(infer_ideal(g, x));
        const double agreement = static_cast<double>(agree) / test.size();
        std::printf("      9(b) E2M5 agreement %.4f (threshold %.2f)\n", agreement, threshold);
        c.expect(agreement >= threshold, "(b) agreement below threshold");

        // (c) Laplacian quantization MSE, library vs brute-force oracle
        const auto xs = oracle::laplacian(4096, 42);
        const double mse_fp_ref = oracle::fp_mse(xs, oracle::value_table(2, 5));
        const double mse_int_ref = oracle::int8_mse(xs);
        const auto deq = quantize_tensor(xs, e2).dequantize();
        double mse_fp = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double d = deq[k] - xs[k];
            mse_fp += d * d;
        }
        mse_fp /= xs.size();
        double max_abs = 0;
        for (double x : xs) max_abs = std::max(max_abs, std::abs(x));
        const Int8Quantizer iq{max_abs};
        double mse_int = 0;
        for (double x : xs) {
            const double d = std::copysign(iq.dequantize(iq.quantize(std::abs(x))), x) - x;
            mse_int += d * d;
        }
        mse_int /= xs.size();
        std::printf("      9(c) Laplacian MSE: E2M5 %.6g (oracle %.6g), INT8 %.6g (oracle %.6g)\n", mse_fp,
                    mse_fp_ref, mse_int, mse_int_ref);
        c.expect(rel_close(mse_fp, mse_fp_ref, 1e-9) && rel_close(mse_int, mse_int_ref, 1e-9),
                 "(c) library MSE differs from the oracle; ");
        c.expect(mse_fp_ref < mse_int_ref, "(c) E2M5 MSE is not below INT8 MSE");
    });

    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
