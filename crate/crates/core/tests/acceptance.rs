//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::{all_matrices, as_i128, engine, engine_with, int_mul, transpose_i128};
use photomac_core::attention::{attention_head, collapse_qk, softmax_exact, softmax_lut, AttentionWeights, Backend, SoftmaxLut};
use photomac_core::eo::{build_calibration, calibrated_transfer, dnl_inl, extended_transfer, uncalibrated_transfer};
use photomac_core::frontend::{oe_noise_power, snr_margin, tia_characteristics};
use photomac_core::mmm::{dmmm_oracle, dmmm_simulate, mmm, MmmStrategy};
use photomac_core::mvm::mvm_oracle;
use photomac_core::power::{hs_dac_static_power, laser_power, perf_report, r2r_static_power, TABLE_II};
use photomac_core::resonator::{calibrate_dispersion, Design, TABLE_I_CASES};
use photomac_core::{
    AccelConfig, AdcModel, AmpModel, MrmTransferModel, Nonlinearity, NoiseMode, QuantizedMatrix, QuantizedVector,
    SimFlags, TiaModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn c1_table_i() -> Outcome {
    let start = Instant::now();
    let reference = [
        (951.32, 2321u32, 2290u32, 1534.5, (0.49, 0.51), (4.63, 4.76)),
        (469.01, 1160, 1129, 1519.0, (0.97, 1.03), (2.25, 2.38)),
        (475.66, 1160, 1145, 1535.0, (0.99, 1.01), (4.63, 4.76)),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (l, top, bottom, lam_lo, sp, r)) in reference.into_iter().enumerate() {
        let (d, spacing, samples) = TABLE_I_CASES[i];
        let disp = calibrate_dispersion(&samples).unwrap();
        let row = Design::solve(d, 1550.0, spacing, disp, 5.0).unwrap().summary();
        let row_ok = within(row.rtr_perimeter_um, l, 0.005)
            && row.rtr_mode_max.abs_diff(top) <= 1
            && row.rtr_mode_max - row.rtr_mode_min == top - bottom
            && (row.lambda_min_nm - lam_lo).abs() <= 0.1
            && (row.lambda_max_nm - 1550.0).abs() <= 0.1
            && row.spacing_min_nm >= sp.0
            && row.spacing_max_nm <= sp.1
            && row.ring_radius_min_um >= r.0 * 0.99
            && row.ring_radius_max_um <= r.1 * 1.01;
        ok &= row_ok;
        notes.push(format!(
            "row{}: L={:.2}um modes {}..{} lambda {:.2}..{:.2} spacing {:.3}..{:.3} r {:.3}..{:.3}",
            i + 1,
            row.rtr_perimeter_um,
            row.rtr_mode_max,
            row.rtr_mode_min,
            row.lambda_min_nm,
            row.lambda_max_nm,
            row.spacing_min_nm,
            row.spacing_max_nm,
            row.ring_radius_min_um,
            row.ring_radius_max_um
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    notes.push(format!("{secs:.3}s"));
    Outcome { ok, detail: notes.join("; ") }
}

fn hs_brute(bits: u32, r: f64, v: f64) -> f64 {
    let n = f64::from((1u32 << bits) - 1);
    let sum: f64 = (0..1u32 << bits)
        .map(|c| {
            let c = f64::from(c);
            let out = v * c / n;
            c * (v - out).powi(2) / (n * r) + (n - c) * out * out / (n * r)
        })
        .sum();
    sum / (n + 1.0)
}

fn c2_hs_dac() -> Outcome {
    let p = hs_dac_static_power(4, 2e3, 2.4).unwrap();
    let oracle = (1..=4).all(|b| {
        let (a, o) = (hs_dac_static_power(b, 2e3, 2.4).unwrap(), hs_brute(b, 2e3, 2.4));
        (a - o).abs() <= 1e-12 * o.abs().max(1e-30)
    });
    Outcome {
        ok: within(p, 0.45e-3, 0.02) && oracle,
        detail: format!("P = {:.4} mW (target 0.45 mW +-2%); divider oracle B<=4: {}", p * 1e3, agree(oracle)),
    }
}

/// Terminated R-2R ladder, nodal analysis by elimination on a tridiagonal system.
fn r2r_nodal(bits: u32, r: f64, v: f64) -> f64 {
    let nb = bits as usize;
    let (g1, g2) = (1.0 / r, 0.5 / r);
    let mut total = 0.0;
    for code in 0..1u32 << bits {
        let drive: Vec<f64> = (0..nb).map(|p| f64::from((code >> (nb - 1 - p)) & 1) * v).collect();
        let mut diag: Vec<f64> = (0..nb)
            .map(|p| g2 + if p > 0 { g1 } else { 0.0 } + if p + 1 < nb { g1 } else { g2 })
            .collect();
        let mut rhs: Vec<f64> = drive.iter().map(|d| d * g2).collect();
        for p in 1..nb {
            let f = -g1 / diag[p - 1];
            diag[p] -= f * -g1;
            rhs[p] -= f * rhs[p - 1];
        }
        let mut node = vec![0.0; nb];
        for p in (0..nb).rev() {
            let next = if p + 1 < nb { -g1 * node[p + 1] } else { 0.0 };
            node[p] = (rhs[p] - next) / diag[p];
        }
        total += (0..nb).map(|p| (drive[p] - node[p]) * g2 * drive[p]).sum::<f64>();
    }
    total / f64::from(1u32 << bits)
}

fn c3_r2r() -> Outcome {
    let p = r2r_static_power(4, 5e6, 2.4).unwrap();
    let oracle = (1..=4).all(|b| {
        let (a, o) = (r2r_static_power(b, 5e6, 2.4).unwrap(), r2r_nodal(b, 5e6, 2.4));
        (a - o).abs() <= 1e-12 * o.abs().max(1e-30)
    });
    Outcome {
        ok: within(p, 7.2e-6, 0.05) && oracle,
        detail: format!(
            "P = {:.4} uW (target 7.2 uW +-5%); nodal oracle B<=4: {}",
            p * 1e6,
            agree(oracle)
        ),
    }
}

fn c4_tia() -> Outcome {
    let c = tia_characteristics(&TiaModel::default());
    Outcome {
        ok: within(c.dc_transimpedance_ohm, 1027.0, 0.01)
            && within(c.bandwidth_hz, 8.52e9, 0.01)
            && within(c.in_noise_a_per_rthz, 6.26e-12, 0.02),
        detail: format!(
            "Zt = {:.1} ohm, BW = {:.3} GHz, noise = {:.3} pA/rtHz",
            c.dc_transimpedance_ohm,
            c.bandwidth_hz * 1e-9,
            c.in_noise_a_per_rthz * 1e12
        ),
    }
}

fn c5_noise() -> Outcome {
    let noise = oe_noise_power(&TiaModel::default(), &AmpModel::default(), 335e-6).total;
    let adc = AdcModel {
        bits: 4,
        full_scale: 1.0,
        sample_rate: 2e9,
    };
    let m = snr_margin(noise, &adc).unwrap();
    let noise_ok = within(noise, 11e-6, 0.15);
    let quant_ok = (m.quant_noise - 370e-6).abs() < 0.5e-6;
    let margin_ok = (m.margin_db - 15.3).abs() <= 0.5;
    Outcome {
        ok: noise_ok && quant_ok && margin_ok,
        detail: format!(
            "noise = {:.2} uW (target 11 +-15%: {}), quant = {:.2} uW ({}), margin = {:.2} dB (target 15.3 +-0.5: {})",
            noise * 1e6,
            mark(noise_ok),
            m.quant_noise * 1e6,
            mark(quant_ok),
            m.margin_db,
            mark(margin_ok)
        ),
    }
}

fn c6_laser() -> Outcome {
    let l32 = laser_power(&AccelConfig::with_d(32)).unwrap();
    let l8 = laser_power(&AccelConfig::with_d(8)).unwrap();
    Outcome {
        ok: within(l32.p_per_lambda_w, 4.08e-3, 0.01) && within(l32.total_w, 130.7e-3, 0.01) && within(l8.total_w, 31.6e-3, 0.01),
        detail: format!(
            "d=32: {:.3} mW/lambda, {:.2} mW total; d=8: {:.2} mW",
            l32.p_per_lambda_w * 1e3,
            l32.total_w * 1e3,
            l8.total_w * 1e3
        ),
    }
}

fn c7_table_ii() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64);
    for row in TABLE_II {
        let r = perf_report(&AccelConfig::with_d(row.d)).unwrap();
        let errs = [
            (r.laser_w * 1e3 / row.laser_mw - 1.0).abs(),
            (r.heater_w * 1e3 / row.heater_mw - 1.0).abs(),
            (r.soc_w * 1e3 / row.soc_mw - 1.0).abs(),
        ];
        let area_err = (r.area_mm2 / row.area_mm2 - 1.0).abs();
        worst.0 = worst.0.max(errs.iter().copied().fold(0.0, f64::max));
        worst.1 = worst.1.max(area_err);
        let d = row.d as f64;
        ok &= errs.iter().all(|&e| e <= 0.03)
            && area_err <= 0.15
            && r.throughput_mac_s == d * d * 2e9
            && r.density_tmac_s_mm2 == r.throughput_mac_s * 1e-12 / r.area_mm2
            && r.energy_fj_mac == r.soc_w / r.throughput_mac_s * 1e15;
    }
    let r32 = perf_report(&AccelConfig::with_d(32)).unwrap();
    ok &= r32.throughput_tmac_s() == 2.048
        && format!("{:.2}", r32.density_tmac_s_mm2) == "1.80"
        && format!("{:.1}", r32.energy_fj_mac) == "195.6";
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    Outcome {
        ok,
        detail: format!(
            "worst power error {:.2}%, worst area error {:.2}%; d=32: {} TMAC/s, {:.2} TMAC/s/mm2, {:.1} fJ/MAC; {secs:.3}s",
            worst.0 * 100.0,
            worst.1 * 100.0,
            r32.throughput_tmac_s(),
            r32.density_tmac_s_mm2,
            r32.energy_fj_mac
        ),
    }
}

fn c8_calibration() -> Outcome {
    let m = MrmTransferModel::fig4(1534.5);
    let raw = dnl_inl(&uncalibrated_transfer(&m, 1534.5, 4, 2.4).unwrap()).unwrap();
    let map = build_calibration(&m, 1534.5, 4, 2.4).unwrap();
    let ext = extended_transfer(&m, 1534.5, 4, 2.4).unwrap();
    let cal = dnl_inl(&calibrated_transfer(&map, &ext)).unwrap();
    Outcome {
        ok: raw.max_abs_inl() > 0.5 && cal.max_abs_dnl() <= 0.5 && cal.max_abs_inl() <= 0.5,
        detail: format!(
            "uncalibrated INL {:.3} LSB; calibrated DNL {:.3}, INL {:.3} LSB",
            raw.max_abs_inl(),
            cal.max_abs_dnl(),
            cal.max_abs_inl()
        ),
    }
}

fn c9_oracle_equivalence() -> Outcome {
    let ideal = SimFlags::ideal();
    let mut cases = 0usize;
    let mut mismatches = 0usize;
    for d in [1usize, 2] {
        for bits in [1u32, 2] {
            let e = engine_with(AccelConfig { bits, ..AccelConfig::with_d(d) });
            let vectors = all_matrices(bits, 1, d);
            let squares = all_matrices(bits, d, d);
            for y in &squares {
                for zm in &vectors {
                    let z = QuantizedVector::new(bits, zm.codes().to_vec()).unwrap();
                    cases += 1;
                    mismatches += usize::from(e.simulate(y, &z, &ideal).unwrap().codes != mvm_oracle(y, &z).unwrap());
                }
            }
            // Double products with one output column: every X, Y, Z of that shape.
            let columns = all_matrices(bits, d, 1);
            let rows = all_matrices(bits, 1, d);
            for x in &rows {
                for y in &squares {
                    for z in &columns {
                        cases += 1;
                        let sim = dmmm_simulate(&e, x, y, z, MmmStrategy::Parallel, &ideal).unwrap();
                        mismatches += usize::from(sim.codes != dmmm_oracle(x, y, z).unwrap());
                    }
                }
            }
        }
    }
    let exhaustive = cases;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    for d in [4usize, 8] {
        let e = engine(d);
        for _ in 0..10_000 {
            let y = QuantizedMatrix::random(4, d, d, &mut rng);
            let z = QuantizedVector::random(4, d, &mut rng);
            mismatches += usize::from(e.simulate(&y, &z, &ideal).unwrap().codes != mvm_oracle(&y, &z).unwrap());
            let x = QuantizedMatrix::random(4, d, d, &mut rng);
            let zc = QuantizedMatrix::random(4, d, 1, &mut rng);
            let sim = dmmm_simulate(&e, &x, &y, &zc, MmmStrategy::Parallel, &ideal).unwrap();
            mismatches += usize::from(sim.codes != dmmm_oracle(&x, &y, &zc).unwrap());
            cases += 2;
        }
    }
    Outcome {
        ok: mismatches == 0,
        detail: format!("{exhaustive} exhaustive + {} random cases, {mismatches} mismatches", cases - exhaustive),
    }
}

fn c10_collapse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC011);
    let mut mismatches = 0;
    let mut cases = 0;
    for d in [2usize, 4, 8] {
        for _ in 0..1000 {
            let n = rng.gen_range(1..=8);
            let x = QuantizedMatrix::random(4, n, d, &mut rng);
            let w_q = QuantizedMatrix::random(4, d, d, &mut rng);
            let w_k = QuantizedMatrix::random(4, d, d, &mut rng);
            let wc: Vec<i128> = collapse_qk(&w_q, &w_k).unwrap().exact.iter().map(|&v| i128::from(v)).collect();
            let xi = as_i128(&x);
            let lhs = int_mul(&int_mul(&xi, n, d, &wc, d), n, d, &transpose_i128(&xi, n, d), n);
            let q = int_mul(&xi, n, d, &as_i128(&w_q), d);
            let k = int_mul(&xi, n, d, &as_i128(&w_k), d);
            let rhs = int_mul(&q, n, d, &transpose_i128(&k, n, d), n);
            cases += 1;
            mismatches += usize::from(lhs != rhs);
        }
    }
    Outcome {
        ok: mismatches == 0,
        detail: format!("{cases} instances at d in {{2,4,8}}, {mismatches} mismatches"),
    }
}

fn c11_softmax() -> Outcome {
    let lut = SoftmaxLut::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x50F7);
    let mut sum_ok = true;
    let mut err_ok = true;
    let mut shift_ok = true;
    let mut worst: f64 = 0.0;
    let k_max = 16;
    for _ in 0..20_000 {
        let k = rng.gen_range(1..=k_max);
        let row: Vec<f64> = (0..k).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let p = softmax_lut(&row, &lut).unwrap();
        let q = softmax_exact(&row).unwrap();
        sum_ok &= p.iter().all(|&v| v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= lut.row_sum_bound(k);
        for (a, b) in p.iter().zip(&q) {
            worst = worst.max((a - b).abs());
            err_ok &= (a - b).abs() <= lut.error_bound(k);
        }
        let grid: Vec<i64> = (0..k).map(|_| rng.gen_range(-3000..3000)).collect();
        let shift: i64 = rng.gen_range(-5000..5000);
        let a: Vec<f64> = grid.iter().map(|&g| g as f64 * lut.exp_step).collect();
        let b: Vec<f64> = grid.iter().map(|&g| (g + shift) as f64 * lut.exp_step).collect();
        shift_ok &= softmax_lut(&a, &lut).unwrap() == softmax_lut(&b, &lut).unwrap();
    }
    let bound = lut.error_bound(k_max);
    let bound_ok = bound <= 1.0 / 64.0;
    Outcome {
        ok: sum_ok && err_ok && shift_ok && bound_ok,
        detail: format!(
            "row sums {}, max error {:.2e} <= bound {:.2e} (2^-6 = {:.2e}): {}, grid shift invariance {}",
            mark(sum_ok),
            worst,
            bound,
            1.0 / 64.0,
            mark(err_ok && bound_ok),
            mark(shift_ok)
        ),
    }
}

fn c12_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD3);
    let mut ok = true;
    let mut notes = Vec::new();
    for n in [4usize, 8] {
        let e = engine(n);
        let x = QuantizedMatrix::random(4, n, n, &mut rng);
        let y = QuantizedMatrix::random(4, n, n, &mut rng);
        let z = QuantizedMatrix::random(4, n, n, &mut rng);
        let t = dmmm_simulate(&e, &x, &y, &z, MmmStrategy::Parallel, &SimFlags::ideal().traced())
            .unwrap()
            .trace;
        ok &= t.photodetection_events == n * n && t.intermediate_oeo_conversions == 0;
        notes.push(format!(
            "n={n}: {} photodetections, {} intermediate O/E/O",
            t.photodetection_events, t.intermediate_oeo_conversions
        ));
    }
    Outcome { ok, detail: notes.join("; ") }
}

fn c13_determinism() -> Outcome {
    let flags = SimFlags {
        nonlinearity: Nonlinearity::Calibrated,
        noise: NoiseMode::Gaussian { seed: 2024 },
        crosstalk: true,
        absorption_weighting: true,
        record_trace: true,
    };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xDE7);
        let e = engine(8);
        let x = QuantizedMatrix::random(4, 8, 8, &mut rng);
        let y = QuantizedMatrix::random(4, 8, 8, &mut rng);
        let z = QuantizedMatrix::random(4, 8, 8, &mut rng);
        let mut out = String::new();
        out += &serde_json::to_string(&e.simulate(&y, &z.column(0), &flags).unwrap()).unwrap();
        out += &serde_json::to_string(&mmm(&e, &y, &z, MmmStrategy::Hybrid { units: 3 }, &flags).unwrap()).unwrap();
        out += &serde_json::to_string(&dmmm_simulate(&e, &x, &y, &z, MmmStrategy::Parallel, &flags).unwrap()).unwrap();
        let w = AttentionWeights::new(y.clone(), z.clone(), x.clone(), 2).unwrap();
        let h = attention_head(&x, &w, Backend::Simulated { engine: &e, flags }, &SoftmaxLut::default()).unwrap();
        out += &serde_json::to_string(&h).unwrap();
        out
    };
    let (a, b) = (run(), run());
    Outcome {
        ok: a == b,
        detail: format!("two seeded noisy runs, {} bytes each, identical: {}", a.len(), a == b),
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

fn agree(ok: bool) -> &'static str {
    if ok {
        "agrees"
    } else {
        "DISAGREES"
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("Design table reproduction", c1_table_i),
        ("HS-DAC static power", c2_hs_dac),
        ("R-2R DAC static power", c3_r2r),
        ("TIA characteristics", c4_tia),
        ("Noise budget and SNR margin", c5_noise),
        ("Laser power", c6_laser),
        ("Performance table reproduction", c7_table_ii),
        ("E/O calibration", c8_calibration),
        ("Oracle equivalence", c9_oracle_equivalence),
        ("Collapse identity", c10_collapse),
        ("Softmax properties", c11_softmax),
        ("Single-conversion D-MMM", c12_structure),
        ("Determinism", c13_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.ok);
        println!("{} {:>2}. {name}: {}", if o.ok { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
