//! Matrix-matrix products built from MVM units, and the double product
//! `X·Y·Z` that stays optical between its two stages.
//!
//! In the double product each column `j` of `Z` drives one unit. Row `k` of
//! `Y` turns the modulated comb into a bundle of per-wavelength products that
//! is never photodetected: it is split to every output row, scaled as a whole
//! by a broadband racetrack modulator set to `x_ik`, and the `p` bundles of an
//! output row are multiplexed onto one photodetector. Each output element
//! therefore sees exactly one O/E conversion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AccelConfig;
use crate::error::{Error, Result};
use crate::mvm::{mvm_oracle, MvmEngine, NoiseMode, SimFlags};
use crate::power::{area_mm2, soc_power};
use crate::quant::{max_code, round_ratio_half_up, QuantizedMatrix, QuantizedVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MmmStrategy {
    /// One MVM unit per column, all in one cycle.
    Parallel,
    /// One unit, one column per cycle.
    TimeMultiplexed,
    /// `units` units, `ceil(n/units)` cycles.
    Hybrid { units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub units_used: usize,
    pub cycles: usize,
    pub area_mm2: f64,
    pub energy_j: f64,
    pub latency_s: f64,
}

/// Cost of running `n` column products under `strategy`. Area and energy
/// scale linearly with the number of active units.
pub fn schedule(strategy: MmmStrategy, n: usize, cfg: &AccelConfig) -> Result<ScheduleReport> {
    if n == 0 {
        return Err(Error::shape("no columns to schedule"));
    }
    let (units, cycles) = match strategy {
        MmmStrategy::Parallel => (n, 1),
        MmmStrategy::TimeMultiplexed => (1, n),
        MmmStrategy::Hybrid { units: 0 } => return Err(Error::invalid("hybrid schedule needs at least one unit")),
        MmmStrategy::Hybrid { units } => (units, n.div_ceil(units)),
    };
    let latency = cycles as f64 / cfg.f_clk_hz;
    Ok(ScheduleReport {
        units_used: units,
        cycles,
        area_mm2: area_mm2(cfg) * units as f64,
        energy_j: soc_power(cfg)? * latency * units as f64,
        latency_s: latency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmmResult {
    pub codes: QuantizedMatrix,
    pub schedule: ScheduleReport,
    pub saturated: usize,
}

/// `Y·Z` column by column. Column `j` draws noise from stream `j`, so the
/// result does not depend on the schedule.
pub fn mmm(
    engine: &MvmEngine,
    y: &QuantizedMatrix,
    z: &QuantizedMatrix,
    strategy: MmmStrategy,
    flags: &SimFlags,
) -> Result<MmmResult> {
    if z.rows() != y.cols() {
        return Err(Error::shape(format!(
            "{}x{} times {}x{}",
            y.rows(),
            y.cols(),
            z.rows(),
            z.cols()
        )));
    }
    let cols: Vec<_> = (0..z.cols())
        .into_par_iter()
        .map(|j| engine.simulate_stream(y, &z.column(j), flags, j as u64))
        .collect::<Result<_>>()?;
    let saturated = cols.iter().map(|c| c.saturated).sum();
    let columns: Vec<QuantizedVector> = cols.into_iter().map(|c| c.codes).collect();
    Ok(MmmResult {
        codes: QuantizedMatrix::from_columns(&columns)?,
        schedule: schedule(strategy, z.cols(), engine.config())?,
        saturated,
    })
}

pub fn mmm_oracle(y: &QuantizedMatrix, z: &QuantizedMatrix) -> Result<QuantizedMatrix> {
    if z.rows() != y.cols() {
        return Err(Error::shape("inner dimensions differ"));
    }
    let columns = (0..z.cols())
        .map(|j| mvm_oracle(y, &z.column(j)))
        .collect::<Result<Vec<_>>>()?;
    QuantizedMatrix::from_columns(&columns)
}

fn check_chain(x: &QuantizedMatrix, y: &QuantizedMatrix, z: &QuantizedMatrix) -> Result<()> {
    if x.bits() != y.bits() || y.bits() != z.bits() {
        return Err(Error::shape("operand widths differ"));
    }
    if x.cols() != y.rows() || y.cols() != z.rows() {
        return Err(Error::shape(format!(
            "{}x{} · {}x{} · {}x{} does not chain",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols(),
            z.rows(),
            z.cols()
        )));
    }
    Ok(())
}

fn triple_sums(x: &QuantizedMatrix, y: &QuantizedMatrix, z: &QuantizedMatrix) -> Vec<u128> {
    let (a, p, q, b) = (x.rows(), y.rows(), y.cols(), z.cols());
    // Y·Z first, exactly.
    let yz: Vec<u128> = (0..p)
        .flat_map(|k| (0..b).map(move |j| (k, j)))
        .map(|(k, j)| {
            (0..q)
                .map(|m| u128::from(y.get(k, m)) * u128::from(z.get(m, j)))
                .sum()
        })
        .collect();
    (0..a)
        .flat_map(|i| (0..b).map(move |j| (i, j)))
        .map(|(i, j)| (0..p).map(|k| u128::from(x.get(i, k)) * yz[k * b + j]).sum())
        .collect()
}

/// Integer reference for `X·Y·Z` with one final quantization:
/// `round(Σ_k Σ_m x_ik·y_km·z_mj / (p·q·N²))`, ties up.
pub fn dmmm_oracle(x: &QuantizedMatrix, y: &QuantizedMatrix, z: &QuantizedMatrix) -> Result<QuantizedMatrix> {
    check_chain(x, y, z)?;
    let n = u128::from(max_code(x.bits()));
    let den = (y.rows() * y.cols()) as u128 * n * n;
    let codes = triple_sums(x, y, z)
        .into_iter()
        .map(|s| round_ratio_half_up(s, den) as u32)
        .collect();
    QuantizedMatrix::new(x.bits(), x.rows(), z.cols(), codes)
}

/// The same normalized product without any rounding, in code units.
pub fn dmmm_exact(x: &QuantizedMatrix, y: &QuantizedMatrix, z: &QuantizedMatrix) -> Result<Vec<f64>> {
    check_chain(x, y, z)?;
    let n = f64::from(max_code(x.bits()));
    let den = (y.rows() * y.cols()) as f64 * n * n;
    Ok(triple_sums(x, y, z).into_iter().map(|s| s as f64 / den).collect())
}

/// Two chained single products, requantized in between: what the chain
/// would compute if stage 1 went through an ADC and a DAC.
pub fn dmmm_naive(x: &QuantizedMatrix, y: &QuantizedMatrix, z: &QuantizedMatrix) -> Result<QuantizedMatrix> {
    check_chain(x, y, z)?;
    mmm_oracle(x, &mmm_oracle(y, z)?)
}

/// Event counts of one double product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DmmmTrace {
    pub photodetection_events: usize,
    /// Photocurrents taken between the two stages. Zero by construction.
    pub intermediate_oeo_conversions: usize,
    pub vmrm_events: usize,
    pub mmrm_events: usize,
    pub rtm_events: usize,
    /// Largest relative spread of the gain an RTM applied across the
    /// wavelengths of one bundle. Only measured when tracing.
    pub max_broadband_spread: Option<f64>,
    /// Final photocurrents, `[row][column]`, when tracing.
    pub photocurrent_a: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmmmResult {
    pub codes: QuantizedMatrix,
    pub analog_lsb: Vec<f64>,
    pub saturated: usize,
    pub schedule: ScheduleReport,
    pub trace: DmmmTrace,
}

struct UnitOut {
    u: Vec<f64>,
    codes: Vec<u32>,
    saturated: usize,
    currents: Vec<f64>,
    trace: DmmmTrace,
    spread: f64,
}

/// Simulate `X (a×p) · Y (p×q) · Z (q×b)` with one D-MVM unit per column
/// of `Z`. `q` must equal the engine's wavelength count; `a` and `p` must be
/// powers of two for the splitter trees.
pub fn dmmm_simulate(
    engine: &MvmEngine,
    x: &QuantizedMatrix,
    y: &QuantizedMatrix,
    z: &QuantizedMatrix,
    strategy: MmmStrategy,
    flags: &SimFlags,
) -> Result<DmmmResult> {
    check_chain(x, y, z)?;
    if x.bits() != engine.bits() {
        return Err(Error::shape("operand width differs from the configured B"));
    }
    if y.cols() != engine.cols() {
        return Err(Error::shape(format!(
            "Y has {} columns but the comb has {} wavelengths",
            y.cols(),
            engine.cols()
        )));
    }
    let (a, p, b) = (x.rows(), y.rows(), z.cols());
    engine.check_rows(p)?;
    engine.check_rows(a)?;

    let cfg = engine.config();
    let q = engine.cols();
    let n = f64::from(max_code(x.bits()));
    let weights: Vec<f64> = if flags.absorption_weighting {
        let top = engine.plan().lambdas.iter().copied().fold(f64::MIN, f64::max);
        engine.plan().lambdas.iter().map(|l| l / top).collect()
    } else {
        vec![1.0; q]
    };
    let w_total: f64 = weights.iter().sum();

    // Stage 1 feeds a 1:p tree, stage 2 a 1:a tree; both pay splitter excess.
    let split = |fan: usize| 10f64.powf(-(fan.trailing_zeros() as f64) * cfg.splitter_loss_db / 10.0) / fan as f64;
    let g_mrm = 10f64.powf(-cfg.mrm_dr_db / 10.0);
    let g_rtr = 10f64.powf(-cfg.rtr_dr_db / 10.0);
    let p_lambda = crate::power::laser_power(cfg)?.p_per_lambda_w;
    // Photocurrent per unit of Σ_k m_x·Σ_m w·b, all in code units.
    let amps_per_unit = p_lambda * g_mrm * split(p) * g_mrm * split(a) * g_mrm * g_rtr * cfg.responsivity_a_per_w / (n * n * n);
    let chain_fs = amps_per_unit * n * n * n * p as f64 * w_total * cfg.tia.dc_transimpedance() * cfg.amp.dc_gain();
    let adc = cfg.adc(chain_fs);
    // The racetrack modulator reuses the ring transfer of the anchor line.
    let rtm_table = engine.depth_table(flags.nonlinearity, q - 1).to_vec();

    let units: Vec<UnitOut> = (0..b)
        .into_par_iter()
        .map(|j| {
            let zc = z.column(j);
            let m_z = engine.modulate_inputs(zc.codes(), flags);
            let mut trace = DmmmTrace {
                vmrm_events: q,
                ..DmmmTrace::default()
            };
            let bundles: Vec<Vec<f64>> = (0..p)
                .map(|k| {
                    trace.mmrm_events += q;
                    engine.row_bundle(y.row(k), &m_z, flags)
                })
                .collect();
            let mut spread: f64 = 0.0;
            let mut out = UnitOut {
                u: Vec::with_capacity(a),
                codes: Vec::with_capacity(a),
                saturated: 0,
                currents: Vec::with_capacity(a),
                trace: DmmmTrace::default(),
                spread: 0.0,
            };
            for i in 0..a {
                let mut mux = vec![0.0; q];
                for (k, bundle) in bundles.iter().enumerate() {
                    trace.rtm_events += 1;
                    let gain = rtm_table[x.get(i, k) as usize];
                    if flags.record_trace {
                        let applied: Vec<f64> = bundle
                            .iter()
                            .map(|&v| if v == 0.0 { gain } else { v * gain / v })
                            .collect();
                        let (lo, hi) = applied
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| (lo.min(g), hi.max(g)));
                        if hi > 0.0 {
                            spread = spread.max((hi - lo) / hi);
                        }
                    }
                    for (acc, &v) in mux.iter_mut().zip(bundle) {
                        *acc += gain * v;
                    }
                }
                trace.photodetection_events += 1;
                let s: f64 = mux.iter().zip(&weights).map(|(v, w)| v * w).sum();
                let lsb = s / (n * n * p as f64 * w_total);
                let current = amps_per_unit * s;
                let mut rng = match flags.noise {
                    NoiseMode::Off => None,
                    NoiseMode::Gaussian { seed } => Some(MvmEngine::row_rng(seed, j as u64, i)),
                };
                let (u, code, sat) = engine.decide(lsb, current, &adc, chain_fs, rng.as_mut());
                out.u.push(u);
                out.codes.push(code);
                out.saturated += usize::from(sat);
                out.currents.push(current);
            }
            out.trace = trace;
            out.spread = spread;
            out
        })
        .collect();

    let mut codes = vec![0u32; a * b];
    let mut analog = vec![0.0; a * b];
    let mut trace = DmmmTrace::default();
    let mut currents = vec![vec![0.0; b]; a];
    let mut spread: f64 = 0.0;
    let mut saturated = 0;
    for (j, unit) in units.iter().enumerate() {
        for i in 0..a {
            codes[i * b + j] = unit.codes[i];
            analog[i * b + j] = unit.u[i];
            currents[i][j] = unit.currents[i];
        }
        saturated += unit.saturated;
        trace.photodetection_events += unit.trace.photodetection_events;
        trace.intermediate_oeo_conversions += unit.trace.intermediate_oeo_conversions;
        trace.vmrm_events += unit.trace.vmrm_events;
        trace.mmrm_events += unit.trace.mmrm_events;
        trace.rtm_events += unit.trace.rtm_events;
        spread = spread.max(unit.spread);
    }
    if flags.record_trace {
        trace.max_broadband_spread = Some(spread);
        trace.photocurrent_a = Some(currents);
    }
    Ok(DmmmResult {
        codes: QuantizedMatrix::new(x.bits(), a, b, codes)?,
        analog_lsb: analog,
        saturated,
        schedule: schedule(strategy, b, cfg)?,
        trace,
    })
}
