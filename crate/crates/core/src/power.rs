//! Power, area, throughput and energy roll-up.

use serde::{Deserialize, Serialize};

use crate::config::{AccelConfig, R2rStatic};
use crate::error::{Error, Result};
use crate::quant::check_bits;

/// Average static power of the segmented voltage-mode HS-DAC over uniformly
/// distributed codes.
///
/// Code `c` of `N = 2^B − 1` ties `c` unit cells to `vddh` and `N − c` to
/// ground, which burns `vddh²·c(N−c)/(N²·r_hs)`. Averaging over the `2^B`
/// codes gives the closed form below. (A `2^(B−1)` denominator doubles the
/// result and misses the 0.45 mW design figure.)
pub fn hs_dac_static_power(bits: u32, r_hs: f64, vddh: f64) -> Result<f64> {
    check_bits(bits)?;
    let levels = 1u64 << bits;
    let n = levels - 1;
    let sum: u64 = (1..levels).map(|k| (k - 1) * (levels - k)).sum();
    Ok(vddh * vddh / r_hs * sum as f64 / (levels as f64 * (n * n) as f64))
}

/// `G_p / H_p`: one-side equivalent resistance of ladder node `p`, in units
/// of `R_U`, from `R_p = R_(p−1) ∥ 2R_U + R_U` with `R_1 = ∞`.
pub fn r2r_node_ratios(bits: u32) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(bits as usize);
    let (mut g, mut h) = (1u64, 0u64);
    out.push((g, h));
    for _ in 2..=bits {
        let (ng, nh) = (3 * g + 2 * h, g + 2 * h);
        let div = gcd(ng, nh);
        g = ng / div;
        h = nh / div;
        out.push((g, h));
    }
    out
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Node voltages of the R-2R ladder, as fractions of `vddh`, for one code.
///
/// Node `p` (1-based) is driven by bit `B − p` through `2R_U`; the LSB end is
/// terminated by `2R_U` to ground.
pub fn r2r_node_voltages(code: u32, bits: u32) -> Vec<f64> {
    let ratios = r2r_node_ratios(bits);
    let bit = |q: u32| f64::from((code >> (bits - q)) & 1);
    (1..=bits)
        .map(|p| {
            (1..=bits)
                .map(|q| {
                    let g = ratios[p as usize - 1].0.min(ratios[q as usize - 1].0);
                    bit(q) * g as f64 / 2f64.powi((p + q - 1) as i32)
                })
                .sum()
        })
        .collect()
}

/// Average static power of one R-2R DAC over uniformly distributed codes.
pub fn r2r_static_power(bits: u32, r_u: f64, vddh: f64) -> Result<f64> {
    check_bits(bits)?;
    let mut sum = 0.0;
    for code in 0..1u32 << bits {
        let v = r2r_node_voltages(code, bits);
        for p in 1..=bits {
            let b = f64::from((code >> (bits - p)) & 1);
            sum += b * (1.0 - v[p as usize - 1]);
        }
    }
    Ok(vddh * vddh / r_u * sum / 2f64.powi(bits as i32 + 1))
}

/// R-2R static power the roll-up should charge per DAC.
pub fn r2r_static_charge(cfg: &AccelConfig) -> Result<f64> {
    match cfg.r2r_static_w {
        R2rStatic::Fixed(w) => Ok(w),
        R2rStatic::Model(_) => r2r_static_power(cfg.bits, cfg.r_u_ohm, cfg.vddh_v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPower {
    pub p_per_lambda_w: f64,
    pub total_w: f64,
}

/// Injection power so the O/E dynamic range survives two modulators, the
/// photodetector ring and `log2(d)` splitter stages. The 1/d split and the d
/// wavelengths cancel in the total.
pub fn laser_power(cfg: &AccelConfig) -> Result<LaserPower> {
    if cfg.d == 0 || !cfg.d.is_power_of_two() {
        return Err(Error::invalid(format!("d = {} is not a power of two", cfg.d)));
    }
    let chain_db = 2.0 * cfg.mrm_dr_db + cfg.rtr_dr_db;
    let split_db = f64::from(cfg.log2_d()) * cfg.splitter_loss_db;
    let p = cfg.dr_eo_w * 10f64.powf((chain_db + split_db) / 10.0);
    Ok(LaserPower {
        p_per_lambda_w: p,
        total_w: p * cfg.d as f64,
    })
}

/// One heater per modulator ring column plus the photodetector ring of each
/// row, each sized for one FSR of tuning.
pub fn heater_power(d: usize, heater_unit_w: f64) -> f64 {
    let d = d as f64;
    (1.0 + d) * heater_unit_w + d * heater_unit_w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub laser_w: f64,
    pub heater_w: f64,
    pub hs_dac_static_w: f64,
    pub r2r_static_w: f64,
    /// All d row channels (DACs, TIA, S2D, ADC, overhead) together.
    pub rows_w: f64,
    /// All d² weight DACs together.
    pub cells_w: f64,
    pub soc_w: f64,
}

pub fn power_breakdown(cfg: &AccelConfig) -> Result<PowerBreakdown> {
    cfg.validate()?;
    let laser = laser_power(cfg)?.total_w;
    let heater = heater_power(cfg.d, cfg.heater_unit_w);
    let hs = hs_dac_static_power(cfg.bits, cfg.r_hs_ohm, cfg.vddh_v)?;
    let r2r = r2r_static_charge(cfg)?;
    let d = cfg.d as f64;
    let per_row = hs + cfg.hs_dac_dyn_at_clock_w() + cfg.tia_w + cfg.s2d_w + cfg.adc_w + cfg.per_row_overhead_w;
    let rows = d * per_row;
    let cells = d * d * r2r;
    Ok(PowerBreakdown {
        laser_w: laser,
        heater_w: heater,
        hs_dac_static_w: hs,
        r2r_static_w: r2r,
        rows_w: rows,
        cells_w: cells,
        soc_w: laser + heater + rows + cells,
    })
}

pub fn soc_power(cfg: &AccelConfig) -> Result<f64> {
    Ok(power_breakdown(cfg)?.soc_w)
}

/// O-PS splitter tree footprint: `log2(d)` stages deep, one row pitch per row.
pub fn ops_area_um2(cfg: &AccelConfig) -> f64 {
    f64::from(cfg.log2_d()) * cfg.ops_stage_length_um * cfg.d as f64 * cfg.ops_row_pitch_um
}

pub fn area_mm2(cfg: &AccelConfig) -> f64 {
    let d = cfg.d as f64;
    let cell = cfg.mrm_tile_um2 + cfg.r2r_tile_um2 + cfg.per_cell_overhead_um2;
    let row = cfg.hs_dac_tile_um2 + cfg.mrm_tile_um2 + cfg.rtr_pd_tile_um2 + cfg.per_row_fixed_um2;
    (d * d * cell + d * row + ops_area_um2(cfg)) * 1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub d: usize,
    pub laser_w: f64,
    pub heater_w: f64,
    pub soc_w: f64,
    pub area_mm2: f64,
    pub throughput_mac_s: f64,
    pub density_tmac_s_mm2: f64,
    pub energy_fj_mac: f64,
}

impl PerfReport {
    pub fn throughput_tmac_s(&self) -> f64 {
        self.throughput_mac_s * 1e-12
    }
}

pub fn perf_report(cfg: &AccelConfig) -> Result<PerfReport> {
    let p = power_breakdown(cfg)?;
    let area = area_mm2(cfg);
    let throughput = (cfg.d * cfg.d) as f64 * cfg.f_clk_hz;
    Ok(PerfReport {
        d: cfg.d,
        laser_w: p.laser_w,
        heater_w: p.heater_w,
        soc_w: p.soc_w,
        area_mm2: area,
        throughput_mac_s: throughput,
        density_tmac_s_mm2: throughput * 1e-12 / area,
        energy_fj_mac: p.soc_w / throughput * 1e15,
    })
}

/// One reference performance row: d, laser mW, heater mW, SoC mW, area mm²,
/// density TMAC/s/mm², energy fJ/MAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub d: usize,
    pub laser_mw: f64,
    pub heater_mw: f64,
    pub soc_mw: f64,
    pub area_mm2: f64,
    pub density_tmac_s_mm2: f64,
    pub energy_fj_mac: f64,
}

const fn row(d: usize, laser_mw: f64, heater_mw: f64, soc_mw: f64, area_mm2: f64, density: f64, energy: f64) -> ReferenceRow {
    ReferenceRow {
        d,
        laser_mw,
        heater_mw,
        soc_mw,
        area_mm2,
        density_tmac_s_mm2: density,
        energy_fj_mac: energy,
    }
}

pub const TABLE_II: [ReferenceRow; 6] = [
    row(8, 31.6, 40.8, 99.6, 0.10, 1.26, 777.8),
    row(16, 64.3, 79.2, 198.7, 0.33, 1.56, 388.0),
    row(32, 130.7, 156.0, 400.7, 1.14, 1.80, 195.6),
    row(64, 265.6, 309.6, 818.0, 4.16, 1.97, 99.8),
    row(128, 539.9, 616.8, 1701.1, 15.77, 2.08, 51.9),
    row(256, 1097.3, 1231.2, 3653.3, 61.12, 2.14, 27.9),
];

/// Least-squares per-row electronics overhead that closes the gap between
/// the itemized blocks and the reference SoC column, with every other
/// constant taken from `base`. Returns the fit and each row's relative error.
pub fn fit_per_row_overhead(base: &AccelConfig, rows: &[ReferenceRow]) -> Result<(f64, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::invalid("no reference rows to fit"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in rows {
        let cfg = AccelConfig {
            d: r.d,
            per_row_overhead_w: 0.0,
            ..base.clone()
        };
        let residual = r.soc_mw * 1e-3 - soc_power(&cfg)?;
        let d = r.d as f64;
        num += d * residual;
        den += d * d;
    }
    let fit = num / den;
    let errors = rows
        .iter()
        .map(|r| {
            let cfg = AccelConfig {
                d: r.d,
                per_row_overhead_w: fit,
                ..base.clone()
            };
            soc_power(&cfg).map(|p| p / (r.soc_mw * 1e-3) - 1.0)
        })
        .collect::<Result<_>>()?;
    Ok((fit, errors))
}

/// Per-cell and per-row area overheads by least squares on relative error,
/// so the small arrays count as much as the large ones. Returns
/// `(per_cell_um2, per_row_um2, relative errors)`.
pub fn fit_area_overheads(base: &AccelConfig, rows: &[ReferenceRow]) -> Result<(f64, f64, Vec<f64>)> {
    if rows.len() < 2 {
        return Err(Error::invalid("area fit needs at least two rows"));
    }
    // Normal equations of min Σ ((a·x + b·y − t)/A)².
    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let cfg = AccelConfig {
            d: r.d,
            per_cell_overhead_um2: 0.0,
            per_row_fixed_um2: 0.0,
            ..base.clone()
        };
        let w = 1.0 / r.area_mm2;
        let d = r.d as f64;
        let x = d * d * 1e-6 * w;
        let y = d * 1e-6 * w;
        let t = (r.area_mm2 - area_mm2(&cfg)) * w;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxt += x * t;
        syt += y * t;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < f64::MIN_POSITIVE {
        return Err(Error::solver("area fit is singular"));
    }
    let cell = (sxt * syy - syt * sxy) / det;
    let row = (sxx * syt - sxy * sxt) / det;
    let errors = rows
        .iter()
        .map(|r| {
            let cfg = AccelConfig {
                d: r.d,
                per_cell_overhead_um2: cell,
                per_row_fixed_um2: row,
                ..base.clone()
            };
            area_mm2(&cfg) / r.area_mm2 - 1.0
        })
        .collect();
    Ok((cell, row, errors))
}
