//! Matrix-vector multiplication through the optical chain.
//!
//! Signal flow for output row `i`:
//!
//! ```text
//! z_j --DAC--> V-MRM(λ_j) --O-MUX--> O-PS 1:rows --> M-MRM(i,j) ... --> RTR-PD --> TIA --> S2D --> ADC
//! ```
//!
//! Optical quantities are carried in "code units": the modulation depth of a
//! ring times `N = 2^B − 1`, so that an ideal ring driven with code `k` carries
//! exactly `k`. A row's ADC decision is taken on the sum of per-wavelength
//! products normalized to the chain's full scale, which makes the ideal chain
//! agree with the integer oracle bit for bit. Physical powers, currents and
//! voltages are derived from the same products and only feed the trace and
//! the noise model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AccelConfig;
use crate::eo::{self, MrmTransferModel};
use crate::error::{Error, Result};
use crate::frontend::{self, AdcModel};
use crate::power::laser_power;
use crate::quant::{max_code, round_ratio_half_up, QuantizedMatrix, QuantizedVector};
use crate::resonator::WavelengthPlan;

/// How the rings turn codes into modulation depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// Exactly linear modulation.
    #[default]
    Ideal,
    /// Lorentzian rings behind a plain B-bit DAC.
    Uncalibrated,
    /// Lorentzian rings behind the (B+1)-bit DAC and its linearizing map.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseMode {
    #[default]
    Off,
    /// Additive Gaussian noise at the ADC input with the receive-chain
    /// variance for the row's photocurrent.
    Gaussian { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SimFlags {
    pub nonlinearity: Nonlinearity,
    pub noise: NoiseMode,
    /// Let every weight ring act on all wavelengths through its Lorentzian tail.
    pub crosstalk: bool,
    /// Weight each wavelength's absorption by `λ/n_g`, normalized to 1.
    pub absorption_weighting: bool,
    /// Record per-stage powers.
    pub record_trace: bool,
}

impl SimFlags {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn traced(mut self) -> Self {
        self.record_trace = true;
        self
    }

    /// Ideal, noise-free and crosstalk-free: the configuration in which the
    /// simulator must reproduce the oracles exactly.
    pub fn is_exact(&self) -> bool {
        self.nonlinearity == Nonlinearity::Ideal
            && self.noise == NoiseMode::Off
            && !self.crosstalk
            && !self.absorption_weighting
    }
}

/// Per-stage view of one MVM. Powers in W, indexed `[wavelength]` for the
/// shared stages and `[row][wavelength]` after the weight rings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub laser_w: Vec<f64>,
    pub after_vmrm_w: Vec<f64>,
    pub after_omux_w: Vec<f64>,
    pub after_ops_w: Vec<f64>,
    pub after_mmrm_w: Vec<Vec<f64>>,
    pub absorbed_w: Vec<Vec<f64>>,
    pub photocurrent_a: Vec<f64>,
    pub tia_out_v: Vec<f64>,
    pub adc_in_v: Vec<f64>,
    pub codes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvmResult {
    pub codes: QuantizedVector,
    /// ADC input in LSB before rounding, noise included.
    pub analog_lsb: Vec<f64>,
    /// Rows whose analog value fell outside the converter range.
    pub saturated: usize,
    pub trace: Option<ChainTrace>,
}

/// Precomputed optical chain for one configuration and wavelength plan.
#[derive(Debug, Clone)]
pub struct MvmEngine {
    cfg: AccelConfig,
    plan: WavelengthPlan,
    bits: u32,
    n: f64,
    /// `[mode][wavelength][code]`, in code units.
    depth: [Vec<Vec<f64>>; 3],
    /// `[mode][code]` drive voltages, shared by all wavelengths.
    volts: [Vec<f64>; 3],
    rings: Vec<MrmTransferModel>,
    absorption: Vec<f64>,
    p_lambda_w: f64,
    g_mrm: f64,
    g_rtr: f64,
    transimpedance: f64,
    amp_gain: f64,
}

fn mode_index(m: Nonlinearity) -> usize {
    match m {
        Nonlinearity::Ideal => 0,
        Nonlinearity::Uncalibrated => 1,
        Nonlinearity::Calibrated => 2,
    }
}

impl MvmEngine {
    pub fn new(cfg: &AccelConfig, plan: &WavelengthPlan) -> Result<Self> {
        cfg.validate()?;
        plan.validate()?;
        if plan.d != cfg.d {
            return Err(Error::shape(format!(
                "plan has {} wavelengths but the config has d = {}",
                plan.d, cfg.d
            )));
        }
        let bits = cfg.bits;
        let top = max_code(bits);
        let n = f64::from(top);
        let vddh = cfg.vddh_v;

        let rings = plan
            .lambdas
            .iter()
            .map(|&l| cfg.mrm_model(l))
            .collect::<Result<Vec<_>>>()?;

        let linear_volts: Vec<f64> = (0..=top).map(|k| eo::dac_level(k, bits, vddh)).collect::<Result<_>>()?;
        let ideal: Vec<Vec<f64>> = vec![(0..=top).map(f64::from).collect(); plan.d];
        let mut uncal = Vec::with_capacity(plan.d);
        let mut cal = Vec::with_capacity(plan.d);
        let mut cal_volts = Vec::new();
        for (ring, &lambda) in rings.iter().zip(&plan.lambdas) {
            let raw = eo::normalized_eo(ring, lambda, vddh, &linear_volts)?;
            uncal.push(raw.iter().map(|e| e * n).collect());
            let map = eo::build_calibration(ring, lambda, bits, vddh)?;
            let ext = eo::extended_transfer(ring, lambda, bits, vddh)?;
            cal.push(eo::calibrated_transfer(&map, &ext).iter().map(|e| e * n).collect());
            if cal_volts.is_empty() {
                cal_volts = map
                    .mapping
                    .iter()
                    .map(|&c| eo::dac_level(c, bits + 1, vddh))
                    .collect::<Result<_>>()?;
            }
        }

        let lambda_top = plan.lambdas.iter().copied().fold(f64::MIN, f64::max);
        // Affine dispersion keeps n_g constant, so λ/n_g is proportional to λ.
        let absorption = plan.lambdas.iter().map(|&l| l / lambda_top).collect();

        Ok(Self {
            cfg: cfg.clone(),
            plan: plan.clone(),
            bits,
            n,
            depth: [ideal, uncal, cal],
            volts: [linear_volts.clone(), linear_volts, cal_volts],
            rings,
            absorption,
            p_lambda_w: laser_power(cfg)?.p_per_lambda_w,
            g_mrm: 10f64.powf(-cfg.mrm_dr_db / 10.0),
            g_rtr: 10f64.powf(-cfg.rtr_dr_db / 10.0),
            transimpedance: cfg.tia.dc_transimpedance(),
            amp_gain: cfg.amp.dc_gain(),
        })
    }

    pub fn config(&self) -> &AccelConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &WavelengthPlan {
        &self.plan
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Wavelength count, the width of every input vector.
    pub fn cols(&self) -> usize {
        self.plan.d
    }

    /// Modulation depth table of wavelength `j`, in code units.
    pub fn depth_table(&self, mode: Nonlinearity, j: usize) -> &[f64] {
        &self.depth[mode_index(mode)][j]
    }

    fn split_gain(&self, rows: usize) -> f64 {
        let stages = rows.trailing_zeros() as f64;
        10f64.powf(-stages * self.cfg.splitter_loss_db / 10.0) / rows as f64
    }

    fn weights(&self, flags: &SimFlags) -> Vec<f64> {
        if flags.absorption_weighting {
            self.absorption.clone()
        } else {
            vec![1.0; self.cols()]
        }
    }

    /// Photocurrent per unit of normalized row sum `Σ w_k·b_k/N²`.
    fn amps_per_unit(&self, rows: usize) -> f64 {
        self.p_lambda_w * self.g_mrm * self.split_gain(rows) * self.g_mrm * self.g_rtr * self.cfg.responsivity_a_per_w
    }

    /// Differential swing at the ADC input with every ring fully on.
    pub fn chain_full_scale_v(&self, rows: usize, flags: &SimFlags) -> f64 {
        let w: f64 = self.weights(flags).iter().sum();
        self.amps_per_unit(rows) * w * self.transimpedance * self.amp_gain
    }

    pub fn adc(&self, rows: usize, flags: &SimFlags) -> AdcModel {
        self.cfg.adc(self.chain_full_scale_v(rows, flags))
    }

    pub(crate) fn check_rows(&self, rows: usize) -> Result<()> {
        if rows == 0 || !rows.is_power_of_two() {
            return Err(Error::shape(format!("{rows} rows cannot be fed by a binary splitter tree")));
        }
        Ok(())
    }

    /// Modulation depth of the input vector after the V-MRMs, in code units.
    pub fn modulate_inputs(&self, z: &[u32], flags: &SimFlags) -> Vec<f64> {
        let tables = &self.depth[mode_index(flags.nonlinearity)];
        z.iter().enumerate().map(|(j, &c)| tables[j][c as usize]).collect()
    }

    /// Per-wavelength product after one row of weight rings, in code² units.
    pub fn row_bundle(&self, y_row: &[u32], m_z: &[f64], flags: &SimFlags) -> Vec<f64> {
        let mode = mode_index(flags.nonlinearity);
        let tables = &self.depth[mode];
        let mut bundle: Vec<f64> = y_row
            .iter()
            .zip(m_z)
            .enumerate()
            .map(|(j, (&y, &mz))| mz * tables[j][y as usize])
            .collect();
        if flags.crosstalk {
            let volts = &self.volts[mode];
            for (j, (&y, ring)) in y_row.iter().zip(&self.rings).enumerate() {
                let v = volts[y as usize];
                for (k, b) in bundle.iter_mut().enumerate() {
                    if k != j {
                        *b *= ring.transmission(self.plan.lambdas[k], v) / ring.insertion_gain;
                    }
                }
            }
        }
        bundle
    }

    /// Normalized row sum `Σ w_k·b_k / (N·W)`: the ADC input in LSB when the
    /// converter spans the chain's full scale.
    pub(crate) fn lsb_of_bundle(&self, bundle: &[f64], weights: &[f64], w_total: f64) -> f64 {
        let s: f64 = bundle.iter().zip(weights).map(|(b, w)| b * w).sum();
        s / (self.n * w_total)
    }

    pub(crate) fn decide(
        &self,
        lsb: f64,
        current_a: f64,
        adc: &AdcModel,
        chain_fs: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, u32, bool) {
        let mut u = lsb;
        if self.cfg.adc_full_scale_v.is_some() {
            u *= chain_fs / adc.full_scale;
        }
        if let Some(rng) = rng {
            let sigma_v = frontend::oe_noise_power(&self.cfg.tia, &self.cfg.amp, current_a).total.sqrt();
            let sigma = sigma_v / adc.v_lsb();
            if sigma > 0.0 {
                u += Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
            }
        }
        let top = max_code(self.bits);
        let raw = (u + 0.5 + 1e-9).floor();
        let saturated = raw < 0.0 || raw > f64::from(top);
        (u, raw.clamp(0.0, f64::from(top)) as u32, saturated)
    }

    pub(crate) fn row_rng(seed: u64, stream: u64, row: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((stream << 32) ^ row as u64);
        rng
    }

    pub fn simulate(&self, y: &QuantizedMatrix, z: &QuantizedVector, flags: &SimFlags) -> Result<MvmResult> {
        self.simulate_stream(y, z, flags, 0)
    }

    /// Like [`simulate`](Self::simulate) with an explicit noise stream, so
    /// that independent MVMs sharing one seed draw independent noise.
    pub fn simulate_stream(
        &self,
        y: &QuantizedMatrix,
        z: &QuantizedVector,
        flags: &SimFlags,
        stream: u64,
    ) -> Result<MvmResult> {
        if y.bits() != self.bits || z.bits() != self.bits {
            return Err(Error::shape("operand width differs from the configured B"));
        }
        if y.cols() != self.cols() || z.len() != self.cols() {
            return Err(Error::shape(format!(
                "weights {}x{} and input {} do not fit {} wavelengths",
                y.rows(),
                y.cols(),
                z.len(),
                self.cols()
            )));
        }
        let rows = y.rows();
        self.check_rows(rows)?;

        let weights = self.weights(flags);
        let w_total: f64 = weights.iter().sum();
        let chain_fs = self.chain_full_scale_v(rows, flags);
        let adc = self.cfg.adc(chain_fs);
        let m_z = self.modulate_inputs(z.codes(), flags);
        let amps_per_unit = self.amps_per_unit(rows) / (self.n * self.n);

        struct Row {
            u: f64,
            code: u32,
            saturated: bool,
            bundle: Vec<f64>,
            current: f64,
        }
        let rows_out: Vec<Row> = (0..rows)
            .into_par_iter()
            .map(|i| {
                let bundle = self.row_bundle(y.row(i), &m_z, flags);
                let lsb = self.lsb_of_bundle(&bundle, &weights, w_total);
                let current = amps_per_unit * bundle.iter().zip(&weights).map(|(b, w)| b * w).sum::<f64>();
                let mut rng = match flags.noise {
                    NoiseMode::Off => None,
                    NoiseMode::Gaussian { seed } => Some(Self::row_rng(seed, stream, i)),
                };
                let (u, code, saturated) = self.decide(lsb, current, &adc, chain_fs, rng.as_mut());
                Row {
                    u,
                    code,
                    saturated,
                    bundle,
                    current,
                }
            })
            .collect();

        let codes = QuantizedVector::new(self.bits, rows_out.iter().map(|r| r.code).collect())?;
        let trace = flags.record_trace.then(|| {
            let cols = self.cols();
            let laser = vec![self.p_lambda_w; cols];
            let after_v: Vec<f64> = m_z.iter().map(|m| self.p_lambda_w * self.g_mrm * m / self.n).collect();
            let split = self.split_gain(rows);
            let after_ops: Vec<f64> = after_v.iter().map(|p| p * split).collect();
            let unit = self.p_lambda_w * self.g_mrm * split * self.g_mrm / (self.n * self.n);
            let after_m: Vec<Vec<f64>> = rows_out
                .iter()
                .map(|r| r.bundle.iter().map(|b| b * unit).collect())
                .collect();
            let absorbed: Vec<Vec<f64>> = after_m
                .iter()
                .map(|row| row.iter().zip(&weights).map(|(p, w)| p * self.g_rtr * w).collect())
                .collect();
            let currents: Vec<f64> = rows_out.iter().map(|r| r.current).collect();
            let tia: Vec<f64> = currents.iter().map(|i| i * self.transimpedance).collect();
            ChainTrace {
                laser_w: laser,
                after_omux_w: after_v.clone(),
                after_vmrm_w: after_v,
                after_ops_w: after_ops,
                after_mmrm_w: after_m,
                absorbed_w: absorbed,
                adc_in_v: tia.iter().map(|v| v * self.amp_gain).collect(),
                tia_out_v: tia,
                photocurrent_a: currents,
                codes: codes.codes().to_vec(),
            }
        });
        Ok(MvmResult {
            analog_lsb: rows_out.iter().map(|r| r.u).collect(),
            saturated: rows_out.iter().filter(|r| r.saturated).count(),
            codes,
            trace,
        })
    }
}

/// Integer reference: `round(Σ_j y_ij·z_j / (cols·N))`, ties up.
pub fn mvm_oracle(y: &QuantizedMatrix, z: &QuantizedVector) -> Result<QuantizedVector> {
    if y.bits() != z.bits() {
        return Err(Error::shape("weight and input widths differ"));
    }
    if y.cols() != z.len() {
        return Err(Error::shape(format!(
            "{}x{} weights against a length-{} input",
            y.rows(),
            y.cols(),
            z.len()
        )));
    }
    let n = u128::from(max_code(y.bits()));
    let den = y.cols() as u128 * n;
    let codes = (0..y.rows())
        .map(|i| {
            let s: u128 = y
                .row(i)
                .iter()
                .zip(z.codes())
                .map(|(&a, &b)| u128::from(a) * u128::from(b))
                .sum();
            round_ratio_half_up(s, den) as u32
        })
        .collect();
    QuantizedVector::new(y.bits(), codes)
}

/// Build an engine and run one MVM.
pub fn mvm_simulate(
    y: &QuantizedMatrix,
    z: &QuantizedVector,
    cfg: &AccelConfig,
    plan: &WavelengthPlan,
    flags: &SimFlags,
) -> Result<MvmResult> {
    MvmEngine::new(cfg, plan)?.simulate(y, z, flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub max_abs_lsb: f64,
    pub rms_lsb: f64,
    /// Share of elements stuck on a rail (0 or full scale) that the reference
    /// does not put there.
    pub saturation_rate: f64,
}

pub fn error_stats(sim: &[u32], reference: &[u32], bits: u32) -> Result<ErrorStats> {
    if sim.len() != reference.len() {
        return Err(Error::shape(format!(
            "{} simulated codes against {} reference codes",
            sim.len(),
            reference.len()
        )));
    }
    if sim.is_empty() {
        return Ok(ErrorStats {
            max_abs_lsb: 0.0,
            rms_lsb: 0.0,
            saturation_rate: 0.0,
        });
    }
    let top = max_code(bits);
    let mut max = 0i64;
    let mut sq = 0.0;
    let mut sat = 0usize;
    for (&s, &r) in sim.iter().zip(reference) {
        let e = i64::from(s) - i64::from(r);
        max = max.max(e.abs());
        sq += (e * e) as f64;
        if (s == 0 || s == top) && s != r {
            sat += 1;
        }
    }
    let n = sim.len() as f64;
    Ok(ErrorStats {
        max_abs_lsb: max as f64,
        rms_lsb: (sq / n).sqrt(),
        saturation_rate: sat as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonator::{calibrate_dispersion, plan_wavelengths, TABLE_I_CASES};

    fn engine(d: usize) -> MvmEngine {
        let disp = calibrate_dispersion(&TABLE_I_CASES[0].2).unwrap();
        let plan = plan_wavelengths(d, 1550.0, 0.5, &disp).unwrap();
        MvmEngine::new(&AccelConfig::with_d(d), &plan).unwrap()
    }

    #[test]
    fn full_scale_inputs_saturate_to_top_code() {
        let e = engine(8);
        let y = QuantizedMatrix::from_fn(4, 8, 8, |_, _| 15).unwrap();
        let z = QuantizedVector::new(4, vec![15; 8]).unwrap();
        let r = e.simulate(&y, &z, &SimFlags::ideal()).unwrap();
        assert!(r.codes.codes().iter().all(|&c| c == 15));
        assert_eq!(r.saturated, 0);
    }

    #[test]
    fn scaled_identity_picks_one_input() {
        let e = engine(4);
        let y = QuantizedMatrix::scaled_identity(4, 4).unwrap();
        let z = QuantizedVector::new(4, vec![3, 8, 10, 15]).unwrap();
        let want = vec![1, 2, 3, 4]; // round(z/4)
        assert_eq!(mvm_oracle(&y, &z).unwrap().codes(), &want[..]);
        assert_eq!(e.simulate(&y, &z, &SimFlags::ideal()).unwrap().codes.codes(), &want[..]);
    }

    #[test]
    fn chain_full_scale_matches_the_photocurrent_budget() {
        let e = engine(32);
        let fs = e.chain_full_scale_v(32, &SimFlags::ideal());
        // 335 µA through 1027 Ω and a 3x amplifier.
        assert!((fs - 1.0326).abs() < 1e-3, "{fs}");
    }

    #[test]
    fn zero_input_gives_dark_chain() {
        let e = engine(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = QuantizedMatrix::random(4, 8, 8, &mut rng);
        let z = QuantizedVector::zeros(4, 8).unwrap();
        let r = e.simulate(&y, &z, &SimFlags::ideal().traced()).unwrap();
        assert!(r.codes.codes().iter().all(|&c| c == 0));
        let t = r.trace.unwrap();
        assert!(t.after_vmrm_w.iter().all(|&p| p == 0.0));
        assert!(t.photocurrent_a.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn noise_is_seeded() {
        let e = engine(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = QuantizedMatrix::random(4, 8, 8, &mut rng);
        let z = QuantizedVector::random(4, 8, &mut rng);
        let flags = SimFlags {
            noise: NoiseMode::Gaussian { seed: 9 },
            ..SimFlags::default()
        };
        let a = e.simulate(&y, &z, &flags).unwrap();
        let b = e.simulate(&y, &z, &flags).unwrap();
        assert_eq!(a, b);
        let clean = e.simulate(&y, &z, &SimFlags::ideal()).unwrap();
        assert_ne!(a.analog_lsb, clean.analog_lsb);
    }

    #[test]
    fn error_stats_arithmetic() {
        let s = error_stats(&[1, 2, 3, 4], &[1, 2, 3, 4], 4).unwrap();
        assert_eq!((s.max_abs_lsb, s.rms_lsb, s.saturation_rate), (0.0, 0.0, 0.0));
        let s = error_stats(&[1, 2, 5, 4], &[1, 2, 3, 4], 4).unwrap();
        assert_eq!((s.max_abs_lsb, s.rms_lsb), (2.0, 1.0));
        assert!(error_stats(&[1], &[1, 2], 4).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let e = engine(4);
        let y = QuantizedMatrix::scaled_identity(4, 4).unwrap();
        let z = QuantizedVector::zeros(4, 3).unwrap();
        assert!(e.simulate(&y, &z, &SimFlags::ideal()).is_err());
        let y3 = QuantizedMatrix::from_fn(4, 3, 4, |_, _| 1).unwrap();
        let z4 = QuantizedVector::zeros(4, 4).unwrap();
        assert!(e.simulate(&y3, &z4, &SimFlags::ideal()).is_err());
    }
}
