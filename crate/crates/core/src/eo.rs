//! Micro-ring E/O transfer, DAC code maps and linearity metrics.
//!
//! The ring's through-port response is a Lorentzian notch whose center moves
//! linearly with reverse bias. A B-bit input drives a (B+1)-bit DAC through a
//! code map that picks 2^B of the 2^(B+1) levels to straighten the transfer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::check_bits;

/// Logic latency added to the analog settling time inside one clock period.
pub const LOGIC_LATENCY_S: f64 = 100e-12;

/// Lorentzian all-pass ring with a bias-tuned resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrmTransferModel {
    pub q_factor: f64,
    pub lambda_res0_nm: f64,
    pub shift_nm_per_v: f64,
    /// Linear gain at the notch center, relative to `insertion_gain`.
    pub t_min: f64,
    pub insertion_gain: f64,
}

impl MrmTransferModel {
    /// Ring whose 0 V..`v_max` sweep of a laser parked on the 0 V resonance
    /// spans exactly `dr_db` of transmission.
    pub fn with_dynamic_range(
        q_factor: f64,
        lambda_res0_nm: f64,
        shift_nm_per_v: f64,
        v_max: f64,
        dr_db: f64,
    ) -> Result<Self> {
        if !(q_factor > 0.0 && lambda_res0_nm > 0.0 && shift_nm_per_v > 0.0 && v_max > 0.0 && dr_db > 0.0) {
            return Err(Error::invalid("ring parameters must be positive"));
        }
        let hwhm = lambda_res0_nm / (2.0 * q_factor);
        let x = shift_nm_per_v * v_max / hwhm;
        let lorentz = 1.0 / (1.0 + x * x);
        let ratio = 10f64.powf(dr_db / 10.0);
        // g(0) = t, g(v_max) = 1 − (1 − t)·L, ratio = g(v_max)/g(0).
        let t_min = (1.0 - lorentz) / (ratio - lorentz);
        if !(t_min > 0.0 && t_min < 1.0) {
            return Err(Error::solver(format!(
                "a {dr_db} dB swing is out of reach for this ring"
            )));
        }
        Ok(Self {
            q_factor,
            lambda_res0_nm,
            shift_nm_per_v,
            t_min,
            insertion_gain: 1.0,
        })
    }

    /// The default modulator: Q = 10^4, 0.04 nm/V, 2.5 dB over 0..2.4 V.
    pub fn fig4(lambda_res0_nm: f64) -> Self {
        Self::with_dynamic_range(1.0e4, lambda_res0_nm, 0.04, 2.4, 2.5).expect("default ring is valid")
    }

    #[inline]
    pub fn hwhm_nm(&self) -> f64 {
        self.lambda_res0_nm / (2.0 * self.q_factor)
    }

    #[inline]
    pub fn resonance_nm(&self, v: f64) -> f64 {
        self.lambda_res0_nm + self.shift_nm_per_v * v
    }

    /// Linear through-port power gain.
    #[inline]
    pub fn transmission(&self, lambda_nm: f64, v: f64) -> f64 {
        let x = (lambda_nm - self.resonance_nm(v)) / self.hwhm_nm();
        self.insertion_gain * (1.0 - (1.0 - self.t_min) / (1.0 + x * x))
    }

    pub fn with_resonance(&self, lambda_res0_nm: f64) -> Self {
        Self {
            lambda_res0_nm,
            ..*self
        }
    }
}

/// E/O value of each drive voltage, normalized so that 0 V maps to 0 and
/// `vddh` maps to 1. The value rises as the notch walks off the laser line.
pub fn normalized_eo(model: &MrmTransferModel, lambda_laser_nm: f64, vddh: f64, volts: &[f64]) -> Result<Vec<f64>> {
    let g0 = model.transmission(lambda_laser_nm, 0.0);
    let g1 = model.transmission(lambda_laser_nm, vddh);
    let span = g1 - g0;
    if !(span.abs() > f64::EPSILON * g0.max(1e-300)) {
        return Err(Error::solver("ring transfer is flat over the drive range"));
    }
    Ok(volts
        .iter()
        .map(|&v| (model.transmission(lambda_laser_nm, v) - g0) / span)
        .collect())
}

/// Output voltage of a uniform `bits`-wide DAC.
pub fn dac_level(code: u32, bits: u32, vddh: f64) -> Result<f64> {
    check_bits(bits)?;
    let top = (1u32 << bits) - 1;
    if code > top {
        return Err(Error::invalid(format!("code {code} exceeds {bits}-bit DAC")));
    }
    Ok(f64::from(code) * vddh / f64::from(top))
}

/// Which of the 2^(B+1) extended DAC codes each B-bit input selects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub bits: u32,
    pub mapping: Vec<u32>,
}

impl CalibrationMap {
    /// Evenly spread picks `round(k·(2M−1)/N)` with `M = 2^B`, `N = 2^B − 1`.
    /// Close to every second extended code, with both ends pinned.
    pub fn uniform(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if bits >= 16 {
            return Err(Error::invalid("extended code would need more than 16 bits"));
        }
        let n = (1u64 << bits) - 1;
        let top = (1u64 << (bits + 1)) - 1;
        let mapping = (0..=n)
            .map(|k| ((2 * k * top + n) / (2 * n)) as u32)
            .collect();
        Ok(Self { bits, mapping })
    }

    pub fn extended_bits(&self) -> u32 {
        self.bits + 1
    }

    pub fn apply(&self, code: u32) -> u32 {
        self.mapping[code as usize]
    }

    /// Map outputs are strictly increasing and inside the extended range.
    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)?;
        if self.mapping.len() != 1usize << self.bits {
            return Err(Error::shape("calibration map length must be 2^B"));
        }
        let top = (1u32 << (self.bits + 1)) - 1;
        if self.mapping.iter().any(|&c| c > top) {
            return Err(Error::invalid("calibration map points past the extended DAC"));
        }
        if self.mapping.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("calibration map must be strictly increasing"));
        }
        Ok(())
    }
}

/// Pick `target_count` of `values` (strictly increasing indices, first and
/// last pinned to the ends) that best track the ramp `k/(target_count−1)`.
///
/// Two dynamic-programming passes: the first finds the smallest achievable
/// worst-case deviation, the second minimizes the summed deviation among
/// selections that attain it. Both are exact over all monotone selections.
pub fn calibrate_curve(values: &[f64], target_count: usize) -> Result<Vec<usize>> {
    let m = values.len();
    if target_count < 2 || m < target_count {
        return Err(Error::invalid(format!(
            "cannot pick {target_count} levels out of {m}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite transfer value"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::solver("achievable E/O levels are not monotone"));
    }
    let n = target_count - 1;
    let err = |k: usize, c: usize| (values[c] - k as f64 / n as f64).abs();

    // Pass 1: minimax.
    let worst = {
        let mut best = vec![f64::INFINITY; m];
        best[0] = err(0, 0);
        for k in 1..=n {
            let mut next = vec![f64::INFINITY; m];
            let mut run = f64::INFINITY;
            for c in 1..m {
                run = run.min(best[c - 1]);
                if c >= k && m - 1 - c >= n - k {
                    next[c] = run.max(err(k, c));
                }
            }
            best = next;
        }
        best[m - 1]
    };

    // Pass 2: least total error under the minimax cap.
    let cap = worst + 1e-12;
    let mut cost = vec![vec![f64::INFINITY; m]; n + 1];
    let mut from = vec![vec![usize::MAX; m]; n + 1];
    if err(0, 0) <= cap {
        cost[0][0] = err(0, 0);
    }
    for k in 1..=n {
        let (prev, cur) = cost.split_at_mut(k);
        let prev = &prev[k - 1];
        let cur = &mut cur[0];
        let mut run = (f64::INFINITY, usize::MAX);
        for c in 1..m {
            if prev[c - 1] < run.0 {
                run = (prev[c - 1], c - 1);
            }
            let e = err(k, c);
            if e <= cap && run.0.is_finite() && (k < n || c == m - 1) {
                cur[c] = run.0 + e;
                from[k][c] = run.1;
            }
        }
    }
    if !cost[n][m - 1].is_finite() {
        return Err(Error::solver("calibration search found no selection"));
    }
    let mut picks = vec![0usize; n + 1];
    let mut c = m - 1;
    for k in (0..=n).rev() {
        picks[k] = c;
        if k > 0 {
            c = from[k][c];
        }
    }
    Ok(picks)
}

/// Normalized E/O value of every extended (B+1)-bit DAC code.
pub fn extended_transfer(model: &MrmTransferModel, lambda_laser_nm: f64, bits: u32, vddh: f64) -> Result<Vec<f64>> {
    check_bits(bits + 1)?;
    let volts: Vec<f64> = (0..1u32 << (bits + 1))
        .map(|c| dac_level(c, bits + 1, vddh))
        .collect::<Result<_>>()?;
    normalized_eo(model, lambda_laser_nm, vddh, &volts)
}

/// Normalized E/O value of each B-bit code driven straight through a B-bit DAC.
pub fn uncalibrated_transfer(model: &MrmTransferModel, lambda_laser_nm: f64, bits: u32, vddh: f64) -> Result<Vec<f64>> {
    check_bits(bits)?;
    let volts: Vec<f64> = (0..1u32 << bits)
        .map(|c| dac_level(c, bits, vddh))
        .collect::<Result<_>>()?;
    normalized_eo(model, lambda_laser_nm, vddh, &volts)
}

/// Build the linearizing map for a ring driven at `lambda_laser_nm`.
pub fn build_calibration(model: &MrmTransferModel, lambda_laser_nm: f64, bits: u32, vddh: f64) -> Result<CalibrationMap> {
    let reach = model.resonance_nm(vddh);
    let (lo, hi) = if reach >= model.lambda_res0_nm {
        (model.lambda_res0_nm, reach)
    } else {
        (reach, model.lambda_res0_nm)
    };
    let slack = model.hwhm_nm();
    if lambda_laser_nm < lo - slack || lambda_laser_nm > hi + slack {
        return Err(Error::invalid(format!(
            "laser at {lambda_laser_nm} nm is outside the tunable range {lo:.4}..{hi:.4} nm"
        )));
    }
    let values = extended_transfer(model, lambda_laser_nm, bits, vddh)?;
    let picks = calibrate_curve(&values, 1usize << bits)?;
    Ok(CalibrationMap {
        bits,
        mapping: picks.into_iter().map(|c| c as u32).collect(),
    })
}

/// E/O values of the calibrated input codes.
pub fn calibrated_transfer(map: &CalibrationMap, extended: &[f64]) -> Vec<f64> {
    map.mapping.iter().map(|&c| extended[c as usize]).collect()
}

/// Differential and integral nonlinearity, in LSB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearity {
    pub dnl: Vec<f64>,
    pub inl: Vec<f64>,
}

impl Linearity {
    pub fn max_abs_dnl(&self) -> f64 {
        self.dnl.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn max_abs_inl(&self) -> f64 {
        self.inl.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }
}

/// LSB is the endpoint span over `n − 1` steps.
pub fn dnl_inl(levels: &[f64]) -> Result<Linearity> {
    let n = levels.len();
    if n < 2 {
        return Err(Error::invalid("DNL/INL needs at least two levels"));
    }
    let lsb = (levels[n - 1] - levels[0]) / (n - 1) as f64;
    if lsb == 0.0 || !lsb.is_finite() {
        return Err(Error::invalid("transfer has zero span"));
    }
    Ok(Linearity {
        dnl: levels.windows(2).map(|w| (w[1] - w[0]) / lsb - 1.0).collect(),
        inl: levels
            .iter()
            .enumerate()
            .map(|(k, &g)| (g - levels[0]) / lsb - k as f64)
            .collect(),
    })
}

/// Voltage-mode DAC driving a capacitive ring electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacTiming {
    pub r_hs_ohm: f64,
    pub c_load_f: f64,
    pub resolution_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingReport {
    pub ok: bool,
    pub rc_s: f64,
    pub settle_time_s: f64,
    /// Clock period left after settling plus logic latency; negative if late.
    pub margin_s: f64,
}

/// Settling to within `2^−(B+1)` of the final level (half an LSB of the
/// extended code) plus the logic latency must fit in one clock period.
pub fn check_settling(t: &DacTiming, clock_hz: f64) -> SettlingReport {
    let rc = t.r_hs_ohm * t.c_load_f;
    let settle = rc * (2f64).powi(t.resolution_bits as i32 + 1).ln();
    let period = 1.0 / clock_hz;
    let margin = period - settle - LOGIC_LATENCY_S;
    SettlingReport {
        ok: margin >= 0.0,
        rc_s: rc,
        settle_time_s: settle,
        margin_s: margin,
    }
}

/// Quantized probe of a ring against the wavelength it should sit on.
///
/// The sign of the reading says which way the resonance has to move: positive
/// means the resonance is red of the target, zero means the probe cannot tell.
pub trait Readback {
    fn read(&mut self, model: &MrmTransferModel, target_nm: f64) -> i64;
}

/// Noise-free comparator on the resonance position.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealReadback;

impl Readback for IdealReadback {
    fn read(&mut self, model: &MrmTransferModel, target_nm: f64) -> i64 {
        let diff = model.lambda_res0_nm - target_nm;
        if diff > 0.0 {
            1
        } else if diff < 0.0 {
            -1
        } else {
            0
        }
    }
}

/// Two transmission probes at `target ± HWHM`, each digitized by a
/// `bits`-wide converter. The difference of codes is the reading.
#[derive(Debug, Clone, Copy)]
pub struct ProbeReadback {
    pub bits: u32,
    pub reads: usize,
}

impl ProbeReadback {
    pub fn new(bits: u32) -> Self {
        Self { bits, reads: 0 }
    }
}

impl Readback for ProbeReadback {
    fn read(&mut self, model: &MrmTransferModel, target_nm: f64) -> i64 {
        self.reads += 1;
        let h = model.hwhm_nm();
        let fs = model.insertion_gain;
        let blue = crate::frontend::quantize_lsb(model.transmission(target_nm - h, 0.0), fs, self.bits);
        let red = crate::frontend::quantize_lsb(model.transmission(target_nm + h, 0.0), fs, self.bits);
        // A red-shifted resonance darkens the red probe.
        i64::from(blue) - i64::from(red)
    }
}

pub const TRIM_TOLERANCE_NM: f64 = 1e-4;
pub const TRIM_MAX_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimResult {
    pub model: MrmTransferModel,
    pub steps: usize,
}

/// Bisect the resonance offset until the ring sits on `target_nm`.
///
/// The offset is searched over `±capture_nm` around the untrimmed resonance;
/// the loop only ever sees the sign of quantized readings.
pub fn trim_resonance<R: Readback + ?Sized>(
    model: &MrmTransferModel,
    target_nm: f64,
    capture_nm: f64,
    readback: &mut R,
) -> Result<TrimResult> {
    if !(capture_nm > 0.0) {
        return Err(Error::invalid("capture range must be positive"));
    }
    let offset = target_nm - model.lambda_res0_nm;
    if offset.abs() > capture_nm {
        return Err(Error::invalid(format!(
            "target is {offset:.4} nm away, outside the ±{capture_nm} nm capture range"
        )));
    }
    if readback.read(model, target_nm) == 0 {
        return Ok(TrimResult {
            model: *model,
            steps: 0,
        });
    }
    let (mut lo, mut hi) = (-capture_nm, capture_nm);
    for step in 1..=TRIM_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let trial = model.with_resonance(model.lambda_res0_nm + mid);
        let r = readback.read(&trial, target_nm);
        if r > 0 {
            hi = mid;
        } else if r < 0 {
            lo = mid;
        }
        if r == 0 || hi - lo <= 2.0 * TRIM_TOLERANCE_NM {
            let settled = if r == 0 { mid } else { 0.5 * (lo + hi) };
            return Ok(TrimResult {
                model: model.with_resonance(model.lambda_res0_nm + settled),
                steps: step,
            });
        }
    }
    Err(Error::solver(format!(
        "resonance trim did not converge in {TRIM_MAX_STEPS} steps"
    )))
}
