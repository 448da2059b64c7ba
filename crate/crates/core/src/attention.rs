//! One attention head, and multi-head composition, on three backends.
//!
//! Real values of a B-bit code `c` are `c/N` with `N = 2^B − 1`. The head is
//! evaluated as
//!
//! ```text
//! C = X·W_C·Xᵀ          W_C = W_Q·W_Kᵀ collapsed offline
//! A = C >> m            scaling by 2^−m with a shift
//! S = softmax(A)        row-wise, table lookups for exp and log
//! O = S·X·W_V
//! ```
//!
//! The two triple products run as double matrix products. The exact backend
//! does the same algebra in `f64` with no quantization; the oracle backend
//! uses the integer double-product reference; the simulated backend drives
//! the optical engine and, in exact mode, matches the oracle bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmm::{dmmm_oracle, dmmm_simulate, mmm, mmm_oracle, MmmStrategy};
use crate::mvm::{MvmEngine, NoiseMode, SimFlags};
use crate::quant::{max_code, round_ratio_half_up, QuantizedMatrix};

/// `W_Q·W_Kᵀ` requantized onto B-bit codes. The integer product is
/// approximately `codes · scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collapsed {
    pub w_c: QuantizedMatrix,
    /// Integer product units per code.
    pub scale: f64,
    /// The unrounded integer product, row-major.
    pub exact: Vec<u64>,
}

/// Collapse the query and key projections, rounding half up against the
/// largest product entry.
pub fn collapse_qk(w_q: &QuantizedMatrix, w_k: &QuantizedMatrix) -> Result<Collapsed> {
    if !w_q.is_square() || w_q.rows() != w_k.rows() || w_q.cols() != w_k.cols() || w_q.bits() != w_k.bits() {
        return Err(Error::shape("W_Q and W_K must be square with the same shape and width"));
    }
    let d = w_q.rows();
    let bits = w_q.bits();
    let n = u64::from(max_code(bits));
    let exact: Vec<u64> = (0..d)
        .flat_map(|r| (0..d).map(move |c| (r, c)))
        .map(|(r, c)| {
            w_q.row(r)
                .iter()
                .zip(w_k.row(c))
                .map(|(&a, &b)| u64::from(a) * u64::from(b))
                .sum()
        })
        .collect();
    let top = exact.iter().copied().max().unwrap_or(0);
    if top == 0 {
        return Ok(Collapsed {
            w_c: QuantizedMatrix::new(bits, d, d, vec![0; d * d])?,
            scale: 1.0,
            exact,
        });
    }
    let codes = exact
        .iter()
        .map(|&v| round_ratio_half_up(u128::from(v) * u128::from(n), u128::from(top)) as u32)
        .collect();
    Ok(Collapsed {
        w_c: QuantizedMatrix::new(bits, d, d, codes)?,
        scale: top as f64 / n as f64,
        exact,
    })
}

/// Arithmetic right shift: `floor(c / 2^m)`.
pub fn scale_scores(c: &[i64], m: u32) -> Vec<i64> {
    c.iter().map(|&v| if m >= 64 { if v < 0 { -1 } else { 0 } } else { v >> m }).collect()
}

/// Table-driven softmax with max subtraction.
///
/// `exp` is tabulated on `(−range, 0]` and read at the nearest grid point,
/// returning 0 below the table. `ln` is tabulated on the mantissa `[1, 2)`
/// and extended to any positive sum through the binary exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLut {
    pub exp_step: f64,
    pub exp_table: Vec<f64>,
    pub log_table: Vec<f64>,
}

impl Default for SoftmaxLut {
    fn default() -> Self {
        Self::new(1024, 8.0, 256).expect("default table sizes are valid")
    }
}

impl SoftmaxLut {
    pub fn new(exp_entries: usize, range: f64, log_entries: usize) -> Result<Self> {
        if exp_entries < 2 || log_entries < 1 || !(range > 0.0) {
            return Err(Error::invalid("softmax tables need entries and a positive range"));
        }
        let step = range / exp_entries as f64;
        Ok(Self {
            exp_step: step,
            exp_table: (0..exp_entries).map(|t| (-(t as f64) * step).exp()).collect(),
            log_table: (0..log_entries)
                .map(|t| (1.0 + t as f64 / log_entries as f64).ln())
                .collect(),
        })
    }

    pub fn range(&self) -> f64 {
        self.exp_step * self.exp_table.len() as f64
    }

    #[inline]
    pub fn exp(&self, x: f64) -> f64 {
        let idx = (-x / self.exp_step).round();
        if idx < 0.0 {
            return self.exp_table[0];
        }
        let idx = idx as usize;
        self.exp_table.get(idx).copied().unwrap_or(0.0)
    }

    /// Table `ln` of `s ≥ 1`.
    #[inline]
    pub fn ln(&self, s: f64) -> f64 {
        let entries = self.log_table.len();
        let mut e = s.log2().floor();
        let mut f = s / e.exp2();
        if f >= 2.0 {
            e += 1.0;
            f /= 2.0;
        } else if f < 1.0 {
            e -= 1.0;
            f *= 2.0;
        }
        let mut idx = ((f - 1.0) * entries as f64).round() as usize;
        if idx == entries {
            idx = 0;
            e += 1.0;
        }
        e * std::f64::consts::LN_2 + self.log_table[idx]
    }

    /// Worst-case error in the exponent of any output, for rows of length `k`:
    /// two exp lookups, one ln lookup and the mass dropped below the table.
    pub fn exponent_error(&self, k: usize) -> f64 {
        let ln_half_step = 0.5 / self.log_table.len() as f64;
        self.exp_step + ln_half_step + k.saturating_sub(1) as f64 * (-self.range()).exp()
    }

    /// Bound on `|lut − exact|` for any single probability in a row of `k`.
    pub fn error_bound(&self, k: usize) -> f64 {
        self.exponent_error(k).exp_m1()
    }

    /// Bound on `|Σ lut − 1|` for a row of `k`.
    pub fn row_sum_bound(&self, k: usize) -> f64 {
        self.exponent_error(k).exp_m1() + k as f64 * (-self.range()).exp()
    }
}

pub fn softmax_lut(row: &[f64], lut: &SoftmaxLut) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(Error::invalid("softmax of an empty row"));
    }
    let a_max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&a| lut.exp(a - a_max)).sum();
    let log_sum = lut.ln(sum);
    Ok(row.iter().map(|&a| lut.exp(a - a_max - log_sum)).collect())
}

pub fn softmax_exact(row: &[f64]) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(Error::invalid("softmax of an empty row"));
    }
    let a_max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|&a| (a - a_max).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Projections of one head. The score scaling is a right shift by `shift`,
/// i.e. a factor `2^−shift`, which equals `1/√d_k` when `d_k = 4^shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub w_q: QuantizedMatrix,
    pub w_k: QuantizedMatrix,
    pub w_v: QuantizedMatrix,
    pub collapsed: Collapsed,
    pub shift: u32,
}

impl AttentionWeights {
    pub fn new(w_q: QuantizedMatrix, w_k: QuantizedMatrix, w_v: QuantizedMatrix, shift: u32) -> Result<Self> {
        let collapsed = collapse_qk(&w_q, &w_k)?;
        if w_v.rows() != w_q.rows() || !w_v.is_square() || w_v.bits() != w_q.bits() {
            return Err(Error::shape("W_V must match W_Q"));
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            collapsed,
            shift,
        })
    }

    pub fn d(&self) -> usize {
        self.w_q.rows()
    }

    pub fn bits(&self) -> u32 {
        self.w_q.bits()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    /// Unquantized `f64` reference, exact softmax.
    Exact,
    /// Integer double-product reference with table softmax.
    Oracle,
    /// The optical engine.
    Simulated { engine: &'a MvmEngine, flags: SimFlags },
}

/// Intermediate and final values of one head, all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput {
    pub n: usize,
    pub d: usize,
    /// Scaled scores `A`, `n×n`.
    pub scores: Vec<f64>,
    /// Softmax probabilities `S`, `n×n`.
    pub probs: Vec<f64>,
    /// Attention output, `n×d`.
    pub output: Vec<f64>,
    /// Output codes of the second double product, when quantized.
    pub output_codes: Option<QuantizedMatrix>,
    /// Per-row scale used to quantize `S`, when quantized.
    pub prob_scales: Option<Vec<f64>>,
}

fn to_real(m: &QuantizedMatrix) -> Vec<f64> {
    let n = f64::from(max_code(m.bits()));
    m.codes().iter().map(|&c| f64::from(c) / n).collect()
}

fn dense_mul(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize) -> Vec<f64> {
    let mut out = vec![0.0; ar * bc];
    for i in 0..ar {
        for k in 0..ac {
            let v = a[i * ac + k];
            if v == 0.0 {
                continue;
            }
            for j in 0..bc {
                out[i * bc + j] += v * b[k * bc + j];
            }
        }
    }
    out
}

fn dense_transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    (0..c).flat_map(|j| (0..r).map(move |i| a[i * c + j])).collect()
}

fn salted(flags: &SimFlags, salt: u64) -> SimFlags {
    let mut f = *flags;
    if let NoiseMode::Gaussian { seed } = f.noise {
        f.noise = NoiseMode::Gaussian {
            seed: seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        };
    }
    f
}

/// Quantize each probability row against its own maximum.
fn quantize_probs(probs: &[f64], n: usize, bits: u32) -> Result<(QuantizedMatrix, Vec<f64>)> {
    let top = f64::from(max_code(bits));
    let mut scales = Vec::with_capacity(n);
    let mut codes = Vec::with_capacity(n * n);
    for row in probs.chunks(n) {
        let r = row.iter().copied().fold(0.0, f64::max);
        let r = if r > 0.0 { r } else { 1.0 };
        scales.push(r);
        codes.extend(row.iter().map(|&p| (p / r * top + 0.5).floor().clamp(0.0, top) as u32));
    }
    Ok((QuantizedMatrix::new(bits, n, n, codes)?, scales))
}

fn check_head_input(x: &QuantizedMatrix, w: &AttentionWeights) -> Result<()> {
    if x.cols() != w.d() || x.bits() != w.bits() {
        return Err(Error::shape(format!(
            "input is {}x{} at {} bits, head expects width {} at {} bits",
            x.rows(),
            x.cols(),
            x.bits(),
            w.d(),
            w.bits()
        )));
    }
    Ok(())
}

pub fn attention_head(x: &QuantizedMatrix, w: &AttentionWeights, backend: Backend<'_>, lut: &SoftmaxLut) -> Result<HeadOutput> {
    check_head_input(x, w)?;
    let (n, d) = (x.rows(), w.d());
    let bits = w.bits();
    let top = f64::from(max_code(bits));

    if let Backend::Exact = backend {
        let xr = to_real(x);
        let nn = top * top;
        let wc: Vec<f64> = w.collapsed.exact.iter().map(|&v| v as f64 / nn).collect();
        let xwc = dense_mul(&xr, n, d, &wc, d);
        let c = dense_mul(&xwc, n, d, &dense_transpose(&xr, n, d), n);
        let factor = (-(w.shift as f64)).exp2();
        let scores: Vec<f64> = c.iter().map(|v| v * factor).collect();
        let mut probs = Vec::with_capacity(n * n);
        for row in scores.chunks(n) {
            probs.extend(softmax_exact(row)?);
        }
        let xv = dense_mul(&xr, n, d, &to_real(&w.w_v), d);
        let output = dense_mul(&probs, n, n, &xv, d);
        return Ok(HeadOutput {
            n,
            d,
            scores,
            probs,
            output,
            output_codes: None,
            prob_scales: None,
        });
    }

    let xt = x.transpose();
    let c_codes = match backend {
        Backend::Simulated { engine, flags } => {
            dmmm_simulate(engine, x, &w.collapsed.w_c, &xt, MmmStrategy::Parallel, &salted(&flags, 1))?.codes
        }
        _ => dmmm_oracle(x, &w.collapsed.w_c, &xt)?,
    };
    // One score code is worth d²·scale/N² in real units.
    let score_lsb = (d * d) as f64 * w.collapsed.scale / (top * top);
    let shifted = scale_scores(&c_codes.codes().iter().map(|&c| i64::from(c)).collect::<Vec<_>>(), w.shift);
    let scores: Vec<f64> = shifted.iter().map(|&c| c as f64 * score_lsb).collect();
    let mut probs = Vec::with_capacity(n * n);
    for row in scores.chunks(n) {
        probs.extend(softmax_lut(row, lut)?);
    }
    let (s_codes, scales) = quantize_probs(&probs, n, bits)?;
    let o_codes = match backend {
        Backend::Simulated { engine, flags } => {
            dmmm_simulate(engine, &s_codes, x, &w.w_v, MmmStrategy::Parallel, &salted(&flags, 2))?.codes
        }
        _ => dmmm_oracle(&s_codes, x, &w.w_v)?,
    };
    // One output code is worth n·d·r_i/N.
    let output = (0..n)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| f64::from(o_codes.get(i, j)) * (n * d) as f64 * scales[i] / top)
        .collect();
    Ok(HeadOutput {
        n,
        d,
        scores,
        probs,
        output,
        output_codes: Some(o_codes),
        prob_scales: Some(scales),
    })
}

/// Dense `softmax((X·W_Q)(X·W_K)ᵀ·2^−m)·(X·W_V)` without the collapse.
pub fn attention_reference(x: &QuantizedMatrix, w: &AttentionWeights) -> Result<Vec<f64>> {
    check_head_input(x, w)?;
    let (n, d) = (x.rows(), w.d());
    let xr = to_real(x);
    let q = dense_mul(&xr, n, d, &to_real(&w.w_q), d);
    let k = dense_mul(&xr, n, d, &to_real(&w.w_k), d);
    let v = dense_mul(&xr, n, d, &to_real(&w.w_v), d);
    let factor = (-(w.shift as f64)).exp2();
    let s: Vec<f64> = dense_mul(&q, n, d, &dense_transpose(&k, n, d), n)
        .into_iter()
        .map(|x| x * factor)
        .collect();
    let mut p = Vec::with_capacity(n * n);
    for row in s.chunks(n) {
        p.extend(softmax_exact(row)?);
    }
    Ok(dense_mul(&p, n, n, &v, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiheadOutput {
    pub heads: Vec<HeadOutput>,
    /// `n × d_out`, row-major.
    pub output: Vec<f64>,
    pub d_out: usize,
}

/// `Concat(head_1 … head_h)·W_O`, with `W_O` of shape `(h·d) × d_out`.
///
/// Quantized backends push each head's `d` rows of `W_O` through a matrix
/// product on its own (head outputs quantized against their own maximum)
/// and add the partial products digitally.
pub fn multihead(
    x: &QuantizedMatrix,
    heads: &[AttentionWeights],
    w_o: &QuantizedMatrix,
    backend: Backend<'_>,
    lut: &SoftmaxLut,
) -> Result<MultiheadOutput> {
    let first = heads.first().ok_or_else(|| Error::shape("no heads"))?;
    let d = first.d();
    if heads.iter().any(|h| h.d() != d || h.bits() != first.bits()) {
        return Err(Error::shape("heads differ in width"));
    }
    if w_o.rows() != heads.len() * d || w_o.bits() != first.bits() {
        return Err(Error::shape(format!(
            "W_O is {}x{}, expected {} rows",
            w_o.rows(),
            w_o.cols(),
            heads.len() * d
        )));
    }
    let n = x.rows();
    let d_out = w_o.cols();
    let bits = first.bits();
    let top = f64::from(max_code(bits));

    let outs: Vec<HeadOutput> = heads
        .iter()
        .enumerate()
        .map(|(h, w)| {
            let b = match backend {
                Backend::Simulated { engine, flags } => Backend::Simulated {
                    engine,
                    flags: salted(&flags, 16 + h as u64),
                },
                other => other,
            };
            attention_head(x, w, b, lut)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![0.0; n * d_out];
    if let Backend::Exact = backend {
        let wo = to_real(w_o);
        for (h, out) in outs.iter().enumerate() {
            let block = &wo[h * d * d_out..(h + 1) * d * d_out];
            for (acc, v) in total.iter_mut().zip(dense_mul(&out.output, n, d, block, d_out)) {
                *acc += v;
            }
        }
    } else {
        if d_out != d {
            return Err(Error::shape("quantized backends need a square W_O block per head"));
        }
        for (h, out) in outs.iter().enumerate() {
            let peak = out.output.iter().copied().fold(0.0, f64::max);
            let s_h = if peak > 0.0 { peak } else { 1.0 };
            // Z = head outputᵀ (d×n) on the comb, Y = W_O blockᵀ (d×d).
            let z = QuantizedMatrix::from_fn(bits, d, n, |r, c| {
                (out.output[c * d + r] / s_h * top + 0.5).floor().clamp(0.0, top) as u32
            })?;
            let y = QuantizedMatrix::from_fn(bits, d, d, |r, c| w_o.get(h * d + c, r))?;
            let prod = match backend {
                Backend::Simulated { engine, flags } => {
                    mmm(engine, &y, &z, MmmStrategy::Parallel, &salted(&flags, 64 + h as u64))?.codes
                }
                _ => mmm_oracle(&y, &z)?,
            };
            // One code is worth d·s_h/N; the product comes out transposed.
            for i in 0..n {
                for j in 0..d {
                    total[i * d + j] += f64::from(prod.get(j, i)) * d as f64 * s_h / top;
                }
            }
        }
    }
    Ok(MultiheadOutput {
        heads: outs,
        output: total,
        d_out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub max_abs: f64,
    pub rms: f64,
}

impl StageError {
    pub fn between(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::shape(format!("{} values against {}", a.len(), b.len())));
        }
        if a.is_empty() {
            return Ok(Self { max_abs: 0.0, rms: 0.0 });
        }
        let mut max: f64 = 0.0;
        let mut sq = 0.0;
        for (x, y) in a.iter().zip(b) {
            let e = (x - y).abs();
            max = max.max(e);
            sq += e * e;
        }
        Ok(Self {
            max_abs: max,
            rms: (sq / a.len() as f64).sqrt(),
        })
    }
}

/// Error of a head against a reference, split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub scores: StageError,
    pub softmax: StageError,
    pub output: StageError,
}

pub fn fidelity_report(reference: &HeadOutput, other: &HeadOutput) -> Result<FidelityReport> {
    if reference.n != other.n || reference.d != other.d {
        return Err(Error::shape("heads differ in shape"));
    }
    Ok(FidelityReport {
        scores: StageError::between(&reference.scores, &other.scores)?,
        softmax: StageError::between(&reference.probs, &other.probs)?,
        output: StageError::between(&reference.output, &other.output)?,
    })
}
