#![allow(dead_code)]

use photomac_core::resonator::{calibrate_dispersion, plan_wavelengths, TABLE_I_CASES};
use photomac_core::{AccelConfig, MvmEngine, QuantizedMatrix};

pub fn engine(d: usize) -> MvmEngine {
    engine_with(AccelConfig::with_d(d))
}

pub fn engine_with(cfg: AccelConfig) -> MvmEngine {
    let disp = calibrate_dispersion(&TABLE_I_CASES[0].2).unwrap();
    let plan = plan_wavelengths(cfg.d, cfg.lambda_max_nm, cfg.spacing_nm, &disp).unwrap();
    MvmEngine::new(&cfg, &plan).unwrap()
}

/// Every matrix of the given shape and width, in counting order.
pub fn all_matrices(bits: u32, rows: usize, cols: usize) -> Vec<QuantizedMatrix> {
    let base = 1u64 << bits;
    let count = base.pow((rows * cols) as u32);
    (0..count)
        .map(|mut k| {
            let codes = (0..rows * cols)
                .map(|_| {
                    let c = (k % base) as u32;
                    k /= base;
                    c
                })
                .collect();
            QuantizedMatrix::new(bits, rows, cols, codes).unwrap()
        })
        .collect()
}

/// Independent integer product, plain `i128` loops.
pub fn int_mul(a: &[i128], ar: usize, ac: usize, b: &[i128], bc: usize) -> Vec<i128> {
    let mut out = vec![0i128; ar * bc];
    for i in 0..ar {
        for k in 0..ac {
            for j in 0..bc {
                out[i * bc + j] += a[i * ac + k] * b[k * bc + j];
            }
        }
    }
    out
}

pub fn as_i128(m: &QuantizedMatrix) -> Vec<i128> {
    m.codes().iter().map(|&c| i128::from(c)).collect()
}

pub fn transpose_i128(a: &[i128], r: usize, c: usize) -> Vec<i128> {
    (0..c).flat_map(|j| (0..r).map(move |i| a[i * c + j])).collect()
}

/// `round(num/den)` with ties up, through rationals rather than the crate's helper.
pub fn rational_round(num: i128, den: i128) -> i128 {
    use num_rational::Ratio;
    let r = Ratio::new(num, den) + Ratio::new(1, 2);
    r.floor().to_integer()
}
