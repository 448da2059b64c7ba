//! Shared fixtures for the engine benchmarks.

use photomac_core::resonator::{calibrate_dispersion, plan_wavelengths, TABLE_I_CASES};
use photomac_core::{AccelConfig, MvmEngine, QuantizedMatrix, QuantizedVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Engine of width `d` on the first dispersion data set.
pub fn engine(d: usize) -> MvmEngine {
    let cfg = AccelConfig::with_d(d);
    let disp = calibrate_dispersion(&TABLE_I_CASES[0].2).expect("reference dispersion fits");
    let plan = plan_wavelengths(d, cfg.lambda_max_nm, cfg.spacing_nm, &disp).expect("reference grid fits");
    MvmEngine::new(&cfg, &plan).expect("reference engine builds")
}

/// Seeded random operands: a `d×d` matrix and a length-`d` vector.
pub fn operands(d: usize, seed: u64) -> (QuantizedMatrix, QuantizedVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (QuantizedMatrix::random(4, d, d, &mut rng), QuantizedVector::random(4, d, &mut rng))
}

/// Three seeded `n×n` matrices.
pub fn triple(n: usize, seed: u64) -> [QuantizedMatrix; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [(); 3].map(|_| QuantizedMatrix::random(4, n, n, &mut rng))
}
