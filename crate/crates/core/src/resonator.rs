//! Wavelength-comb and resonator geometry solver.
//!
//! One racetrack photodetector has to resonate at every comb line at once, so
//! its perimeter fixes the whole grid: consecutive mode integers of the common
//! cavity pick out the `d` wavelengths, and the local FSR of that cavity is the
//! channel spacing. Each micro-ring modulator is then sized so that its own FSR
//! clears the full comb and exactly one line sits inside a free spectral range.
//!
//! Lengths: wavelengths and spacings in nm, geometry in µm.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NM_PER_UM: f64 = 1000.0;
const FIXED_POINT_TOL_NM: f64 = 1e-6;
const FIXED_POINT_MAX_STEPS: usize = 100;

/// Affine effective-index model `n_eff(λ) = a0 + a1·λ` (λ in nm).
///
/// The group index `n_eff − λ·dn_eff/dλ` of an affine model is the constant
/// `a0`, which is how the fit pins it to the measured group-index column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    pub a0: f64,
    /// Slope in 1/nm. Negative for any physical waveguide.
    pub a1: f64,
    /// Wavelength band (nm) the model was calibrated over.
    pub band_nm: (f64, f64),
}

/// One calibration sample of the dispersion fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub lambda_nm: f64,
    pub n_eff: f64,
    pub n_g: f64,
}

impl DispersionSample {
    pub const fn new(lambda_nm: f64, n_eff: f64, n_g: f64) -> Self {
        Self {
            lambda_nm,
            n_eff,
            n_g,
        }
    }
}

impl DispersionModel {
    pub fn new(a0: f64, a1: f64, band_nm: (f64, f64)) -> Result<Self> {
        if !(a1 < 0.0) {
            return Err(Error::solver(format!(
                "dispersion slope {a1} /nm gives n_g <= n_eff"
            )));
        }
        if !(band_nm.0 < band_nm.1) {
            return Err(Error::invalid("empty dispersion band"));
        }
        Ok(Self { a0, a1, band_nm })
    }

    /// Non-dispersive index (n_g = n_eff = n) over an unbounded band.
    ///
    /// Only useful to exercise the geometry equations in isolation.
    pub fn constant(n: f64) -> Self {
        Self {
            a0: n,
            a1: 0.0,
            band_nm: (0.0, f64::INFINITY),
        }
    }

    #[inline]
    pub fn n_eff(&self, lambda_nm: f64) -> f64 {
        self.a0 + self.a1 * lambda_nm
    }

    #[inline]
    pub fn n_g(&self, lambda_nm: f64) -> f64 {
        self.n_eff(lambda_nm) - lambda_nm * self.a1
    }

    #[inline]
    pub fn dn_eff_dlambda(&self) -> f64 {
        self.a1
    }

    fn contains(&self, lambda_nm: f64, slack_nm: f64) -> bool {
        lambda_nm >= self.band_nm.0 - slack_nm && lambda_nm <= self.band_nm.1 + slack_nm
    }
}

/// Fit an affine dispersion model to tabulated index samples.
///
/// The group index is matched exactly in the mean (`a0 = mean n_g`) and the
/// slope is the least-squares fit of the effective-index column given that
/// intercept.
pub fn calibrate_dispersion(samples: &[DispersionSample]) -> Result<DispersionModel> {
    if samples.len() < 2 {
        return Err(Error::solver("dispersion fit needs at least two samples"));
    }
    let lo = samples.iter().map(|s| s.lambda_nm).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.lambda_nm)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(Error::solver("dispersion samples need distinct wavelengths"));
    }
    let count = samples.len() as f64;
    let a0 = samples.iter().map(|s| s.n_g).sum::<f64>() / count;
    let num: f64 = samples.iter().map(|s| s.lambda_nm * (s.n_eff - a0)).sum();
    let den: f64 = samples.iter().map(|s| s.lambda_nm * s.lambda_nm).sum();
    DispersionModel::new(a0, num / den, (lo, hi))
}

/// A solved comb grid. Index 0 is the shortest wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthPlan {
    pub d: usize,
    #[serde(rename = "lambdas_nm")]
    pub lambdas: Vec<f64>,
    #[serde(rename = "spacings_nm")]
    pub spacings: Vec<f64>,
    #[serde(rename = "modes")]
    pub rtr_modes: Vec<u32>,
    #[serde(rename = "perimeter_um")]
    pub rtr_perimeter_um: f64,
}

impl WavelengthPlan {
    /// Sum of the channel spacings, the band every modulator FSR must clear.
    pub fn total_band_nm(&self) -> f64 {
        self.spacings.iter().sum()
    }

    pub fn perimeter_nm(&self) -> f64 {
        self.rtr_perimeter_um * NM_PER_UM
    }

    /// Resonance residual `|λ − n_eff(λ)·L/m|` of every line.
    pub fn resonance_residuals(&self, disp: &DispersionModel) -> Vec<f64> {
        let l = self.perimeter_nm();
        self.lambdas
            .iter()
            .zip(&self.rtr_modes)
            .map(|(&lam, &m)| (lam - disp.n_eff(lam) * l / f64::from(m)).abs())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 || self.lambdas.len() != d || self.spacings.len() != d || self.rtr_modes.len() != d {
            return Err(Error::shape("wavelength plan fields disagree with d"));
        }
        if self.lambdas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("plan wavelengths must be strictly increasing"));
        }
        if self.rtr_modes.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("plan modes must be strictly decreasing"));
        }
        Ok(())
    }
}

/// Local FSR of a cavity of length `perimeter_nm`: `λ²/(n_g·L)`.
pub fn cavity_fsr_nm(lambda_nm: f64, perimeter_nm: f64, disp: &DispersionModel) -> f64 {
    lambda_nm * lambda_nm / (disp.n_g(lambda_nm) * perimeter_nm)
}

fn solve_resonance(mode: u32, perimeter_nm: f64, start_nm: f64, disp: &DispersionModel) -> Result<f64> {
    let m = f64::from(mode);
    let mut lambda = start_nm;
    for _ in 0..FIXED_POINT_MAX_STEPS {
        let next = disp.n_eff(lambda) * perimeter_nm / m;
        let step = (next - lambda).abs();
        lambda = next;
        if step < FIXED_POINT_TOL_NM {
            return Ok(lambda);
        }
    }
    Err(Error::solver(format!(
        "resonance of mode {mode} did not converge in {FIXED_POINT_MAX_STEPS} steps"
    )))
}

/// Solve the comb grid for `d` lines ending at `lambda_max_nm`.
///
/// The cavity length is first sized so that the local FSR at the band center
/// equals `spacing_nm`, which makes the `d − 1` intervals span
/// `(d − 1)·spacing_nm` on average. The mode at `lambda_max_nm` is then rounded
/// to an integer and the perimeter snapped so that this anchor line sits
/// exactly on `lambda_max_nm`. The remaining lines follow from consecutive
/// higher mode integers by fixed-point iteration of `λ = n_eff(λ)·L/m`.
pub fn plan_wavelengths(
    d: usize,
    lambda_max_nm: f64,
    spacing_nm: f64,
    disp: &DispersionModel,
) -> Result<WavelengthPlan> {
    if d == 0 {
        return Err(Error::invalid("need at least one wavelength"));
    }
    if !(lambda_max_nm > 0.0 && spacing_nm > 0.0) {
        return Err(Error::invalid("wavelength and spacing must be positive"));
    }
    let span = (d - 1) as f64 * spacing_nm;
    let slack = spacing_nm / 2.0;
    if !disp.contains(lambda_max_nm, slack) || !disp.contains(lambda_max_nm - span, slack) {
        return Err(Error::solver(format!(
            "grid {:.3}..{lambda_max_nm:.3} nm leaves the dispersion band {:.3}..{:.3} nm",
            lambda_max_nm - span,
            disp.band_nm.0,
            disp.band_nm.1
        )));
    }

    let center = lambda_max_nm - span / 2.0;
    let first_guess = center * center / (disp.n_g(center) * spacing_nm);
    let anchor = (disp.n_eff(lambda_max_nm) * first_guess / lambda_max_nm).round();
    if anchor < 1.0 || anchor + (d as f64) > f64::from(u32::MAX) {
        return Err(Error::solver("anchor mode out of range"));
    }
    let anchor = anchor as u32;
    let perimeter = f64::from(anchor) * lambda_max_nm / disp.n_eff(lambda_max_nm);

    let mut lambdas = Vec::with_capacity(d);
    let mut modes = Vec::with_capacity(d);
    let mut guess = lambda_max_nm;
    for i in 0..d as u32 {
        let mode = anchor + i;
        let lambda = solve_resonance(mode, perimeter, guess, disp)?;
        if !disp.contains(lambda, slack) {
            return Err(Error::solver(format!(
                "mode {mode} resonates at {lambda:.4} nm outside the dispersion band"
            )));
        }
        lambdas.push(lambda);
        modes.push(mode);
        guess = lambda - spacing_nm;
    }
    lambdas.reverse();
    modes.reverse();

    let spacings = lambdas
        .iter()
        .map(|&l| cavity_fsr_nm(l, perimeter, disp))
        .collect();
    let plan = WavelengthPlan {
        d,
        lambdas,
        spacings,
        rtr_modes: modes,
        rtr_perimeter_um: perimeter / NM_PER_UM,
    };
    plan.validate()
        .map_err(|e| Error::solver(format!("grid solve produced an inconsistent plan: {e}")))?;
    Ok(plan)
}

/// Micro-ring geometry for one comb line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrmGeometry {
    pub radius_um: f64,
    pub mode: u32,
    pub resonance_nm: f64,
    pub fsr_nm: f64,
}

/// Largest ring resonating at `lambda_nm` whose FSR is at least `fsr_budget_nm`.
pub fn ring_for_fsr_budget(lambda_nm: f64, fsr_budget_nm: f64, disp: &DispersionModel) -> Result<MrmGeometry> {
    if !(fsr_budget_nm > 0.0) {
        return Err(Error::invalid("FSR budget must be positive"));
    }
    let n_eff = disp.n_eff(lambda_nm);
    let n_g = disp.n_g(lambda_nm);
    let radius_bound = lambda_nm * lambda_nm / (n_g * 2.0 * PI * fsr_budget_nm);
    let fsr_of = |mode: f64| {
        let radius = lambda_nm * mode / (2.0 * PI * n_eff);
        lambda_nm * lambda_nm / (n_g * 2.0 * PI * radius)
    };
    let mut mode = (2.0 * PI * n_eff * radius_bound / lambda_nm).floor();
    // Rounding can land the floor on a mode that misses the budget by an ulp.
    if mode >= 1.0 && fsr_of(mode) < fsr_budget_nm {
        mode -= 1.0;
    }
    if mode < 1.0 {
        return Err(Error::solver(format!(
            "no ring mode at {lambda_nm} nm clears an FSR of {fsr_budget_nm} nm"
        )));
    }
    let radius = lambda_nm * mode / (2.0 * PI * n_eff);
    Ok(MrmGeometry {
        radius_um: radius / NM_PER_UM,
        mode: mode as u32,
        resonance_nm: lambda_nm,
        fsr_nm: fsr_of(mode),
    })
}

/// Size the micro-ring modulator for a line of `plan`.
///
/// Takes the largest mode integer whose ring still clears the plan's total
/// band, which yields the largest admissible radius.
pub fn solve_mrm_radius(lambda_nm: f64, plan: &WavelengthPlan, disp: &DispersionModel) -> Result<MrmGeometry> {
    let tol = 1e-9 * lambda_nm;
    if !plan.lambdas.iter().any(|&l| (l - lambda_nm).abs() <= tol) {
        return Err(Error::invalid(format!("{lambda_nm} nm is not a line of the plan")));
    }
    ring_for_fsr_budget(lambda_nm, plan.total_band_nm(), disp)
}

/// Rings for every line of a plan, shortest wavelength first.
pub fn design_rings(plan: &WavelengthPlan, disp: &DispersionModel) -> Result<Vec<MrmGeometry>> {
    plan.lambdas
        .iter()
        .map(|&l| ring_for_fsr_budget(l, plan.total_band_nm(), disp))
        .collect()
}

/// Racetrack outline: two half circles joined by straight sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtrGeometry {
    pub bend_radius_um: f64,
    pub straight_length_um: f64,
    pub perimeter_um: f64,
}

pub fn rtr_geometry(perimeter_um: f64, bend_radius_um: f64) -> Result<RtrGeometry> {
    if !(bend_radius_um > 0.0) {
        return Err(Error::invalid("bend radius must be positive"));
    }
    let straight = (perimeter_um - 2.0 * PI * bend_radius_um) / 2.0;
    if !(straight > 0.0) {
        return Err(Error::invalid(format!(
            "perimeter {perimeter_um} µm leaves no straight section at bend radius {bend_radius_um} µm"
        )));
    }
    Ok(RtrGeometry {
        bend_radius_um,
        straight_length_um: straight,
        perimeter_um,
    })
}

/// Index samples of the three reference design cases, keyed by
/// `(d, spacing_nm)`; each covers its own band.
pub const TABLE_I_CASES: [(usize, f64, [DispersionSample; 2]); 3] = [
    (
        32,
        0.5,
        [
            DispersionSample::new(1534.5, 3.74, 5.02),
            DispersionSample::new(1550.0, 3.73, 4.98),
        ],
    ),
    (
        32,
        1.0,
        [
            DispersionSample::new(1519.0, 3.76, 5.06),
            DispersionSample::new(1550.0, 3.73, 4.98),
        ],
    ),
    (
        16,
        1.0,
        [
            DispersionSample::new(1535.0, 3.74, 5.02),
            DispersionSample::new(1550.0, 3.73, 4.98),
        ],
    ),
];

/// One design case summarized as ranges, shaped like a row of the design table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub d: usize,
    pub n_eff_min: f64,
    pub n_eff_max: f64,
    pub n_g_min: f64,
    pub n_g_max: f64,
    pub rtr_mode_max: u32,
    pub rtr_mode_min: u32,
    pub rtr_perimeter_um: f64,
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub spacing_min_nm: f64,
    pub spacing_max_nm: f64,
    pub ring_mode_min: u32,
    pub ring_mode_max: u32,
    pub ring_radius_min_um: f64,
    pub ring_radius_max_um: f64,
    pub rtr_straight_um: Option<f64>,
}

/// Full design pass: comb grid, ring radii and racetrack outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub dispersion: DispersionModel,
    pub plan: WavelengthPlan,
    pub rings: Vec<MrmGeometry>,
    pub racetrack: Option<RtrGeometry>,
}

impl Design {
    pub fn solve(
        d: usize,
        lambda_max_nm: f64,
        spacing_nm: f64,
        dispersion: DispersionModel,
        rtr_bend_radius_um: f64,
    ) -> Result<Self> {
        let plan = plan_wavelengths(d, lambda_max_nm, spacing_nm, &dispersion)?;
        let rings = design_rings(&plan, &dispersion)?;
        let racetrack = rtr_geometry(plan.rtr_perimeter_um, rtr_bend_radius_um).ok();
        Ok(Self {
            dispersion,
            plan,
            rings,
            racetrack,
        })
    }

    pub fn summary(&self) -> DesignRow {
        fn range<T: Copy + PartialOrd>(it: impl Iterator<Item = T>) -> (T, T) {
            let mut it = it.peekable();
            let first = *it.peek().expect("nonempty");
            it.fold((first, first), |(lo, hi), x| {
                (if x < lo { x } else { lo }, if x > hi { x } else { hi })
            })
        }
        let disp = &self.dispersion;
        let p = &self.plan;
        let (n_eff_min, n_eff_max) = range(p.lambdas.iter().map(|&l| disp.n_eff(l)));
        let (n_g_min, n_g_max) = range(p.lambdas.iter().map(|&l| disp.n_g(l)));
        let (spacing_min_nm, spacing_max_nm) = range(p.spacings.iter().copied());
        let (ring_mode_min, ring_mode_max) = range(self.rings.iter().map(|r| r.mode));
        let (ring_radius_min_um, ring_radius_max_um) = range(self.rings.iter().map(|r| r.radius_um));
        DesignRow {
            d: p.d,
            n_eff_min,
            n_eff_max,
            n_g_min,
            n_g_max,
            rtr_mode_max: p.rtr_modes[0],
            rtr_mode_min: p.rtr_modes[p.d - 1],
            rtr_perimeter_um: p.rtr_perimeter_um,
            lambda_min_nm: p.lambdas[0],
            lambda_max_nm: p.lambdas[p.d - 1],
            spacing_min_nm,
            spacing_max_nm,
            ring_mode_min,
            ring_mode_max,
            ring_radius_min_um,
            ring_radius_max_um,
            rtr_straight_um: self.racetrack.map(|r| r.straight_length_um),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_model(i: usize) -> DispersionModel {
        calibrate_dispersion(&TABLE_I_CASES[i].2).unwrap()
    }

    #[test]
    fn fit_matches_group_index_within_one_percent() {
        for (_, _, samples) in TABLE_I_CASES {
            let m = calibrate_dispersion(&samples).unwrap();
            for s in samples {
                assert!((m.n_g(s.lambda_nm) / s.n_g - 1.0).abs() < 0.01);
                assert!((m.n_eff(s.lambda_nm) / s.n_eff - 1.0).abs() < 1e-3);
                assert!(m.n_g(s.lambda_nm) > m.n_eff(s.lambda_nm));
            }
        }
    }

    #[test]
    fn fit_rejects_bad_samples() {
        let one = [DispersionSample::new(1550.0, 3.73, 4.98)];
        assert!(calibrate_dispersion(&one).unwrap_err().is_solver());
        let flat = [
            DispersionSample::new(1530.0, 3.73, 3.73),
            DispersionSample::new(1550.0, 3.73, 3.73),
        ];
        assert!(calibrate_dispersion(&flat).unwrap_err().is_solver());
        let same = [
            DispersionSample::new(1550.0, 3.73, 4.98),
            DispersionSample::new(1550.0, 3.74, 5.02),
        ];
        assert!(calibrate_dispersion(&same).is_err());
    }

    #[test]
    fn single_line_grid_is_degenerate() {
        let disp = row_model(0);
        let plan = plan_wavelengths(1, 1550.0, 0.5, &disp).unwrap();
        assert_eq!(plan.d, 1);
        assert_eq!(plan.lambdas, vec![1550.0]);
        assert_eq!(plan.rtr_modes.len(), 1);
    }

    #[test]
    fn closed_form_resonances_agree() {
        // An affine index has a closed-form solution λ = a0·L/(m − a1·L).
        let disp = row_model(0);
        let plan = plan_wavelengths(32, 1550.0, 0.5, &disp).unwrap();
        let l = plan.perimeter_nm();
        for (&lam, &m) in plan.lambdas.iter().zip(&plan.rtr_modes) {
            let exact = disp.a0 * l / (f64::from(m) - disp.a1 * l);
            assert!((lam - exact).abs() < 1e-6, "{lam} vs {exact}");
        }
    }

    #[test]
    fn grid_outside_band_is_rejected() {
        let disp = row_model(0);
        assert!(plan_wavelengths(32, 1550.0, 1.0, &disp).unwrap_err().is_solver());
        assert!(plan_wavelengths(0, 1550.0, 1.0, &disp).is_err());
    }

    #[test]
    fn racetrack_straight_sections() {
        let g = rtr_geometry(951.32, 5.0).unwrap();
        assert!((g.straight_length_um - 459.95).abs() < 0.005);
        let g = rtr_geometry(469.01, 5.0).unwrap();
        assert!((g.straight_length_um - (469.01 - 10.0 * PI) / 2.0).abs() < 1e-12);
        assert!((g.straight_length_um - 218.8).abs() < 0.05);
        assert!(rtr_geometry(2.0 * PI * 5.0, 5.0).is_err());
    }

    #[test]
    fn constant_index_ring_inverts_directly() {
        let disp = DispersionModel::constant(4.0);
        let ring = ring_for_fsr_budget(1550.0, 1.0, &disp).unwrap();
        let expect = 1550.0 * f64::from(ring.mode) / (8.0 * PI) / NM_PER_UM;
        assert!((ring.radius_um - expect).abs() < 1e-12);
        assert!(ring.fsr_nm >= 1.0);
    }

    #[test]
    fn ring_needs_a_positive_mode() {
        let disp = DispersionModel::constant(4.0);
        assert!(ring_for_fsr_budget(1550.0, 1e6, &disp).unwrap_err().is_solver());
    }

    #[test]
    fn ring_lookup_requires_plan_member() {
        let disp = row_model(0);
        let plan = plan_wavelengths(4, 1550.0, 0.5, &disp).unwrap();
        assert!(solve_mrm_radius(1549.3, &plan, &disp).is_err());
        assert!(solve_mrm_radius(plan.lambdas[2], &plan, &disp).is_ok());
    }
}
