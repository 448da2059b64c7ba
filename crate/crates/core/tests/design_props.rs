use photomac_core::resonator::{
    calibrate_dispersion, cavity_fsr_nm, design_rings, plan_wavelengths, Design, DispersionModel, TABLE_I_CASES,
};
use proptest::prelude::*;

fn case(i: usize) -> (usize, f64, DispersionModel) {
    let (d, spacing, samples) = TABLE_I_CASES[i];
    (d, spacing, calibrate_dispersion(&samples).unwrap())
}

#[test]
fn table_i_rows() {
    // Reference: L µm, highest and lowest mode, spacing range nm, ring radius range µm.
    let want = [
        (951.32, 2321, 2290, (0.49, 0.51), (4.63, 4.76)),
        (469.01, 1160, 1129, (0.97, 1.03), (2.25, 2.38)),
        (475.66, 1160, 1145, (0.99, 1.01), (4.63, 4.76)),
    ];
    for (i, (l, top, bottom, spacings, radii)) in want.into_iter().enumerate() {
        let (d, spacing, disp) = case(i);
        let row = Design::solve(d, 1550.0, spacing, disp, 5.0).unwrap().summary();
        assert!((row.rtr_perimeter_um / l - 1.0).abs() < 0.005, "row {i}: L = {}", row.rtr_perimeter_um);
        assert!(row.rtr_mode_max.abs_diff(top) <= 1, "row {i}: {}", row.rtr_mode_max);
        assert_eq!(row.rtr_mode_max - row.rtr_mode_min, top - bottom);
        assert!((row.lambda_max_nm - 1550.0).abs() < 0.1);
        let expect_min = 1550.0 - (d - 1) as f64 * spacing;
        assert!((row.lambda_min_nm - expect_min).abs() < 0.1, "row {i}: {}", row.lambda_min_nm);
        assert!(row.spacing_min_nm >= spacings.0 && row.spacing_max_nm <= spacings.1, "row {i}: {row:?}");
        assert!(row.ring_radius_min_um >= radii.0 * 0.99 && row.ring_radius_max_um <= radii.1 * 1.01);
    }
}

#[test]
fn halving_the_cavity_halves_the_modes() {
    let (d, s1, disp1) = case(0);
    let (_, s2, disp2) = case(1);
    let a = plan_wavelengths(d, 1550.0, s1, &disp1).unwrap();
    let b = plan_wavelengths(d, 1550.0, s2, &disp2).unwrap();
    let mode_ratio = f64::from(a.rtr_modes[d - 1]) / f64::from(b.rtr_modes[d - 1]);
    assert!((mode_ratio / 2.0 - 1.0).abs() < 0.02, "{mode_ratio}");
    let spacing_ratio = b.spacings[d - 1] / a.spacings[d - 1];
    assert!((spacing_ratio / 2.0 - 1.0).abs() < 0.02, "{spacing_ratio}");
}

#[test]
fn single_line_plan() {
    let (_, _, disp) = case(0);
    let p = plan_wavelengths(1, 1550.0, 0.5, &disp).unwrap();
    assert_eq!(p.lambdas.len(), 1);
    assert!((p.lambdas[0] - 1550.0).abs() < 1e-9);
}

fn plan_case() -> impl Strategy<Value = (usize, usize, f64, f64)> {
    (0usize..3, 0u32..6, 0.3f64..1.0, 0.0f64..1.0).prop_map(|(i, k, spacing, frac)| (i, 1usize << k, spacing, frac))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn plans_round_trip_and_space_consistently((i, d, spacing, frac) in plan_case()) {
        let (_, _, disp) = case(i);
        let (lo, hi) = disp.band_nm;
        let span = (d - 1) as f64 * spacing;
        prop_assume!(span < hi - lo);
        let lambda_max = lo + span + frac * (hi - lo - span);
        let plan = plan_wavelengths(d, lambda_max, spacing, &disp).unwrap();
        for r in plan.resonance_residuals(&disp) {
            prop_assert!(r < 1e-6, "residual {r}");
        }
        for (k, (&lam, &m)) in plan.lambdas.iter().zip(&plan.rtr_modes).enumerate() {
            // Closed form of the affine model.
            let l = plan.perimeter_nm();
            let closed = disp.a0 * l / (f64::from(m) - disp.a1 * l);
            prop_assert!((lam - closed).abs() < 1e-6);
            prop_assert!((plan.spacings[k] - cavity_fsr_nm(lam, l, &disp)).abs() < 1e-6);
        }
        prop_assert!(plan.lambdas.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(plan.rtr_modes.windows(2).all(|w| w[0] == w[1] + 1));
        prop_assert!((plan.lambdas[d - 1] - lambda_max).abs() < 1e-6);
    }

    #[test]
    fn rings_clear_the_whole_band((i, d, spacing, _frac) in plan_case()) {
        let (_, _, disp) = case(i);
        let (lo, hi) = disp.band_nm;
        prop_assume!((d - 1) as f64 * spacing < hi - lo);
        let plan = plan_wavelengths(d, hi, spacing, &disp).unwrap();
        let band = plan.total_band_nm();
        for ring in design_rings(&plan, &disp).unwrap() {
            prop_assert!(ring.fsr_nm >= band, "{} < {band}", ring.fsr_nm);
            // One mode more would break the budget.
            let bigger = ring.radius_um * f64::from(ring.mode + 1) / f64::from(ring.mode);
            let fsr = ring.resonance_nm * ring.resonance_nm / (disp.n_g(ring.resonance_nm) * 2.0 * std::f64::consts::PI * bigger * 1e3);
            prop_assert!(fsr < band * (1.0 + 1e-9));
        }
    }
}
