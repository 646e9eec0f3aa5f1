use obbq::grid::{l2_norm, Grid, ScalarField, VectorField};
use obbq::heat::{compute_profiles, HeatProfiles, QuadratureConfig};
use obbq::initial_data::HomogeneousData;
use obbq::operators::{DriftScheme, OperatorSet};
use obbq::solver::{continue_to_one, ContinuationState, SolverConfig};
use obbq::verify::{check_scaling, reconstruct, reconstruct_on, residual_bss, time_law_constants, verify_state, weak_l3, BssOptions, VerifyConfig};
use obbq::Error;

fn profiles(d: &HomogeneousData<f64>, r: f64, n: usize) -> HeatProfiles<f64> {
    compute_profiles(d, &Grid::new(r, n).unwrap(), &QuadratureConfig::default()).unwrap()
}

fn solved(d: &HomogeneousData<f64>, r: f64, n: usize) -> (HeatProfiles<f64>, ContinuationState<f64>) {
    let p = profiles(d, r, n);
    let st = continue_to_one(&p, r as u32, None, &SolverConfig::default()).unwrap();
    (p, st)
}

#[test]
fn zero_fields_have_zero_residual() {
    let g = Grid::new(3.0, 12).unwrap();
    let ops = OperatorSet::new(&g, DriftScheme::Skew);
    let r = residual_bss(&ops, &VectorField::zeros(&g), &ScalarField::zeros(&g), &ScalarField::zeros(&g), None, BssOptions { exclusion_radius: 0.0, coupling: true }).unwrap();
    assert_eq!((r.momentum, r.divergence, r.temperature), (0.0, 0.0, 0.0));
}

#[test]
fn uncoupled_residual_is_the_profile_residual() {
    let d = HomogeneousData::builtin(
        vec![obbq::initial_data::VelocityMode::Swirl { strength: 1.0 }],
        vec![obbq::initial_data::TemperatureMode::Radial { strength: 1.0 }],
        1.0,
    )
    .unwrap();
    let p = profiles(&d, 4.0, 16);
    let ops = OperatorSet::new(p.grid(), DriftScheme::Skew);
    let r = residual_bss(&ops, p.u0(), p.theta0(), &ScalarField::zeros(p.grid()), None, BssOptions { exclusion_radius: 0.0, coupling: false }).unwrap();
    let (a, b) = p.residual_profile_pde(&ops).unwrap();
    assert_eq!(r.momentum.to_bits(), a.to_bits());
    assert_eq!(r.temperature.to_bits(), b.to_bits());
}

#[test]
fn profile_system_residual_converges_under_refinement() {
    let res = |n| {
        let (p, st) = solved(&HomogeneousData::swirl(1.0), 6.0, n);
        let ops = OperatorSet::new(p.grid(), DriftScheme::Skew);
        let u = p.u0().add(&st.v).unwrap();
        let t = p.theta0().add(&st.psi).unwrap();
        residual_bss(&ops, &u, &t, &st.p, None, BssOptions { exclusion_radius: 2.0 / 6.0, coupling: true }).unwrap().momentum
    };
    let ratio = res(16) / res(32);
    assert!((2.0..=5.0).contains(&ratio), "{ratio}");
}

#[test]
fn reconstruction_contracts() {
    let g = Grid::new(4.0f64, 16).unwrap();
    let u = VectorField::from_fn(&g, |d, x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp() * (d as f64 + 1.0));
    let t = ScalarField::from_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 3.0).exp());
    let (a, b) = reconstruct(&u, &t, 0.5).unwrap();
    assert_eq!(a, u);
    assert_eq!(b, t);
    assert!(matches!(reconstruct(&u, &t, 0.0), Err(Error::TimeNonpositive(_))));
    let (z, _) = reconstruct(&VectorField::zeros(&g), &t, 3.0).unwrap();
    assert_eq!(z.max_abs(), 0.0);
    // ‖u(·,2)‖₂ = (2·2)^{1/4}‖U‖₂ against interpolation onto a finer grid.
    let (_, t2) = reconstruct(&u, &t, 2.0).unwrap();
    assert!((l2_norm(&t2) - 2f64.sqrt() * l2_norm(&t)).abs() < 1e-12);
    let fine = Grid::new(8.0, 48).unwrap();
    let (_, ti) = reconstruct_on(&u, &t, 2.0, &fine).unwrap();
    let rel = (l2_norm(&ti) - l2_norm(&t2)).abs() / l2_norm(&t2);
    assert!(rel < 2e-2, "{rel}");
}

#[test]
fn scaling_defect_is_interpolation_error() {
    let (p, st) = solved(&HomogeneousData::swirl(1.0), 4.0, 16);
    let u = p.u0().add(&st.v).unwrap();
    let t = p.theta0().add(&st.psi).unwrap();
    assert_eq!(check_scaling(&u, &t, 1.0).unwrap(), 0.0);
    let h = p.grid().spacing();
    for l in [0.5, 2.0] {
        let d = check_scaling(&u, &t, l).unwrap();
        // Both sides sample the same profile point; only rounding remains.
        assert!(d <= 1e-12 && d <= 5.0 * h * h, "{l}: {d}");
    }
    assert!(check_scaling(&u, &t, 3.0).is_err());
}

#[test]
fn time_laws_have_quarter_exponents() {
    let (_, st) = solved(&HomogeneousData::radial_temperature(1.0), 4.0, 16);
    let laws = time_law_constants(&st.v, &st.psi, &[0.5, 1.0, 2.0, 5.0]).unwrap();
    assert!(laws.dispersion <= 1e-12 && laws.dispersion_prime <= 1e-12);
    assert!((laws.exponent.unwrap() - 0.25).abs() < 1e-9);
    assert!((laws.exponent_prime.unwrap() + 0.25).abs() < 1e-9);
    let (t, v) = laws.values[2];
    assert!((v / t.powf(0.25) - laws.c).abs() < 1e-12 * laws.c);
    let g = Grid::new(3.0, 12).unwrap();
    let zero = time_law_constants(&VectorField::zeros(&g), &ScalarField::zeros(&g), &[0.5, 1.0, 2.0]).unwrap();
    assert_eq!((zero.c, zero.c_prime, zero.exponent), (0.0, 0.0, None));
    assert!(time_law_constants(&st.v, &st.psi, &[1.0, 2.0]).is_err());
}

#[test]
fn weak_l3_of_the_homogeneous_profile() {
    let g = Grid::new(4.0f64, 32).unwrap();
    // min(1/|x|, 1): the supremum is attained on balls of radius 1 to 4.
    let u = VectorField::from_fn(&g, |d, x| if d == 0 { (1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()).min(1.0) } else { 0.0 });
    let w = weak_l3(&u);
    let exact = (4.0 * std::f64::consts::PI / 3.0).cbrt();
    assert!((w - exact).abs() < 0.05 * exact, "{w} vs {exact}");
}

#[test]
fn report_covers_every_check() {
    let (p, st) = solved(&HomogeneousData::swirl(1.0), 4.0, 16);
    let rep = verify_state(&p, &st, &SolverConfig::default(), &VerifyConfig::default()).unwrap();
    assert!(rep.passed(), "{:?}", rep.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert!(json["checks"].as_array().unwrap().len() >= 12);
    let csv = String::from_utf8(rep.to_csv().unwrap()).unwrap();
    assert!(csv.starts_with("check,value,tolerance,pass"));
    let mut half = st.clone();
    half.lambda = 0.5;
    assert!(verify_state(&p, &half, &SolverConfig::default(), &VerifyConfig::default()).is_err());
}

#[test]
fn zero_data_verifies_with_zero_residuals() {
    let (p, st) = solved(&HomogeneousData::zero(), 3.0, 12);
    let rep = verify_state(&p, &st, &SolverConfig::default(), &VerifyConfig::default()).unwrap();
    assert!(rep.passed());
    assert_eq!((rep.bss.momentum, rep.bss.divergence, rep.bss.temperature), (0.0, 0.0, 0.0));
    assert_eq!(rep.time_laws.c, 0.0);
}
