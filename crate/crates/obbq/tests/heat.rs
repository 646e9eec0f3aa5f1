use obbq::grid::{Grid, Stagger};
use obbq::heat::{cache_key, compute_profiles, compute_profiles_cached, profile_at, QuadratureConfig, RadialRule};
use obbq::initial_data::{HomogeneousData, TemperatureMode, VelocityMode};
use obbq::operators::{DriftScheme, OperatorSet};
use obbq::Error;

fn erf_profile(r: f64) -> f64 {
    if r == 0.0 {
        (2.0 / std::f64::consts::PI).sqrt()
    } else {
        libm::erf(r / std::f64::consts::SQRT_2) / r
    }
}

#[test]
fn radial_temperature_matches_closed_form() {
    let g = Grid::new(6.0f64, 32).unwrap();
    let p = compute_profiles(&HomogeneousData::radial_temperature(1.0), &g, &QuadratureConfig::default()).unwrap();
    let mut worst = 0.0f64;
    for (x, v) in g.points(Stagger::Cell).iter().zip(p.theta0().values()) {
        let e = erf_profile((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
        worst = worst.max(((v - e) / e).abs());
    }
    assert!(worst <= 1e-6, "{worst:e}");
    assert_eq!(p.u0().max_abs(), 0.0);
    // The limit at the origin.
    let q = QuadratureConfig::default();
    let at0 = profile_at(&HomogeneousData::radial_temperature(1.0f64), &q, [0.0; 3]).unwrap();
    assert!((at0.theta - 0.797_884_560_802_865_4).abs() < 1e-12);
}

#[test]
fn radial_gradient_matches_closed_form() {
    let q = QuadratureConfig::default();
    let d = HomogeneousData::radial_temperature(1.0f64);
    for r in [0.2, 1.0, 3.5, 11.0] {
        let x = [r * 0.6, 0.0, r * 0.8];
        let p = profile_at(&d, &q, x).unwrap();
        // d/dr [erf(r/√2)/r] = √(2/π) e^{−r²/2}/r − erf(r/√2)/r².
        let dr = (2.0 / std::f64::consts::PI).sqrt() * (-r * r / 2.0).exp() / r - libm::erf(r / std::f64::consts::SQRT_2) / (r * r);
        for j in 0..3 {
            assert!((p.grad_theta[j] - dr * x[j] / r).abs() < 1e-10 * dr.abs().max(1e-3), "r={r}");
        }
    }
}

#[test]
fn zero_data_gives_zero_profiles() {
    let g = Grid::new(4.0f64, 8).unwrap();
    let p = compute_profiles(&HomogeneousData::zero(), &g, &QuadratureConfig::default()).unwrap();
    assert_eq!(p.u0().max_abs(), 0.0);
    assert_eq!(p.theta0().max_abs(), 0.0);
    assert_eq!(p.decay_constants(), (0.0, 0.0));
    let ops = OperatorSet::new(&g, DriftScheme::Skew);
    assert_eq!(p.residual_profile_pde(&ops).unwrap(), (0.0, 0.0));
}

#[test]
fn swirl_profile_decays_and_is_solenoidal() {
    let g = Grid::new(6.0f64, 32).unwrap();
    let p = compute_profiles(&HomogeneousData::swirl(1.0), &g, &QuadratureConfig::default()).unwrap();
    assert_eq!(p.theta0().max_abs(), 0.0);
    let (cv, cg) = p.decay_constants();
    assert!(cv.is_finite() && cv > 0.0 && cv < 2.0, "{cv}");
    assert!(cg.is_finite() && cg > 0.0);
    let ops = OperatorSet::new(&g, DriftScheme::Skew);
    let h = g.spacing();
    assert!(p.divergence_defect(&ops).unwrap() <= 10.0 * h * h);
    let (l4u, l4t) = p.gradient_l4_norms();
    assert!(l4u.is_finite() && l4u > 0.0 && l4t == 0.0);
}

#[test]
fn decay_constant_of_radial_profile() {
    // Oracle: maximise (1+r)·erf(r/√2)/r on a fine 1-D grid.
    let mut best = 0.0f64;
    for i in 1..200_000 {
        let r = i as f64 * 1e-4;
        best = best.max((1.0 + r) * erf_profile(r));
    }
    let mut prev: Option<f64> = None;
    for r in [6.0, 12.0] {
        let g = Grid::new(r, (4.0 * r) as usize).unwrap();
        let p = compute_profiles(&HomogeneousData::radial_temperature(1.0f64), &g, &QuadratureConfig::default()).unwrap();
        let (cv, _) = p.decay_constants();
        assert!(cv <= best + 1e-9 && cv > 0.99 * best, "{cv} vs {best}");
        if let Some(c) = prev {
            assert!(((cv - c) / c).abs() < 0.1);
        }
        prev = Some(cv);
    }
}

#[test]
fn profile_residual_converges_at_second_order() {
    let q = QuadratureConfig::default();
    for data in [HomogeneousData::radial_temperature(1.0f64), HomogeneousData::swirl(1.0)] {
        let res = |n: usize| {
            let g = Grid::new(6.0f64, n).unwrap();
            let p = compute_profiles(&data, &g, &q).unwrap();
            let (a, b) = p.residual_profile_pde(&OperatorSet::new(&g, DriftScheme::Skew)).unwrap();
            a + b
        };
        let ratio = res(32) / res(64);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }
}

#[test]
fn profiles_are_linear_in_the_data() {
    let g = Grid::new(3.0f64, 8).unwrap();
    let q = QuadratureConfig::default();
    let a = HomogeneousData::swirl(0.7);
    let b = HomogeneousData::radial_temperature(-1.3);
    let both = HomogeneousData::builtin(
        vec![VelocityMode::Swirl { strength: 0.7 }],
        vec![TemperatureMode::Radial { strength: -1.3 }],
        1.0,
    )
    .unwrap();
    let (pa, pb, pab) = (compute_profiles(&a, &g, &q).unwrap(), compute_profiles(&b, &g, &q).unwrap(), compute_profiles(&both, &g, &q).unwrap());
    assert!(pab.u0().sub(&pa.u0().add(pb.u0()).unwrap()).unwrap().max_abs() < 1e-14);
    assert!(pab.theta0().sub(&pa.theta0().add(pb.theta0()).unwrap()).unwrap().max_abs() < 1e-14);
}

#[test]
fn sampled_azimuth_handles_higher_harmonics() {
    // Y₂₀/|x| evolves to f(r)·Y₂₀(x̂); the ratio Θ₀/Y₂₀ must be radial.
    let d = HomogeneousData::builtin(vec![], vec![TemperatureMode::Harmonic { degree: 2, order: 0, strength: 1.0 }], 1.0f64).unwrap();
    let q = QuadratureConfig::default();
    let y20 = |w: [f64; 3]| obbq::initial_data::real_harmonic(2, 0, w);
    let r = 1.7;
    let dirs = [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.0, 0.28, 0.96]];
    let ratios: Vec<f64> = dirs.iter().map(|w| profile_at(&d, &q, w.map(|v| r * v)).unwrap().theta / y20(*w)).collect();
    for k in 1..3 {
        assert!((ratios[k] - ratios[0]).abs() < 1e-10 * ratios[0].abs(), "{ratios:?}");
    }
}

#[test]
fn gauss_radial_rule_is_an_independent_check() {
    let g = Grid::new(4.0f64, 8).unwrap();
    let exact = compute_profiles(&HomogeneousData::radial_temperature(1.0), &g, &QuadratureConfig::default()).unwrap();
    let q = QuadratureConfig { radial_rule: RadialRule::Gauss, radial_nodes: 64, ..Default::default() };
    let gauss = compute_profiles(&HomogeneousData::radial_temperature(1.0), &g, &q).unwrap();
    assert!(exact.theta0().sub(gauss.theta0()).unwrap().max_abs() < 1e-10);
}

#[test]
fn quadrature_preconditions() {
    let g = Grid::new(4.0f64, 8).unwrap();
    let q = QuadratureConfig { truncation: 4.0, ..Default::default() };
    let e = compute_profiles(&HomogeneousData::radial_temperature(1.0), &g, &q).unwrap_err();
    assert!(matches!(e, Error::QuadratureUnderflow { .. }));
}

#[test]
fn cache_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(3.0f64, 8).unwrap();
    let q = QuadratureConfig::default();
    let d = HomogeneousData::swirl(0.4);
    let a = compute_profiles_cached(&d, &g, &q, dir.path()).unwrap();
    let b = compute_profiles_cached(&d, &g, &q, dir.path()).unwrap();
    assert_eq!(a.u0(), b.u0());
    assert_eq!(a.grad_u0(), b.grad_u0());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    assert_ne!(cache_key(&d, &g, &q), cache_key(&d.with_amplitude(0.5), &g, &q));
}
