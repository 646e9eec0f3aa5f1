use obbq::grid::{h1_norm, Grid, VectorField};
use obbq::heat::{compute_profiles, HeatProfiles, QuadratureConfig};
use obbq::initial_data::{HomogeneousData, TemperatureMode, VelocityMode};
use obbq::operators::CutoffFamily;
use obbq::solver::{continue_to_one, ContinuationState, Solver, SolverConfig};
use obbq::Error;

fn profiles(data: &HomogeneousData<f64>, r: f64, n: usize) -> HeatProfiles<f64> {
    compute_profiles(data, &Grid::new(r, n).unwrap(), &QuadratureConfig::default()).unwrap()
}

fn mixed(amp: f64) -> HomogeneousData<f64> {
    HomogeneousData::builtin(vec![VelocityMode::Swirl { strength: 1.0 }], vec![TemperatureMode::Radial { strength: 1.0 }], amp).unwrap()
}

#[test]
fn zero_data_gives_zero_solution_in_one_step() {
    let p = profiles(&HomogeneousData::zero(), 3.0, 12);
    let st = continue_to_one(&p, 3, None, &SolverConfig::default()).unwrap();
    assert_eq!(st.lambda, 1.0);
    assert_eq!(st.v.max_abs(), 0.0);
    assert_eq!(st.psi.max_abs(), 0.0);
    assert_eq!(st.attempts.len(), 1);
    assert!(st.attempts[0].accepted);
}

#[test]
fn initial_state_is_exact_at_lambda_zero() {
    let p = profiles(&mixed(0.5), 3.0, 12);
    let s = Solver::new(&p, &SolverConfig::default()).unwrap();
    let st = ContinuationState::new(&p, CutoffFamily::new(3).unwrap(), None).unwrap();
    assert_eq!(s.residual_ssr(&st).unwrap(), 0.0);
}

#[test]
fn small_data_direct_picard_matches_continuation() {
    let p = profiles(&mixed(0.05), 4.0, 16);
    let cut = CutoffFamily::new(4).unwrap();
    let cfg = SolverConfig { tolerance: 1e-10, ..Default::default() };
    let mut s = Solver::new(&p, &cfg).unwrap();
    let mut direct = ContinuationState::new(&p, cut, None).unwrap();
    s.solve_at_lambda(&mut direct, 1.0).unwrap();
    // Geometric contraction of the residual.
    let h = &direct.residual_history;
    for w in h.windows(2).skip(1) {
        assert!(w[1] < 0.5 * w[0], "{h:?}");
    }
    let stepped = SolverConfig { initial_step: 0.25, tolerance: 1e-10, ..Default::default() };
    let mut s2 = Solver::new(&p, &stepped).unwrap();
    let cont = s2.continue_to_one(cut, None).unwrap();
    assert!(cont.norm_history.len() >= 5);
    let dv = h1_norm(&direct.v.sub(&cont.v).unwrap());
    let dp = h1_norm(&direct.psi.sub(&cont.psi).unwrap());
    assert!(dv + dp < 1e-6, "{dv} {dp}");
}

#[test]
fn energy_identities_hold_at_convergence() {
    let p = profiles(&mixed(1.0), 4.0, 16);
    let mut s = Solver::new(&p, &SolverConfig { tolerance: 1e-10, ..Default::default() }).unwrap();
    let st = s.continue_to_one(CutoffFamily::new(4).unwrap(), None).unwrap();
    assert!(s.residual_ssr(&st).unwrap() <= 1e-10);
    let e = s.energy_report(&st).unwrap();
    assert!(e.psi_identity_defect <= 1e-5, "{e:?}");
    assert!(e.v_identity_defect <= 1e-5, "{e:?}");
    assert!(e.estimate_holds(1e-9), "{e:?}");
    assert!(e.psi_grad_sq > 0.0 && e.v_grad_sq > 0.0);
}

#[test]
fn solution_depends_continuously_on_forcing() {
    let p = profiles(&mixed(0.3), 3.0, 12);
    let g = *p.grid();
    let cfg = SolverConfig { tolerance: 1e-11, ..Default::default() };
    let base = continue_to_one(&p, 3, None, &cfg).unwrap();
    let bump = |x: [f64; 3]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp();
    let mut prev = None;
    for eps in [1e-3, 1e-4] {
        let f = VectorField::from_fn(&g, |d, x| if d == 2 { eps * bump(x) } else { 0.0 });
        let st = continue_to_one(&p, 3, Some(f), &cfg).unwrap();
        let diff = h1_norm(&st.v.sub(&base.v).unwrap()) + h1_norm(&st.psi.sub(&base.psi).unwrap());
        assert!(diff > 0.0);
        if let Some(d) = prev {
            let ratio: f64 = d / diff;
            assert!((ratio - 10.0).abs() < 0.5, "{ratio}");
        }
        prev = Some(diff);
    }
}

#[test]
fn large_data_stalls_with_history() {
    let p = profiles(&HomogeneousData::swirl(40.0), 4.0, 16);
    match continue_to_one(&p, 4, None, &SolverConfig::default()) {
        Err(Error::ContinuationStalled { lambda, step, history, .. }) => {
            assert!(lambda < 1.0 && step < 1.0 / 64.0);
            assert!(history.iter().any(|a| !a.accepted));
            assert!(history.iter().all(|a| a.lambda_to > a.lambda_from));
        }
        other => panic!("expected a stall, got {other:?}"),
    }
}

#[test]
fn iteration_limit_is_reported() {
    let p = profiles(&mixed(1.0), 3.0, 12);
    let cfg = SolverConfig { max_iterations: 2, min_step: 0.5, ..Default::default() };
    let e = continue_to_one(&p, 3, None, &cfg).unwrap_err();
    let Error::ContinuationStalled { history, .. } = e else { panic!("{e:?}") };
    assert!(history[0].reason.contains("iteration limit"));
}

#[test]
fn config_validation_and_serde() {
    assert!(SolverConfig { initial_step: -1.0, ..Default::default() }.validate().is_err());
    assert!(SolverConfig { relaxation: 0.0, ..Default::default() }.validate().is_err());
    assert!(SolverConfig { bisection: 1.0, ..Default::default() }.validate().is_err());
    let c: SolverConfig = serde_json::from_str(r#"{"tolerance": 1e-9}"#).unwrap();
    assert_eq!(c.tolerance, 1e-9);
    assert_eq!(c.relaxation, 0.7);
    assert!(serde_json::from_str::<SolverConfig>(r#"{"tolerence": 1e-9}"#).is_err());
}

#[test]
fn convergence_log_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let p = profiles(&mixed(0.2), 3.0, 12);
    let st = continue_to_one(&p, 3, None, &SolverConfig::default()).unwrap();
    let path = dir.path().join("log.csv");
    st.write_log(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("lambda,iteration,residual,v_h1,psi_h1"));
    assert_eq!(text.lines().count(), st.log.len() + 1);
}
