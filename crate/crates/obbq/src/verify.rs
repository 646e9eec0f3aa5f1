//! Checks on computed profiles: the whole-space profile system, exact
//! scaling, the reconstruction and its time laws, and the energy
//! identities of the truncated problem.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{h1_seminorm, l2_norm, Field, Grid, ScalarField, Stagger, VectorField};
use crate::heat::{residual_sq_with, HeatProfiles};
use crate::operators::{Form, OperatorSet};
use crate::real::{lit, Real};
use crate::solver::{ContinuationState, EnergyReport, Solver, SolverConfig};

fn to64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `L²` residuals of momentum, divergence and temperature equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BssResidual {
    pub momentum: f64,
    pub divergence: f64,
    pub temperature: f64,
}

/// Which terms `residual_bss` includes beyond the linear profile operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BssOptions {
    /// Points closer to the origin than this are skipped.
    pub exclusion_radius: f64,
    /// Transport, gravity, pressure and forcing; off leaves the heat
    /// profile operator alone.
    pub coupling: bool,
}

/// Residuals of
///
/// ```text
/// −ΔU − U − x·∇U + (U·∇)U + ∇P = Θ∇|x|⁻¹ + F,   ∇·U = 0,
/// −ΔΘ − Θ − x·∇Θ + ∇·(ΘU) = 0
/// ```
///
/// with the uncut gravity, over points two cells inside the boundary and
/// outside the exclusion radius.
pub fn residual_bss<T: Real>(
    ops: &OperatorSet<T>,
    u: &VectorField<T>,
    theta: &ScalarField<T>,
    p: &ScalarField<T>,
    forcing: Option<&VectorField<T>>,
    opts: BssOptions,
) -> Result<BssResidual> {
    let g = ops.grid();
    for f in [u.grid(), theta.grid(), p.grid()] {
        crate::grid::ensure_same(g, f)?;
    }
    let r2min = lit::<T>(opts.exclusion_radius * opts.exclusion_radius);
    let keep = |s: Stagger, idx: [usize; 3]| {
        let x = g.point(s, idx);
        x[0] * x[0] + x[1] * x[1] + x[2] * x[2] >= r2min
    };
    let vol = g.cell_volume();
    let mut mom = T::zero();
    let grad_p = ops.gradient(p)?;
    for d in 0..3 {
        let s = Stagger::Face(d);
        let extra: Vec<T> = if opts.coupling {
            let t = ops.vector_transport(u.components(), d, u.component(d), Form::Skew);
            let grav = ops.gravity_component(theta.values(), d, None);
            let gp = grad_p.component(d);
            (0..t.len()).map(|q| t[q] + gp[q] - grav[q] - forcing.map_or(T::zero(), |f| f.component(d)[q])).collect()
        } else {
            vec![T::zero(); u.component(d).len()]
        };
        mom += residual_sq_with(ops, s, u.component(d), |q, idx| keep(s, idx).then(|| extra[q]));
    }
    let extra_t = if opts.coupling { ops.scalar_transport(u.components(), theta.values(), Form::Skew) } else { vec![T::zero(); theta.values().len()] };
    let temp = residual_sq_with(ops, Stagger::Cell, theta.values(), |q, idx| keep(Stagger::Cell, idx).then(|| extra_t[q]));
    let div = ops.divergence_raw(u.components());
    let n = g.cells();
    let mut dsum = T::zero();
    for k in 2..n.saturating_sub(2) {
        for j in 2..n - 2 {
            for i in 2..n - 2 {
                if keep(Stagger::Cell, [i, j, k]) {
                    dsum += div[(k * n + j) * n + i].powi(2);
                }
            }
        }
    }
    Ok(BssResidual { momentum: to64((vol * mom).sqrt()), divergence: to64((vol * dsum).sqrt()), temperature: to64((vol * temp).sqrt()) })
}

/// `u(x,t) = (2t)^{−1/2} U(x/√(2t))` and likewise `θ`, on the grid scaled
/// by `√(2t)` so that every node maps onto a node of the profile grid.
pub fn reconstruct<T: Real>(u: &VectorField<T>, theta: &ScalarField<T>, t: f64) -> Result<(VectorField<T>, ScalarField<T>)> {
    if !(t > 0.0) {
        return Err(Error::TimeNonpositive(t));
    }
    let s = lit::<T>((2.0 * t).sqrt());
    let g = u.grid();
    crate::grid::ensure_same(g, theta.grid())?;
    let target = Grid::new(g.half_width() * s, g.cells())?;
    let inv = T::one() / s;
    let comps = u.components().clone().map(|c| c.into_iter().map(|v| v * inv).collect());
    let vals = theta.values().iter().map(|&v| v * inv).collect();
    Ok((VectorField::from_components(&target, comps)?, ScalarField::from_values(&target, vals)?))
}

/// The reconstruction at time `t` sampled on an arbitrary grid by trilinear
/// interpolation of the profiles.
pub fn reconstruct_on<T: Real>(u: &VectorField<T>, theta: &ScalarField<T>, t: f64, target: &Grid<T>) -> Result<(VectorField<T>, ScalarField<T>)> {
    if !(t > 0.0) {
        return Err(Error::TimeNonpositive(t));
    }
    let s = lit::<T>((2.0 * t).sqrt());
    let inv = T::one() / s;
    let at = |x: [T; 3]| x.map(|c| c * inv);
    Ok((VectorField::from_fn(target, |d, x| inv * u.sample(d, at(x))), ScalarField::from_fn(target, |x| inv * theta.sample(at(x)))))
}

/// Largest relative difference between `λu(λx, λ²t)` and `u(x, t)` at
/// `t = 1`, both sampled by interpolation at the cell centres of the profile
/// grid.
pub fn check_scaling<T: Real>(u: &VectorField<T>, theta: &ScalarField<T>, lambda: f64) -> Result<f64> {
    if !(0.5..=2.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("scaling factor {lambda} outside [1/2, 2]")));
    }
    let t = 1.0;
    let (ua, ta) = reconstruct(u, theta, lambda * lambda * t)?;
    let (ub, tb) = reconstruct(u, theta, t)?;
    let lam = lit::<T>(lambda);
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for x in u.grid().points(Stagger::Cell) {
        let xl = x.map(|c| c * lam);
        for d in 0..3 {
            let a = to64(lam * ua.sample(d, xl));
            let b = to64(ub.sample(d, x));
            diff = diff.max((a - b).abs());
            scale = scale.max(b.abs());
        }
        let a = to64(lam * ta.sample(xl));
        let b = to64(tb.sample(x));
        diff = diff.max((a - b).abs());
        scale = scale.max(b.abs());
    }
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Measured time laws of the perturbation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeLaws {
    /// `‖u(t) − e^{tΔ}u₀‖₂ + ‖θ(t) − e^{tΔ}θ₀‖₂` at each time.
    pub values: Vec<(f64, f64)>,
    /// The same for gradients.
    pub gradients: Vec<(f64, f64)>,
    /// `c = 2^{1/4}(‖V‖₂ + ‖Ψ‖₂)`.
    pub c: f64,
    /// `c′ = 2^{−1/4}(‖∇V‖₂ + ‖∇Ψ‖₂)`.
    pub c_prime: f64,
    /// Relative spread of `value/t^{1/4}` and `gradient·t^{1/4}`.
    pub dispersion: f64,
    pub dispersion_prime: f64,
    /// Two-point log fits; absent when the perturbation vanishes.
    pub exponent: Option<f64>,
    pub exponent_prime: Option<f64>,
}

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let min = xs.iter().cloned().fold(f64::MAX, f64::min);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if mean != 0.0 {
        (max - min) / mean.abs()
    } else {
        max - min
    }
}

fn log_fit(a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    (a.1 > 0.0 && b.1 > 0.0).then(|| (b.1.ln() - a.1.ln()) / (b.0.ln() - a.0.ln()))
}

/// Evaluates the time laws of the perturbation `(v, ψ)(t)` built from `V`, `Ψ`
/// at each of `times`.
pub fn time_law_constants<T: Real>(v: &VectorField<T>, psi: &ScalarField<T>, times: &[f64]) -> Result<TimeLaws> {
    if times.len() < 3 {
        return Err(Error::InvalidInput("time laws need at least three times".into()));
    }
    let mut values = Vec::new();
    let mut gradients = Vec::new();
    for &t in times {
        let (vt, pt) = reconstruct(v, psi, t)?;
        values.push((t, to64(l2_norm(&vt)) + to64(l2_norm(&pt))));
        gradients.push((t, to64(h1_seminorm(&vt)) + to64(h1_seminorm(&pt))));
    }
    let c = 2f64.powf(0.25) * (to64(l2_norm(v)) + to64(l2_norm(psi)));
    let c_prime = 2f64.powf(-0.25) * (to64(h1_seminorm(v)) + to64(h1_seminorm(psi)));
    let ratios: Vec<f64> = values.iter().map(|&(t, x)| x / t.powf(0.25)).collect();
    let ratios_g: Vec<f64> = gradients.iter().map(|&(t, x)| x * t.powf(0.25)).collect();
    let (first, last) = (0, times.len() - 1);
    Ok(TimeLaws {
        exponent: log_fit(values[first], values[last]),
        exponent_prime: log_fit(gradients[first], gradients[last]),
        dispersion: spread(&ratios),
        dispersion_prime: spread(&ratios_g),
        values,
        gradients,
        c,
        c_prime,
    })
}

/// `sup_α α·|{|U| > α}|^{1/3}` with `|U|` at cell centres.
pub fn weak_l3<T: Real>(u: &VectorField<T>) -> f64 {
    let g = u.grid();
    let n = g.cells();
    let vol = to64(g.cell_volume());
    let mut mags = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let mut s = 0.0;
                for d in 0..3 {
                    let dims = g.dims(Stagger::Face(d));
                    let mut p = [i, j, k];
                    let a = u.component(d)[(p[2] * dims[1] + p[1]) * dims[0] + p[0]];
                    p[d] += 1;
                    let b = u.component(d)[(p[2] * dims[1] + p[1]) * dims[0] + p[0]];
                    s += (0.5 * to64(a + b)).powi(2);
                }
                mags.push(s.sqrt());
            }
        }
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter().enumerate().map(|(j, &a)| a * ((j + 1) as f64 * vol).cbrt()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Exclusion radius for the profile system; `2/k` when absent.
    pub exclusion_radius: Option<f64>,
    pub scaling_factors: Vec<f64>,
    /// Scaling defects must stay below this multiple of `h²`.
    pub scaling_coefficient: f64,
    pub times: Vec<f64>,
    pub time_tolerance: f64,
    pub exponent_tolerance: f64,
    pub energy_tolerance: f64,
    pub hardy_limit: f64,
    /// Admissible relative residual of the truncated system.
    pub residual_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            exclusion_radius: None,
            scaling_factors: vec![0.5, 2.0],
            scaling_coefficient: 5.0,
            times: vec![0.5, 1.0, 2.0],
            time_tolerance: 1e-6,
            exponent_tolerance: 1e-3,
            energy_tolerance: 1e-5,
            hardy_limit: 2.05,
            residual_tolerance: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub radius: f64,
    pub cells: usize,
    pub cutoff: u32,
    /// Residuals of the whole-space profile system.
    pub bss: BssResidual,
    /// The same residuals for the heat profiles alone.
    pub profile_residual: (f64, f64),
    pub ssr_residual: f64,
    pub scaling: Vec<(f64, f64)>,
    pub time_laws: TimeLaws,
    pub energy: EnergyReport,
    /// `‖Ψ/|x|‖/‖∇Ψ‖` and the largest ratio over velocity components.
    pub hardy_psi: Option<f64>,
    pub hardy_velocity: Option<f64>,
    pub decay_constants: (f64, f64),
    pub weak_l3: f64,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let err = |e: csv::Error| Error::Format(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "value", "tolerance", "pass"]).map_err(err)?;
        for c in &self.checks {
            w.write_record([c.name.clone(), format!("{:e}", c.value), format!("{:e}", c.tolerance), c.pass.to_string()]).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, json: &Path, csv: &Path) -> Result<()> {
        crate::io::write_atomic(json, self.to_json()?.as_bytes())?;
        crate::io::write_atomic(csv, &self.to_csv()?)
    }
}

fn hardy<T: Real>(ops: &OperatorSet<T>, f: &ScalarField<T>) -> Result<Option<f64>> {
    match ops.hardy_ratio(f) {
        Ok(r) => Ok(Some(to64(r))),
        Err(Error::ZeroGradient) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs every check on a converged state at `λ = 1`.
pub fn verify_state<T: Real>(profiles: &HeatProfiles<T>, state: &ContinuationState<T>, scfg: &SolverConfig, cfg: &VerifyConfig) -> Result<VerificationReport> {
    if state.lambda != 1.0 {
        return Err(Error::InvalidInput(format!("verification needs a state at lambda 1, got {}", state.lambda)));
    }
    let solver = Solver::new(profiles, scfg)?;
    let ops = solver.ops();
    let g = profiles.grid();
    let h = to64(g.spacing());
    let k = state.cutoff.index();
    let exclusion = cfg.exclusion_radius.unwrap_or(2.0 / k as f64);
    let u = profiles.u0().add(&state.v)?;
    let theta = profiles.theta0().add(&state.psi)?;
    let forcing = (state.forcing.max_abs() != T::zero()).then_some(&state.forcing);
    let bss = residual_bss(ops, &u, &theta, &state.p, forcing, BssOptions { exclusion_radius: exclusion, coupling: true })?;
    let (pu, pt) = profiles.residual_profile_pde(ops)?;
    let ssr_residual = solver.residual_ssr(state)?;
    let scaling = cfg.scaling_factors.iter().map(|&l| Ok((l, check_scaling(&u, &theta, l)?))).collect::<Result<Vec<_>>>()?;
    let time_laws = time_law_constants(&state.v, &state.psi, &cfg.times)?;
    let energy = solver.energy_report(state)?;
    let hardy_psi = hardy(ops, &state.psi)?;
    let mut hardy_velocity: Option<f64> = None;
    for d in 0..3 {
        // Each face component averaged to cell centres.
        let c = ScalarField::from_fn(g, |x| state.v.sample(d, x));
        if let Some(r) = hardy(ops, &c)? {
            hardy_velocity = Some(hardy_velocity.map_or(r, |m: f64| m.max(r)));
        }
    }
    let (cv, cg) = profiles.decay_constants();
    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, tolerance: f64| {
        checks.push(Check { name: name.into(), value, tolerance, pass: value.is_finite() && value <= tolerance });
    };
    check("ssr_residual", ssr_residual, cfg.residual_tolerance);
    check("energy_identity_temperature", energy.psi_identity_defect, cfg.energy_tolerance);
    check("energy_identity_velocity", energy.v_identity_defect, cfg.energy_tolerance);
    let est = if energy.estimate_holds(1e-9) { 0.0 } else { energy.estimate_lhs - energy.estimate_rhs };
    check("temperature_estimate_excess", est, 0.0);
    for &(l, d) in &scaling {
        check(&format!("scaling_defect_{l}"), d, cfg.scaling_coefficient * h * h);
    }
    check("time_law_dispersion", time_laws.dispersion, cfg.time_tolerance);
    check("time_law_dispersion_gradient", time_laws.dispersion_prime, cfg.time_tolerance);
    // A vanishing perturbation obeys both laws with c = c′ = 0 for any
    // exponent.
    check("time_law_exponent", time_laws.exponent.map_or(0.0, |e| (e - 0.25).abs()), cfg.exponent_tolerance);
    check("time_law_exponent_gradient", time_laws.exponent_prime.map_or(0.0, |e| (e + 0.25).abs()), cfg.exponent_tolerance);
    check("hardy_temperature", hardy_psi.unwrap_or(0.0), cfg.hardy_limit);
    check("hardy_velocity", hardy_velocity.unwrap_or(0.0), cfg.hardy_limit);
    for (name, v) in [("bss_momentum", bss.momentum), ("bss_divergence", bss.divergence), ("bss_temperature", bss.temperature)] {
        check(name, v, f64::INFINITY);
    }
    Ok(VerificationReport {
        radius: to64(g.half_width()),
        cells: g.cells(),
        cutoff: k,
        bss,
        profile_residual: (to64(pu), to64(pt)),
        ssr_residual,
        scaling,
        time_laws,
        energy,
        hardy_psi,
        hardy_velocity,
        decay_constants: (to64(cv), to64(cg)),
        weak_l3: weak_l3(&u),
        checks,
    })
}
