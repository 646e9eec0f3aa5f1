//! λ-continuation with Picard sweeps for the truncated problem
//!
//! ```text
//! −ΔV + ∇P = λ(V + x·∇V − (W·∇)W + (Ψ+Θ₀)ρ_k∇|x|⁻¹ + F),   ∇·V = 0,
//! −ΔΨ     = λ(Ψ + x·∇Ψ − ∇·((Ψ+Θ₀)W)),                    W = U₀ + V,
//! ```
//!
//! with `V = 0`, `Ψ = 0` on the boundary layer. The principal part
//! `−Δ − λ(1 + x·∇)` stays implicit; with the skew drift it contributes
//! `+λ/2` to coercivity. Transport is lagged. Each sweep solves for `Ψ`
//! first, then for `V` on the discretely divergence-free subspace, then
//! under-relaxes.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StepAttempt};
use crate::grid::{h1_norm, inner, l2_norm, Field, ScalarField, Stagger, VectorField};
use crate::heat::HeatProfiles;
use crate::linalg::krylov::{gmres, GmresOptions};
use crate::linalg::separable::{AxisFactor, SeparableSolver};
use crate::operators::{for_interior, Block, CutoffFamily, DriftScheme, Form, OperatorSet};
use crate::real::{lit, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// First λ increment; also the largest one.
    pub initial_step: f64,
    /// Continuation gives up once the increment falls below this.
    pub min_step: f64,
    /// Factor applied to the increment after a failed step.
    pub bisection: f64,
    /// Relative residual at which a Picard run has converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Under-relaxation `ω ∈ (0, 1]`.
    pub relaxation: f64,
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
    pub gmres_restart: usize,
    pub drift: DriftScheme,
    /// Abort when `‖V‖²_{H¹} + ‖Ψ‖²_{H¹}` exceeds this.
    pub energy_ceiling: f64,
    /// A Picard run is declared divergent when the residual exceeds this
    /// multiple of the best residual seen in the run.
    pub growth_limit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            initial_step: 1.0,
            min_step: 1.0 / 64.0,
            bisection: 0.5,
            tolerance: 1e-8,
            max_iterations: 200,
            relaxation: 0.7,
            inner_tolerance: 1e-10,
            inner_max_iterations: 400,
            gmres_restart: 30,
            drift: DriftScheme::Skew,
            energy_ceiling: 1e8,
            growth_limit: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.min_step > 0.0 && self.min_step <= self.initial_step && self.initial_step <= 1.0) {
            return bad("need 0 < min_step <= initial_step <= 1");
        }
        if !(self.bisection > 0.0 && self.bisection < 1.0) {
            return bad("bisection factor must lie in (0, 1)");
        }
        if !(self.tolerance > 0.0 && self.inner_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad("relaxation must lie in (0, 1]");
        }
        if self.max_iterations == 0 || self.inner_max_iterations == 0 || self.gmres_restart == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.energy_ceiling > 0.0 && self.growth_limit > 1.0) {
            return bad("energy_ceiling must be positive and growth_limit above 1");
        }
        Ok(())
    }
}

/// One row of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub lambda: f64,
    pub iteration: usize,
    pub residual: f64,
    pub v_h1: f64,
    pub psi_h1: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuationState<T> {
    pub lambda: f64,
    pub v: VectorField<T>,
    pub psi: ScalarField<T>,
    pub p: ScalarField<T>,
    pub cutoff: CutoffFamily,
    pub forcing: VectorField<T>,
    /// Relative residual after every Picard sweep of accepted steps.
    pub residual_history: Vec<f64>,
    /// `(λ, ‖V‖_{H¹}, ‖Ψ‖_{H¹})` at every accepted λ.
    pub norm_history: Vec<(f64, f64, f64)>,
    pub log: Vec<LogEntry>,
    pub attempts: Vec<StepAttempt>,
    /// Residual of the current iterate, when known.
    pub residual: Option<f64>,
}

impl<T: Real> ContinuationState<T> {
    /// The trivial solution at `λ = 0`.
    pub fn new(profiles: &HeatProfiles<T>, cutoff: CutoffFamily, forcing: Option<VectorField<T>>) -> Result<Self> {
        let g = profiles.grid();
        let forcing = match forcing {
            Some(f) => {
                crate::grid::ensure_same(g, f.grid())?;
                f
            }
            None => VectorField::zeros(g),
        };
        Ok(ContinuationState {
            lambda: 0.0,
            v: VectorField::zeros(g),
            psi: ScalarField::zeros(g),
            p: ScalarField::zeros(g),
            cutoff,
            forcing,
            residual_history: Vec::new(),
            norm_history: vec![(0.0, 0.0, 0.0)],
            log: Vec::new(),
            attempts: Vec::new(),
            residual: Some(0.0),
        })
    }

    pub fn energy(&self) -> f64 {
        let a = h1_norm(&self.v).to_f64().unwrap_or(f64::NAN);
        let b = h1_norm(&self.psi).to_f64().unwrap_or(f64::NAN);
        a * a + b * b
    }

    /// Writes the convergence log as CSV.
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["lambda", "iteration", "residual", "v_h1", "psi_h1"]).map_err(err)?;
        for e in &self.log {
            w.write_record([e.lambda.to_string(), e.iteration.to_string(), format!("{:e}", e.residual), e.v_h1.to_string(), e.psi_h1.to_string()])
                .map_err(err)?;
        }
        let mut bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        bytes.flush().ok();
        crate::io::write_atomic(path, &bytes)
    }
}

/// Residual parts of the truncated system, unscaled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SsrResidual {
    pub momentum: f64,
    pub divergence: f64,
    pub temperature: f64,
    pub boundary: f64,
    /// Norm of the data forcing used for the relative residual.
    pub scale: f64,
}

impl SsrResidual {
    pub fn absolute(&self) -> f64 {
        (self.momentum.powi(2) + self.divergence.powi(2) + self.temperature.powi(2) + self.boundary.powi(2)).sqrt()
    }

    /// Residual relative to the data forcing; absolute when that vanishes.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.absolute() / self.scale
        } else {
            self.absolute()
        }
    }
}

/// Terms of the two energy identities and the temperature estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub lambda: f64,
    pub psi_grad_sq: f64,
    pub psi_sq: f64,
    /// `⟨∇·(Θ₀W), Ψ⟩`.
    pub psi_coupling: f64,
    /// `|‖∇Ψ‖² + λ/2‖Ψ‖² + λ⟨∇·(Θ₀W),Ψ⟩|` over the sum of magnitudes.
    pub psi_identity_defect: f64,
    pub v_grad_sq: f64,
    pub v_sq: f64,
    pub forcing_f0: f64,
    /// `⟨(V·∇)U₀, V⟩`.
    pub stretching: f64,
    pub gravity: f64,
    pub forcing_f: f64,
    pub v_identity_defect: f64,
    /// Left and right sides of `½‖∇Ψ‖² + λ/2‖Ψ‖² ≤ λ(‖Θ₀‖∞²‖V‖² + ‖Θ₀U₀‖²)`.
    pub estimate_lhs: f64,
    pub estimate_rhs: f64,
}

impl EnergyReport {
    pub fn estimate_holds(&self, slack: f64) -> bool {
        self.estimate_lhs <= self.estimate_rhs * (1.0 + slack) + slack * self.estimate_lhs.abs().max(f64::MIN_POSITIVE)
    }
}

struct Factors<T: Real> {
    lambda: f64,
    scalar: SeparableSolver<T>,
    velocity: [SeparableSolver<T>; 3],
}

/// Single-domain solver bound to one set of heat profiles.
pub struct Solver<'a, T: Real> {
    profiles: &'a HeatProfiles<T>,
    ops: OperatorSet<T>,
    cfg: SolverConfig,
    factors: Option<Factors<T>>,
    /// Inner GMRES iterations spent so far.
    pub inner_iterations: usize,
}

fn to64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

impl<'a, T: Real> Solver<'a, T> {
    pub fn new(profiles: &'a HeatProfiles<T>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Solver { profiles, ops: OperatorSet::new(profiles.grid(), cfg.drift), cfg: cfg.clone(), factors: None, inner_iterations: 0 })
    }

    pub fn ops(&self) -> &OperatorSet<T> {
        &self.ops
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn n(&self) -> usize {
        self.ops.grid().cells()
    }

    /// 1-D factor of `−δ² − λ·drift` along one axis for a block starting at
    /// array index `lo` with `m` points.
    fn axis_factor(&self, s: Stagger, axis: usize, lo: usize, m: usize, lambda: f64) -> AxisFactor {
        let g = self.ops.grid();
        let h = to64(g.spacing());
        let x = |i: usize| to64(g.coord(s, axis, i));
        let mut a = vec![0.0; m * m];
        for r in 0..m {
            let i = lo + r;
            let c = self.cfg.drift.coeffs(x(i - 1), x(i), x(i + 1), h);
            a[r * m + r] = 2.0 / (h * h) - lambda * c[1];
            if r > 0 {
                a[r * m + r - 1] = -1.0 / (h * h) - lambda * c[0];
            }
            if r + 1 < m {
                a[r * m + r + 1] = -1.0 / (h * h) - lambda * c[2];
            }
        }
        AxisFactor::new(m, &a)
    }

    fn shift(&self, lambda: f64) -> f64 {
        -lambda * (1.0 + self.cfg.drift.diagonal::<f64>())
    }

    fn factors(&mut self, lambda: f64) -> &Factors<T> {
        if self.factors.as_ref().map(|f| f.lambda) != Some(lambda) {
            let n = self.n();
            // All axes share coordinates, so one cell-type and one
            // face-type factor serve every block.
            let cell = self.axis_factor(Stagger::Cell, 0, 1, n - 2, lambda);
            let face = self.axis_factor(Stagger::Face(0), 0, 2, n - 3, lambda);
            let s = self.shift(lambda);
            let scalar = SeparableSolver::new([&cell, &cell, &cell], s, None);
            let velocity = [0, 1, 2].map(|d| {
                let axes = [0, 1, 2].map(|a| if a == d { &face } else { &cell });
                SeparableSolver::new(axes, s, None)
            });
            self.factors = Some(Factors { lambda, scalar, velocity });
        }
        self.factors.as_ref().expect("just built")
    }

    /// `−Δf − λ(f + x·∇f)` at interior points.
    fn principal(&self, s: Stagger, f: &[T], lambda: T) -> Vec<T> {
        let lap = self.ops.laplacian_array(s, f);
        let drift = self.ops.drift_array(s, f);
        let dims = self.ops.grid().dims(s);
        let mut out = vec![T::zero(); f.len()];
        for_interior(dims, |_, q| out[q] = -lap[q] - lambda * (f[q] + drift[q]));
        out
    }

    fn transport_velocity(&self, v: &VectorField<T>) -> [Vec<T>; 3] {
        let u0 = self.profiles.u0().components();
        [0, 1, 2].map(|d| v.component(d).iter().zip(&u0[d]).map(|(&a, &b)| a + b).collect())
    }

    /// `−λ∇·((Ψ+Θ₀)W)` in skew form.
    fn temperature_forcing(&self, w: &[Vec<T>; 3], psi: &ScalarField<T>, lambda: T) -> Vec<T> {
        let total: Vec<T> = psi.values().iter().zip(self.profiles.theta0().values()).map(|(&a, &b)| a + b).collect();
        self.ops.scalar_transport(w, &total, Form::Skew).into_iter().map(|v| -lambda * v).collect()
    }

    /// `λ(−(W·∇)U₀ − (W·∇)V + (Ψ+Θ₀)ρ_k∇|x|⁻¹ + F)` on faces.
    fn momentum_forcing(&self, w: &[Vec<T>; 3], v: &VectorField<T>, psi: &ScalarField<T>, st: &ContinuationState<T>, lambda: T) -> [Vec<T>; 3] {
        let total: Vec<T> = psi.values().iter().zip(self.profiles.theta0().values()).map(|(&a, &b)| a + b).collect();
        let u0 = self.profiles.u0();
        [0, 1, 2].map(|d| {
            let a = self.ops.vector_transport(w, d, u0.component(d), Form::Skew);
            let b = self.ops.vector_transport(w, d, v.component(d), Form::Skew);
            let g = self.ops.gravity_component(&total, d, Some(&st.cutoff));
            let f = st.forcing.component(d);
            (0..a.len()).map(|q| lambda * (g[q] + f[q] - a[q] - b[q])).collect()
        })
    }

    fn velocity_blocks(&self) -> [Block; 3] {
        let n = self.n();
        [0, 1, 2].map(|d| Block::velocity(n, d))
    }

    fn gather_velocity(&self, comps: &[Vec<T>; 3]) -> Vec<T> {
        let blocks = self.velocity_blocks();
        let mut out = vec![T::zero(); blocks.iter().map(Block::len).sum()];
        let mut off = 0;
        for d in 0..3 {
            let l = blocks[d].len();
            blocks[d].gather(&comps[d], &mut out[off..off + l]);
            off += l;
        }
        out
    }

    fn scatter_velocity(&self, compact: &[T]) -> [Vec<T>; 3] {
        let g = self.ops.grid();
        let blocks = self.velocity_blocks();
        let mut off = 0;
        [0, 1, 2].map(|d| {
            let mut full = vec![T::zero(); crate::grid::len(g.dims(Stagger::Face(d)))];
            let l = blocks[d].len();
            blocks[d].scatter(&compact[off..off + l], &mut full);
            off += l;
            full
        })
    }

    fn project_compact(&self, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let comps = self.scatter_velocity(x);
        let (p, q) = self.ops.leray_project(&VectorField::from_raw(self.ops.grid(), comps))?;
        Ok((self.gather_velocity(p.components()), q.into_values()))
    }

    /// Solves the momentum equation for `V` on the divergence-free subspace,
    /// starting from `guess`.
    fn solve_velocity(&mut self, rhs_full: &[Vec<T>; 3], guess: &VectorField<T>, lambda: f64) -> Result<VectorField<T>> {
        let lam = lit::<T>(lambda);
        self.factors(lambda);
        let b = self.project_compact(&self.gather_velocity(rhs_full))?.0;
        let mut x = self.gather_velocity(guess.components());
        let blocks = self.velocity_blocks();
        let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let opts = GmresOptions { tolerance: lit::<T>(self.cfg.inner_tolerance), restart: self.cfg.gmres_restart, max_iterations: self.cfg.inner_max_iterations };
        let this = &*self;
        let factors = this.factors.as_ref().expect("built above");
        let keep = |r: Result<(Vec<T>, Vec<T>)>, out: &mut [T]| match r {
            Ok((v, _)) => out.copy_from_slice(&v),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
            }
        };
        let apply = |v: &[T], out: &mut [T]| {
            let full = this.scatter_velocity(v);
            let a: [Vec<T>; 3] = [0, 1, 2].map(|d| this.principal(Stagger::Face(d), &full[d], lam));
            keep(this.project_compact(&this.gather_velocity(&a)), out);
        };
        let precond = |v: &[T], out: &mut [T]| {
            let mut z = vec![T::zero(); v.len()];
            let mut off = 0;
            for d in 0..3 {
                let l = blocks[d].len();
                factors.velocity[d].solve(&v[off..off + l], &mut z[off..off + l]);
                off += l;
            }
            keep(this.project_compact(&z), out);
        };
        let outcome = gmres(apply, precond, &b, &mut x, &opts);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        self.inner_iterations += outcome.iterations;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }
        if !outcome.converged {
            return Err(Error::InnerSolveFailure { residual: to64(outcome.relative_residual), iterations: outcome.iterations });
        }
        let (px, _) = self.project_compact(&x)?;
        Ok(VectorField::from_raw(self.ops.grid(), self.scatter_velocity(&px)))
    }

    fn solve_temperature(&mut self, rhs_full: &[T], lambda: f64) -> ScalarField<T> {
        let n = self.n();
        let block = Block::scalar(n);
        let mut rhs = vec![T::zero(); block.len()];
        block.gather(rhs_full, &mut rhs);
        let mut sol = vec![T::zero(); block.len()];
        self.factors(lambda).scalar.solve(&rhs, &mut sol);
        let mut full = vec![T::zero(); n * n * n];
        block.scatter(&sol, &mut full);
        ScalarField::from_raw(self.ops.grid(), full)
    }

    /// One relaxed Picard sweep at the state's λ; returns the relative
    /// residual of the new iterate.
    pub fn picard_step(&mut self, state: &mut ContinuationState<T>) -> Result<f64> {
        let lambda = state.lambda;
        let lam = lit::<T>(lambda);
        let omega = lit::<T>(self.cfg.relaxation);
        let keep = T::one() - omega;
        let w = self.transport_velocity(&state.v);
        let g = self.temperature_forcing(&w, &state.psi, lam);
        let psi_star = self.solve_temperature(&g, lambda);
        let f = self.momentum_forcing(&w, &state.v, &psi_star, state, lam);
        let v_star = self.solve_velocity(&f, &state.v, lambda)?;
        let psi_new = psi_star.zip(&state.psi, |a, b| omega * a + keep * b)?;
        let v_new = v_star.zip(&state.v, |a, b| omega * a + keep * b)?;
        if psi_new.values().iter().any(|v| !v.is_finite()) || v_new.components().iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }
        state.psi = psi_new;
        state.v = v_new;
        let (res, p) = self.residual_with_pressure(state)?;
        state.p = p;
        let r = res.relative();
        state.residual = Some(r);
        Ok(r)
    }

    fn residual_with_pressure(&self, state: &ContinuationState<T>) -> Result<(SsrResidual, ScalarField<T>)> {
        let lam = lit::<T>(state.lambda);
        let g = self.ops.grid();
        let n = self.n();
        let vol = to64(g.cell_volume());
        let w = self.transport_velocity(&state.v);
        let f = self.momentum_forcing(&w, &state.v, &state.psi, state, lam);
        let a: [Vec<T>; 3] = [0, 1, 2].map(|d| self.principal(Stagger::Face(d), state.v.component(d), lam));
        // Best-fitting pressure: the gradient part of f − AV.
        let diff: [Vec<T>; 3] = [0, 1, 2].map(|d| f[d].iter().zip(&a[d]).map(|(&x, &y)| x - y).collect());
        let (_, p) = self.ops.leray_project(&VectorField::from_raw(g, diff))?;
        let gp = self.ops.gradient(&p)?;
        let blocks = self.velocity_blocks();
        let mut mom = 0.0;
        let mut scale = 0.0;
        let mut boundary = 0.0;
        let zero_psi = ScalarField::zeros(g);
        let zero_v = VectorField::zeros(g);
        let f0 = self.momentum_forcing(&self.transport_velocity(&zero_v), &zero_v, &zero_psi, state, lam);
        for d in 0..3 {
            let mut r: Vec<T> = (0..a[d].len()).map(|q| a[d][q] + gp.component(d)[q] - f[d][q]).collect();
            let mut f0d = f0[d].clone();
            blocks[d].mask(&mut r);
            blocks[d].mask(&mut f0d);
            mom += r.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
            scale += f0d.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
            let mut outside = state.v.component(d).to_vec();
            let mut inside = vec![T::zero(); blocks[d].len()];
            blocks[d].gather(&outside, &mut inside);
            blocks[d].scatter(&vec![T::zero(); inside.len()], &mut outside);
            boundary += outside.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
        }
        let div = self.ops.divergence_raw(state.v.components());
        let sblock = Block::scalar(n);
        let mut div_in = vec![T::zero(); sblock.len()];
        sblock.gather(&div, &mut div_in);
        let divergence = div_in.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
        let gt = self.temperature_forcing(&w, &state.psi, lam);
        let at = self.principal(Stagger::Cell, state.psi.values(), lam);
        let mut rt: Vec<T> = at.iter().zip(&gt).map(|(&x, &y)| x - y).collect();
        sblock.mask(&mut rt);
        let temperature = rt.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
        let mut gt0 = self.temperature_forcing(&self.transport_velocity(&zero_v), &zero_psi, lam);
        sblock.mask(&mut gt0);
        scale += gt0.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
        let mut psi_out = state.psi.values().to_vec();
        sblock.scatter(&vec![T::zero(); sblock.len()], &mut psi_out);
        boundary += psi_out.iter().map(|&v| to64(v).powi(2)).sum::<f64>();
        let res = SsrResidual {
            momentum: (vol * mom).sqrt(),
            divergence: (vol * divergence).sqrt(),
            temperature: (vol * temperature).sqrt(),
            boundary: (vol * boundary).sqrt(),
            scale: (vol * scale).sqrt(),
        };
        Ok((res, p))
    }

    /// Residual parts of the truncated system at the state's λ.
    pub fn residual_parts(&self, state: &ContinuationState<T>) -> Result<SsrResidual> {
        Ok(self.residual_with_pressure(state)?.0)
    }

    /// Relative residual of the truncated system.
    pub fn residual_ssr(&self, state: &ContinuationState<T>) -> Result<f64> {
        Ok(self.residual_parts(state)?.relative())
    }

    /// Picard sweeps at `target` until the residual meets the tolerance.
    /// Returns the number of sweeps.
    pub fn solve_at_lambda(&mut self, state: &mut ContinuationState<T>, target: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidInput(format!("lambda {target} outside [0, 1]")));
        }
        if target == state.lambda && state.residual.is_some_and(|r| r <= self.cfg.tolerance) {
            return Ok(0);
        }
        state.lambda = target;
        let mut best = f64::INFINITY;
        for it in 1..=self.cfg.max_iterations {
            let r = match self.picard_step(state) {
                Ok(r) => r,
                Err(Error::NonFiniteIterate) => {
                    return Err(Error::PicardDiverged { lambda: target, iterations: it, residual: f64::NAN, reason: "non-finite iterate".into() })
                }
                Err(e) => return Err(e),
            };
            let (vh, ph) = (to64(h1_norm(&state.v)), to64(h1_norm(&state.psi)));
            state.log.push(LogEntry { lambda: target, iteration: it, residual: r, v_h1: vh, psi_h1: ph });
            state.residual_history.push(r);
            if !r.is_finite() {
                return Err(Error::PicardDiverged { lambda: target, iterations: it, residual: r, reason: "non-finite residual".into() });
            }
            if vh * vh + ph * ph > self.cfg.energy_ceiling {
                return Err(Error::PicardDiverged {
                    lambda: target,
                    iterations: it,
                    residual: r,
                    reason: format!("energy {:.3e} above the ceiling {:.3e}", vh * vh + ph * ph, self.cfg.energy_ceiling),
                });
            }
            if r <= self.cfg.tolerance {
                return Ok(it);
            }
            if r > self.cfg.growth_limit * best {
                return Err(Error::PicardDiverged { lambda: target, iterations: it, residual: r, reason: format!("residual grew past {}x its best value", self.cfg.growth_limit) });
            }
            best = best.min(r);
        }
        Err(Error::PicardDiverged {
            lambda: target,
            iterations: self.cfg.max_iterations,
            residual: state.residual.unwrap_or(f64::NAN),
            reason: "iteration limit reached".into(),
        })
    }

    /// Advances `state` from its λ to 1, bisecting the increment after
    /// failures.
    pub fn continue_from(&mut self, mut state: ContinuationState<T>) -> Result<ContinuationState<T>> {
        let mut step = self.cfg.initial_step;
        if state.lambda == 0.0 {
            state.residual = Some(self.residual_ssr(&state)?);
        }
        while state.lambda < 1.0 {
            let target = (state.lambda + step).min(1.0);
            let mut trial = state.clone();
            trial.attempts.clear();
            let before = trial.log.len();
            let outcome = self.solve_at_lambda(&mut trial, target);
            let iterations = trial.log.len() - before;
            match outcome {
                Ok(_) => {
                    let r = trial.residual.unwrap_or(f64::NAN);
                    state.attempts.push(StepAttempt { lambda_from: state.lambda, lambda_to: target, iterations, final_residual: r, accepted: true, reason: "converged".into() });
                    let attempts = std::mem::take(&mut state.attempts);
                    state = trial;
                    state.attempts = attempts;
                    let (vh, ph) = (to64(h1_norm(&state.v)), to64(h1_norm(&state.psi)));
                    state.norm_history.push((target, vh, ph));
                    step = (step / self.cfg.bisection).min(self.cfg.initial_step);
                }
                Err(e @ (Error::PicardDiverged { .. } | Error::InnerSolveFailure { .. } | Error::NonFiniteIterate)) => {
                    let r = trial.residual.unwrap_or(f64::NAN);
                    state.attempts.push(StepAttempt { lambda_from: state.lambda, lambda_to: target, iterations, final_residual: r, accepted: false, reason: e.to_string() });
                    state.log.extend_from_slice(&trial.log[before..]);
                    step *= self.cfg.bisection;
                    if step < self.cfg.min_step {
                        return Err(Error::ContinuationStalled { lambda: state.lambda, step, radius: None, history: state.attempts });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(state)
    }

    /// Runs the whole homotopy from the trivial solution at `λ = 0`.
    pub fn continue_to_one(&mut self, cutoff: CutoffFamily, forcing: Option<VectorField<T>>) -> Result<ContinuationState<T>> {
        let st = ContinuationState::new(self.profiles, cutoff, forcing)?;
        self.continue_from(st)
    }

    /// Terms of the energy identities at the state's λ.
    pub fn energy_report(&self, state: &ContinuationState<T>) -> Result<EnergyReport> {
        let lam = lit::<T>(state.lambda);
        let l = state.lambda;
        let g = self.ops.grid();
        let vol = g.cell_volume();
        let sq = |x: T| to64(x * x);
        let w = self.transport_velocity(&state.v);
        let psi_grad_sq = sq(crate::grid::h1_seminorm(&state.psi));
        let psi_sq = sq(l2_norm(&state.psi));
        let b = self.ops.scalar_transport(&w, self.profiles.theta0().values(), Form::Skew);
        let psi_coupling = to64(inner(&ScalarField::from_raw(g, b), &state.psi)?);
        let t16 = [psi_grad_sq, 0.5 * l * psi_sq, l * psi_coupling];
        let psi_identity_defect = rel_defect(t16.iter().sum(), &t16);

        let v_grad_sq = sq(crate::grid::h1_seminorm(&state.v));
        let v_sq = sq(l2_norm(&state.v));
        let u0 = self.profiles.u0();
        let vf = |c: [Vec<T>; 3]| VectorField::from_raw(g, c);
        let f0 = vf([0, 1, 2].map(|d| self.ops.vector_transport(u0.components(), d, u0.component(d), Form::Skew).into_iter().map(|x| -x).collect()));
        let stretch = vf([0, 1, 2].map(|d| self.ops.vector_transport(state.v.components(), d, u0.component(d), Form::Skew)));
        let total: Vec<T> = state.psi.values().iter().zip(self.profiles.theta0().values()).map(|(&a, &b)| a + b).collect();
        let grav = vf([0, 1, 2].map(|d| self.ops.gravity_component(&total, d, Some(&state.cutoff))));
        let forcing_f0 = to64(inner(&f0, &state.v)?);
        let stretching = to64(inner(&stretch, &state.v)?);
        let gravity = to64(inner(&grav, &state.v)?);
        let forcing_f = to64(inner(&state.forcing, &state.v)?);
        let lhs = v_grad_sq + 0.5 * l * v_sq;
        let rhs = l * (forcing_f0 - stretching + gravity + forcing_f);
        let t19 = [v_grad_sq, 0.5 * l * v_sq, l * forcing_f0, l * stretching, l * gravity, l * forcing_f];
        let v_identity_defect = rel_defect(lhs - rhs, &t19);

        let th = self.profiles.theta0().values();
        let th_inf = to64(self.profiles.theta0().max_abs());
        let uc = self.profiles.u0_center();
        let mut tu = T::zero();
        for (q, &t) in th.iter().enumerate() {
            let u2 = uc[0].values()[q].powi(2) + uc[1].values()[q].powi(2) + uc[2].values()[q].powi(2);
            tu += t * t * u2;
        }
        let estimate_lhs = 0.5 * psi_grad_sq + 0.5 * l * psi_sq;
        let estimate_rhs = l * (th_inf * th_inf * v_sq + to64(vol * tu));
        let _ = lam;
        Ok(EnergyReport {
            lambda: l,
            psi_grad_sq,
            psi_sq,
            psi_coupling,
            psi_identity_defect,
            v_grad_sq,
            v_sq,
            forcing_f0,
            stretching,
            gravity,
            forcing_f,
            v_identity_defect,
            estimate_lhs,
            estimate_rhs,
        })
    }
}

fn rel_defect(value: f64, terms: &[f64]) -> f64 {
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    if scale > 0.0 {
        value.abs() / scale
    } else {
        value.abs()
    }
}

/// Runs the homotopy on the grid of `profiles` with cutoff index `k`.
pub fn continue_to_one<T: Real>(
    profiles: &HeatProfiles<T>,
    k: u32,
    forcing: Option<VectorField<T>>,
    cfg: &SolverConfig,
) -> Result<ContinuationState<T>> {
    let mut s = Solver::new(profiles, cfg)?;
    s.continue_to_one(CutoffFamily::new(k)?, forcing)
}
