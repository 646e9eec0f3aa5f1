//! Invading domains: solve on growing cubes with shrinking gravity cutoffs,
//! watch the uniform energy bound and compare successive solutions on a
//! fixed inner cube.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{h1_norm, l2_norm, Grid, ScalarField, VectorField};
use crate::heat::{compute_profiles, compute_profiles_cached, HeatProfiles, QuadratureConfig};
use crate::initial_data::HomogeneousData;
use crate::operators::CutoffFamily;
use crate::real::{lit, Real};
use crate::solver::{ContinuationState, EnergyReport, Solver, SolverConfig};

/// How the cell count follows the radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Resolution {
    /// Same spacing on every domain; inner-cube comparisons are exact
    /// restrictions.
    Spacing(f64),
    /// Same cell count on every domain; comparisons interpolate.
    Cells(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub radii: Vec<f64>,
    /// Cutoff index per radius; `k = ⌈R⌉` when absent.
    pub cutoffs: Option<Vec<u32>>,
    /// Half width of the comparison cube; half the first radius when absent.
    pub comparison_radius: Option<f64>,
    /// The sweep stops once the inner-cube difference falls to this.
    pub tolerance: f64,
    pub resolution: Resolution,
    /// Largest admissible growth of `J_k` or `L_k` between radii.
    pub growth_limit: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            radii: vec![4.0, 8.0, 16.0],
            cutoffs: None,
            comparison_radius: None,
            tolerance: 1e-6,
            resolution: Resolution::Spacing(0.5),
            growth_limit: 1.5,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.radii.len() < 2 {
            return bad("a sweep needs at least two radii".into());
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) || self.radii[0] <= 0.0 {
            return bad("radii must be positive and strictly increasing".into());
        }
        let ks = self.cutoff_indices();
        if ks.len() != self.radii.len() {
            return bad("one cutoff index per radius is required".into());
        }
        if ks.windows(2).any(|w| w[1] < w[0]) || ks.contains(&0) {
            return bad("cutoff indices must be positive and non-decreasing".into());
        }
        let r0 = self.inner_radius();
        if !(r0 > 0.0 && r0 < self.radii[0]) {
            return bad(format!("comparison half width {r0} must lie in (0, {})", self.radii[0]));
        }
        if !(self.tolerance >= 0.0 && self.growth_limit > 1.0) {
            return bad("tolerance must be non-negative and growth_limit above 1".into());
        }
        for &r in &self.radii {
            self.cells_for(r)?;
        }
        if let Resolution::Spacing(h) = self.resolution {
            let m = 2.0 * r0 / h;
            if (m - m.round()).abs() > 1e-9 || !(m.round() as usize).is_multiple_of(2) || m.round() < 8.0 {
                return bad(format!("comparison half width {r0} must span an even number (at least 8) of cells"));
            }
        }
        Ok(())
    }

    pub fn cutoff_indices(&self) -> Vec<u32> {
        match &self.cutoffs {
            Some(k) => k.clone(),
            None => self.radii.iter().map(|r| r.ceil() as u32).collect(),
        }
    }

    pub fn inner_radius(&self) -> f64 {
        self.comparison_radius.unwrap_or(self.radii[0] / 2.0)
    }

    /// Cells per axis on the domain of half width `r`.
    pub fn cells_for(&self, r: f64) -> Result<usize> {
        match self.resolution {
            Resolution::Cells(n) => Ok(n),
            Resolution::Spacing(h) => {
                let c = 2.0 * r / h;
                if !(h > 0.0) || (c - c.round()).abs() > 1e-9 {
                    return Err(Error::Config(format!("radius {r} is not a whole number of cells of size {h}")));
                }
                Ok(c.round() as usize)
            }
        }
    }
}

/// Per-radius record of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusRecord {
    pub radius: f64,
    pub cutoff: u32,
    pub cells: usize,
    /// `‖V_k‖_{H¹}`.
    pub j: f64,
    /// `‖Ψ_k‖_{H¹}`.
    pub l: f64,
    pub residual: f64,
    /// Inner-cube L² distance to the previous radius.
    pub delta: Option<f64>,
    pub picard_iterations: usize,
    pub lambda_steps: usize,
    pub wall_seconds: f64,
    pub energy: EnergyReport,
    /// Whether `‖∇Ψ‖² + ‖Ψ‖² ≤ 2(‖Θ₀‖∞²‖V‖² + ‖Θ₀U₀‖²)` held.
    pub psi_estimate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    /// The inner-cube difference met the tolerance.
    Converged,
    /// Differences decrease strictly but have not met the tolerance.
    Decreasing,
    /// Differences stopped decreasing before meeting the tolerance.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepDiagnostics {
    pub comparison_radius: f64,
    pub records: Vec<RadiusRecord>,
    pub status: SweepStatus,
}

impl SweepDiagnostics {
    /// Relative growth of `J² + L²` between the last two radii.
    pub fn final_increment(&self) -> Option<f64> {
        let n = self.records.len();
        if n < 2 {
            return None;
        }
        let e = |r: &RadiusRecord| r.j * r.j + r.l * r.l;
        let (a, b) = (e(&self.records[n - 2]), e(&self.records[n - 1]));
        Some(if a > 0.0 { (b - a) / a } else if b == 0.0 { 0.0 } else { f64::INFINITY })
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.delta).collect()
    }

    pub fn deltas_decreasing(&self) -> bool {
        self.deltas().windows(2).all(|w| w[1] < w[0])
    }

    pub fn max_energy(&self) -> f64 {
        self.records.iter().map(|r| r.j * r.j + r.l * r.l).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let err = |e: csv::Error| Error::Format(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["radius", "k", "cells", "j", "l", "delta", "residual", "picard_iterations", "wall_seconds"]).map_err(err)?;
        for r in &self.records {
            w.write_record([
                r.radius.to_string(),
                r.cutoff.to_string(),
                r.cells.to_string(),
                r.j.to_string(),
                r.l.to_string(),
                r.delta.map(|d| d.to_string()).unwrap_or_default(),
                format!("{:e}", r.residual),
                r.picard_iterations.to_string(),
                format!("{:.3}", r.wall_seconds),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_csv()?)
    }
}

/// Body force sampled on each domain: `(component, point) ↦ value`.
pub type Forcing<'a> = &'a (dyn Fn(usize, [f64; 3]) -> f64 + Sync);

/// Where a sweep reads and writes files.
#[derive(Clone, Copy, Default)]
pub struct SweepIo<'a> {
    pub cache_dir: Option<&'a Path>,
    /// Per-radius `V`, `Ψ` snapshots.
    pub snapshot_dir: Option<&'a Path>,
    pub progress: Option<&'a dyn Fn(&RadiusRecord)>,
}

pub struct SweepResult<T: Real> {
    pub u: VectorField<T>,
    pub theta: ScalarField<T>,
    pub pressure: ScalarField<T>,
    pub state: ContinuationState<T>,
    pub profiles: HeatProfiles<T>,
    pub diagnostics: SweepDiagnostics,
}

/// `U = U₀ + V`, `Θ = Θ₀ + Ψ` and the pressure.
pub fn assemble_profiles<T: Real>(state: &ContinuationState<T>, profiles: &HeatProfiles<T>) -> Result<(VectorField<T>, ScalarField<T>, ScalarField<T>)> {
    Ok((profiles.u0().add(&state.v)?, profiles.theta0().add(&state.psi)?, state.p.clone()))
}

fn inner_cube<T: Real>(state: &ContinuationState<T>, r0: f64, target: &Grid<T>, exact: bool) -> Result<(VectorField<T>, ScalarField<T>)> {
    if exact {
        Ok((state.v.restrict(lit(r0))?, state.psi.restrict(lit(r0))?))
    } else {
        Ok((state.v.interpolate_to(target), state.psi.interpolate_to(target)))
    }
}

pub fn run_sweep<T: Real>(
    data: &HomogeneousData<T>,
    forcing: Option<Forcing>,
    cfg: &SweepConfig,
    scfg: &SolverConfig,
    quad: &QuadratureConfig,
    io: SweepIo,
) -> Result<SweepResult<T>> {
    cfg.validate()?;
    scfg.validate()?;
    let ks = cfg.cutoff_indices();
    let r0 = cfg.inner_radius();
    let exact = matches!(cfg.resolution, Resolution::Spacing(_));
    // Comparison grid at the spacing of the first domain.
    let first_n = cfg.cells_for(cfg.radii[0])?;
    let m = ((2.0 * r0 / (2.0 * cfg.radii[0] / first_n as f64)).round() as usize).max(8);
    let cmp_grid = Grid::new(lit::<T>(r0), m + m % 2)?;
    let mut records: Vec<RadiusRecord> = Vec::new();
    let mut prev: Option<(VectorField<T>, ScalarField<T>)> = None;
    let mut last: Option<(ContinuationState<T>, HeatProfiles<T>)> = None;
    let mut status = SweepStatus::Decreasing;
    for (i, &r) in cfg.radii.iter().enumerate() {
        let t = Instant::now();
        let grid = Grid::new(lit::<T>(r), cfg.cells_for(r)?)?;
        let profiles = match io.cache_dir {
            Some(dir) => compute_profiles_cached(data, &grid, quad, dir)?,
            None => compute_profiles(data, &grid, quad)?,
        };
        let f = forcing.map(|f| VectorField::from_fn(&grid, |d, x| lit(f(d, x.map(|v| v.to_f64().unwrap_or(f64::NAN))))));
        let mut solver = Solver::new(&profiles, scfg)?;
        let state = match solver.continue_to_one(CutoffFamily::new(ks[i])?, f) {
            Ok(s) => s,
            Err(Error::ContinuationStalled { lambda, step, history, .. }) => {
                return Err(Error::ContinuationStalled { lambda, step, radius: Some(r), history })
            }
            Err(e) => return Err(e),
        };
        let energy = solver.energy_report(&state)?;
        let residual = solver.residual_ssr(&state)?;
        let j = h1_norm(&state.v).to_f64().unwrap_or(f64::NAN);
        let l = h1_norm(&state.psi).to_f64().unwrap_or(f64::NAN);
        let cube = inner_cube(&state, r0, &cmp_grid, exact)?;
        let delta = match &prev {
            Some((pv, pp)) => {
                let dv = l2_norm(&cube.0.sub(pv)?).to_f64().unwrap_or(f64::NAN);
                let dp = l2_norm(&cube.1.sub(pp)?).to_f64().unwrap_or(f64::NAN);
                Some((dv * dv + dp * dp).sqrt())
            }
            None => None,
        };
        if let Some(dir) = io.snapshot_dir {
            crate::io::write_vector(&dir.join(format!("v-R{r}.obbq")), &state.v)?;
            crate::io::write_scalar(&dir.join(format!("psi-R{r}.obbq")), &state.psi)?;
        }
        let psi_estimate = energy.estimate_holds(1e-6);
        let rec = RadiusRecord {
            radius: r,
            cutoff: ks[i],
            cells: grid.cells(),
            j,
            l,
            residual,
            delta,
            picard_iterations: state.log.len(),
            lambda_steps: state.attempts.iter().filter(|a| a.accepted).count(),
            wall_seconds: t.elapsed().as_secs_f64(),
            energy,
            psi_estimate,
        };
        if let Some(cb) = io.progress {
            cb(&rec);
        }
        if let Some(p) = records.last() {
            for (now, before) in [(rec.j, p.j), (rec.l, p.l)] {
                if before > 0.0 && now > cfg.growth_limit * before {
                    return Err(Error::SweepDiverged { radius: r, factor: now / before, limit: cfg.growth_limit });
                }
            }
        }
        if let (Some(d), Some(pd)) = (rec.delta, records.last().and_then(|p| p.delta)) {
            if d >= pd {
                status = SweepStatus::Inconclusive;
            }
        }
        let met = rec.delta.is_some_and(|d| d <= cfg.tolerance);
        records.push(rec);
        prev = Some(cube);
        last = Some((state, profiles));
        if met {
            status = SweepStatus::Converged;
            break;
        }
    }
    let (state, profiles) = last.expect("at least two radii");
    let (u, theta, pressure) = assemble_profiles(&state, &profiles)?;
    Ok(SweepResult { u, theta, pressure, state, profiles, diagnostics: SweepDiagnostics { comparison_radius: r0, records, status } })
}
