//! Self-similar heat profiles `U₀ = e^{Δ/2}u₀` and `Θ₀ = e^{Δ/2}θ₀`.
//!
//! Both are convolutions with `G_{1/2}(z) = (2π)^{-3/2} e^{−|z|²/2}`. The data
//! are written as `σ(ω)/r` in spherical coordinates about their singularity,
//! so the `r²` Jacobian leaves the smooth radial weight `r`. For the polar
//! axis we take `x̂`; then the radial integral of `r·G(x − rω)` depends only on
//! the polar angle and has a closed form in `erfc`. The polar angle uses
//! Gauss–Legendre on the cone where the Gaussian is not negligible. The
//! azimuth is averaged exactly when the sphere maps are affine in `ω` and
//! sampled with the periodic trapezoid rule otherwise.
//!
//! Gradients convolve the data with `∇G_{1/2}`; no grid differencing.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{index, Grid, ScalarField, Stagger, VectorField};
use crate::initial_data::{HomogeneousData, LinearForm};
use crate::operators::OperatorSet;
use crate::quadrature::gauss_legendre;
use crate::real::{lit, Real};

/// How the radial integral along each ray is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialRule {
    /// Closed form in `erfc`.
    #[default]
    Exact,
    /// Gauss–Legendre on `[s − T, s + T] ∩ [0, ∞)`, where `s` is the
    /// foot of the perpendicular along the ray. Kept as an independent check.
    Gauss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub radial_nodes: usize,
    /// Polar Gauss nodes; the azimuth (when sampled) uses twice as many.
    pub angular_nodes: usize,
    /// Distance `|x − y|` beyond which the kernel is dropped, in units of
    /// the kernel's standard deviation (which is 1 at `t = 1/2`).
    pub truncation: f64,
    pub radial_rule: RadialRule,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { radial_nodes: 32, angular_nodes: 64, truncation: 6.0 * std::f64::consts::SQRT_2, radial_rule: RadialRule::Exact }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 32 || self.angular_nodes < 64 {
            return Err(Error::Config(format!(
                "quadrature needs at least 32 radial and 64 angular nodes, got {} and {}",
                self.radial_nodes, self.angular_nodes
            )));
        }
        if !(self.truncation >= 6.0) {
            return Err(Error::QuadratureUnderflow { radius: self.truncation });
        }
        Ok(())
    }
}

/// Heat profiles on one grid. `U₀` lives on faces, everything else at cell
/// centres.
#[derive(Clone, Debug)]
pub struct HeatProfiles<T> {
    pub(crate) u0: VectorField<T>,
    pub(crate) theta0: ScalarField<T>,
    pub(crate) u0_center: [ScalarField<T>; 3],
    pub(crate) grad_u0: [[ScalarField<T>; 3]; 3],
    pub(crate) grad_theta0: [ScalarField<T>; 3],
    pub(crate) data: HomogeneousData<T>,
    pub(crate) quad: QuadratureConfig,
}

/// Value and first derivatives of `(U₀, Θ₀)` at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointProfile {
    pub u: [f64; 3],
    pub theta: f64,
    /// `grad_u[i][j] = ∂_j U₀,i`.
    pub grad_u: [[f64; 3]; 3],
    pub grad_theta: [f64; 3],
}

struct Rules {
    polar: (Vec<f64>, Vec<f64>),
    radial: (Vec<f64>, Vec<f64>),
    azimuth: usize,
    truncation: f64,
    radial_rule: RadialRule,
}

const NORMALISATION: f64 = 0.063_493_635_934_240_97; // (2π)^{-3/2}

impl Rules {
    fn new(q: &QuadratureConfig) -> Self {
        Rules {
            polar: gauss_legendre(q.angular_nodes),
            radial: gauss_legendre(q.radial_nodes),
            azimuth: 2 * q.angular_nodes,
            truncation: q.truncation,
            radial_rule: q.radial_rule,
        }
    }

    /// `e^{−q/2}∫₀^∞ r e^{−(r−s)²/2} dr` and the same with `r²`.
    fn radial(&self, rho: f64, s: f64, q: f64) -> (f64, f64) {
        match self.radial_rule {
            RadialRule::Exact => {
                let a = (std::f64::consts::PI / 2.0).sqrt() * libm::erfc(-s / std::f64::consts::SQRT_2);
                let e1 = (-0.5 * rho * rho).exp();
                let eq = (-0.5 * q).exp() * a;
                (e1 + s * eq, s * e1 + (1.0 + s * s) * eq)
            }
            RadialRule::Gauss => {
                let lo = (s - self.truncation).max(0.0);
                let hi = s + self.truncation;
                if hi <= lo {
                    return (0.0, 0.0);
                }
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                let (mut i1, mut i2) = (0.0, 0.0);
                for (t, w) in self.radial.0.iter().zip(&self.radial.1) {
                    let r = mid + half * t;
                    let g = w * half * (-0.5 * (q + (r - s) * (r - s))).exp();
                    i1 += g * r;
                    i2 += g * r * r;
                }
                (i1, i2)
            }
        }
    }

    /// Polar nodes `(cos φ, sin φ, weight)` with `sin φ dφ` folded into the
    /// weight, restricted to the cone `ρ sin φ ≤ T` when the point lies
    /// beyond the truncation radius.
    fn polar_nodes(&self, rho: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let phi_max = if rho > self.truncation { (self.truncation / rho).asin() } else { std::f64::consts::PI };
        let half = 0.5 * phi_max;
        self.polar.0.iter().zip(&self.polar.1).map(move |(t, w)| {
            let phi = half * (t + 1.0);
            let (sp, cp) = phi.sin_cos();
            (cp, sp, w * half * sp)
        })
    }

    fn evaluate<T: Real>(&self, data: &HomogeneousData<T>, linear: Option<&LinearForm>, x: [f64; 3]) -> PointProfile {
        let rho = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let xh = if rho > 0.0 { x.map(|v| v / rho) } else { [0.0, 0.0, 1.0] };
        match linear {
            Some(lf) => self.evaluate_linear(lf, x, rho, xh),
            None => self.evaluate_sampled(data, x, rho, xh),
        }
    }

    /// Polar sums `Σ w·(I₁, I₁μ, I₂μ, I₂μ², I₂ sin²φ/2)`, normalised.
    fn polar_sums(&self, rho: f64) -> [f64; 5] {
        let mut acc = [0.0; 5];
        for (mu, sp, w) in self.polar_nodes(rho) {
            let (i1, i2) = self.radial(rho, rho * mu, rho * rho * sp * sp);
            acc[0] += w * i1;
            acc[1] += w * i1 * mu;
            acc[2] += w * i2 * mu;
            acc[3] += w * i2 * mu * mu;
            acc[4] += w * i2 * 0.5 * sp * sp;
        }
        let c = 2.0 * std::f64::consts::PI * NORMALISATION;
        acc.map(|v| c * v)
    }

    fn evaluate_linear(&self, lf: &LinearForm, x: [f64; 3], rho: f64, xh: [f64; 3]) -> PointProfile {
        assemble_linear(lf, x, xh, self.polar_sums(rho))
    }
}

/// Point values for affine sphere maps, using the azimuthal means
/// `⟨ω⟩ = μx̂` and `⟨ωωᵀ⟩ = μ²x̂x̂ᵀ + (sin²φ/2)(I − x̂x̂ᵀ)`.
fn assemble_linear(lf: &LinearForm, x: [f64; 3], xh: [f64; 3], sums: [f64; 5]) -> PointProfile {
    let [s1, s1m, s2m, s2mm, s2ss] = sums;
    let second = |k: usize, j: usize| s2mm * xh[k] * xh[j] + s2ss * (if k == j { 1.0 } else { 0.0 } - xh[k] * xh[j]);
    let mut out = PointProfile::default();
    let bx: f64 = (0..3).map(|k| lf.beta[k] * xh[k]).sum();
    out.theta = lf.b0 * s1 + bx * s1m;
    for j in 0..3 {
        let quad: f64 = (0..3).map(|k| lf.beta[k] * second(k, j)).sum();
        out.grad_theta[j] = lf.b0 * s2m * xh[j] + quad - x[j] * out.theta;
    }
    for i in 0..3 {
        let mx: f64 = (0..3).map(|k| lf.m[i][k] * xh[k]).sum();
        out.u[i] = mx * s1m;
    }
    for i in 0..3 {
        for j in 0..3 {
            let quad: f64 = (0..3).map(|k| lf.m[i][k] * second(k, j)).sum();
            out.grad_u[i][j] = quad - x[j] * out.u[i];
        }
    }
    out
}

impl Rules {
    fn evaluate_sampled<T: Real>(&self, data: &HomogeneousData<T>, x: [f64; 3], rho: f64, xh: [f64; 3]) -> PointProfile {
        let e1 = orthogonal_unit(xh);
        let e2 = [xh[1] * e1[2] - xh[2] * e1[1], xh[2] * e1[0] - xh[0] * e1[2], xh[0] * e1[1] - xh[1] * e1[0]];
        let amp = data.amplitude().to_f64().unwrap_or(f64::NAN);
        let na = self.azimuth;
        let da = 2.0 * std::f64::consts::PI / na as f64;
        let trig: Vec<(f64, f64)> = (0..na).map(|k| (k as f64 * da).sin_cos()).collect();
        let mut out = PointProfile::default();
        for (mu, sp, w) in self.polar_nodes(rho) {
            let (i1, i2) = self.radial(rho, rho * mu, rho * rho * sp * sp);
            let wa = w * da * NORMALISATION * amp;
            for &(sa, ca) in &trig {
                let om = [0, 1, 2].map(|d| mu * xh[d] + sp * (ca * e1[d] + sa * e2[d]));
                let (su, st) = data.sphere(om.map(lit::<T>));
                let su = su.map(|v| v.to_f64().unwrap_or(f64::NAN));
                let st = st.to_f64().unwrap_or(f64::NAN);
                out.theta += wa * i1 * st;
                for j in 0..3 {
                    out.grad_theta[j] += wa * st * (i2 * om[j] - x[j] * i1);
                }
                for i in 0..3 {
                    out.u[i] += wa * i1 * su[i];
                    for j in 0..3 {
                        out.grad_u[i][j] += wa * su[i] * (i2 * om[j] - x[j] * i1);
                    }
                }
            }
        }
        out
    }
}

fn orthogonal_unit(v: [f64; 3]) -> [f64; 3] {
    // Cross with the coordinate axis least aligned with v.
    let a = if v[0].abs() <= v[1].abs() && v[0].abs() <= v[2].abs() {
        [1.0, 0.0, 0.0]
    } else if v[1].abs() <= v[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let c = [v[1] * a[2] - v[2] * a[1], v[2] * a[0] - v[0] * a[2], v[0] * a[1] - v[1] * a[0]];
    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    c.map(|x| x / n)
}

/// `(U₀, Θ₀)` and their gradients at a single point.
pub fn profile_at<T: Real>(data: &HomogeneousData<T>, quad: &QuadratureConfig, x: [f64; 3]) -> Result<PointProfile> {
    quad.validate()?;
    let rules = Rules::new(quad);
    Ok(rules.evaluate(data, data.linear_form().as_ref(), x))
}

/// Computes the heat profiles of `data` on every point of `grid`.
pub fn compute_profiles<T: Real>(data: &HomogeneousData<T>, grid: &Grid<T>, quad: &QuadratureConfig) -> Result<HeatProfiles<T>> {
    quad.validate()?;
    if data.amplitude() == T::zero() {
        return Ok(HeatProfiles::zero(grid, data, quad));
    }
    let rules = Rules::new(quad);
    let linear = data.linear_form();
    // Every grid coordinate is an integer multiple of h/2, so |x|² in those
    // units is an exact integer key. For affine data the polar sums depend
    // on |x| alone and are shared by all points with the same key.
    let half_h = grid.spacing().to_f64().unwrap_or(f64::NAN) / 2.0;
    let key = |x: [f64; 3]| x.iter().map(|v| (v / half_h).round() as i64).map(|q| q * q).sum::<i64>();
    let point_sets: Vec<Vec<[f64; 3]>> = [Stagger::Face(0), Stagger::Face(1), Stagger::Face(2), Stagger::Cell]
        .iter()
        .map(|&st| grid.points(st).iter().map(|x| x.map(|v| v.to_f64().unwrap_or(f64::NAN))).collect())
        .collect();
    let table: Vec<(i64, [f64; 5])> = match linear {
        Some(_) => {
            let mut keys: Vec<i64> = point_sets.iter().flatten().map(|&x| key(x)).collect();
            keys.sort_unstable();
            keys.dedup();
            keys.par_iter().map(|&k| (k, rules.polar_sums(half_h * (k as f64).sqrt()))).collect()
        }
        None => Vec::new(),
    };
    let eval = |x: [f64; 3]| match &linear {
        Some(lf) => {
            let rho = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let xh = if rho > 0.0 { x.map(|v| v / rho) } else { [0.0, 0.0, 1.0] };
            let slot = table.binary_search_by_key(&key(x), |e| e.0).expect("key collected above");
            assemble_linear(lf, x, xh, table[slot].1)
        }
        None => rules.evaluate(data, None, x),
    };
    let faces: Vec<Vec<T>> = (0..3).map(|d| point_sets[d].par_iter().map(|&x| lit::<T>(eval(x).u[d])).collect()).collect();
    let centres: Vec<PointProfile> = point_sets[3].par_iter().map(|&x| eval(x)).collect();
    let cell = |f: &dyn Fn(&PointProfile) -> f64| ScalarField::from_raw(grid, centres.iter().map(|p| lit::<T>(f(p))).collect());
    let [f0, f1, f2]: [Vec<T>; 3] = faces.try_into().expect("three components");
    let out = HeatProfiles {
        u0: VectorField::from_raw(grid, [f0, f1, f2]),
        theta0: cell(&|p| p.theta),
        u0_center: [0, 1, 2].map(|i| cell(&|p| p.u[i])),
        grad_u0: [0, 1, 2].map(|i| [0, 1, 2].map(|j| cell(&|p| p.grad_u[i][j]))),
        grad_theta0: [0, 1, 2].map(|j| cell(&|p| p.grad_theta[j])),
        data: data.clone(),
        quad: *quad,
    };
    if !out.all_finite() {
        return Err(Error::NonFiniteIterate);
    }
    Ok(out)
}

/// Hex digest identifying `(data, grid, quadrature)` for the profile cache.
pub fn cache_key<T: Real>(data: &HomogeneousData<T>, grid: &Grid<T>, quad: &QuadratureConfig) -> String {
    let mut h = Sha256::new();
    h.update(data.fingerprint().as_bytes());
    h.update(format!("|R={:e}|n={}|{:?}|{}", grid.half_width(), grid.cells(), quad, std::any::type_name::<T>()).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// [`compute_profiles`] backed by an on-disk cache in `dir`.
pub fn compute_profiles_cached<T: Real>(
    data: &HomogeneousData<T>,
    grid: &Grid<T>,
    quad: &QuadratureConfig,
    dir: &Path,
) -> Result<HeatProfiles<T>> {
    let path = dir.join(format!("heat-{}.obbq", cache_key(data, grid, quad)));
    if let Ok(p) = crate::io::read_profiles(&path, data, quad) {
        if p.grid() == grid {
            return Ok(p);
        }
    }
    let p = compute_profiles(data, grid, quad)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::io::write_profiles(&path, &p)?;
    Ok(p)
}

impl<T: Real> HeatProfiles<T> {
    fn zero(grid: &Grid<T>, data: &HomogeneousData<T>, quad: &QuadratureConfig) -> Self {
        let z = || ScalarField::zeros(grid);
        HeatProfiles {
            u0: VectorField::zeros(grid),
            theta0: z(),
            u0_center: [z(), z(), z()],
            grad_u0: [[z(), z(), z()], [z(), z(), z()], [z(), z(), z()]],
            grad_theta0: [z(), z(), z()],
            data: data.clone(),
            quad: *quad,
        }
    }

    pub(crate) fn from_parts(
        u0: VectorField<T>,
        theta0: ScalarField<T>,
        u0_center: [ScalarField<T>; 3],
        grad_u0: [[ScalarField<T>; 3]; 3],
        grad_theta0: [ScalarField<T>; 3],
        data: HomogeneousData<T>,
        quad: QuadratureConfig,
    ) -> Self {
        HeatProfiles { u0, theta0, u0_center, grad_u0, grad_theta0, data, quad }
    }

    fn all_finite(&self) -> bool {
        let ok = |v: &[T]| v.iter().all(|x| x.is_finite());
        self.u0.components().iter().all(|c| ok(c))
            && ok(self.theta0.values())
            && self.u0_center.iter().all(|f| ok(f.values()))
            && self.grad_u0.iter().flatten().all(|f| ok(f.values()))
            && self.grad_theta0.iter().all(|f| ok(f.values()))
    }

    pub fn grid(&self) -> &Grid<T> {
        use crate::grid::Field;
        self.theta0.grid()
    }

    pub fn u0(&self) -> &VectorField<T> {
        &self.u0
    }

    pub fn theta0(&self) -> &ScalarField<T> {
        &self.theta0
    }

    /// `U₀` evaluated at cell centres.
    pub fn u0_center(&self) -> &[ScalarField<T>; 3] {
        &self.u0_center
    }

    /// `grad_u0()[i][j] = ∂_j U₀,i` at cell centres.
    pub fn grad_u0(&self) -> &[[ScalarField<T>; 3]; 3] {
        &self.grad_u0
    }

    pub fn grad_theta0(&self) -> &[ScalarField<T>; 3] {
        &self.grad_theta0
    }

    pub fn data(&self) -> &HomogeneousData<T> {
        &self.data
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    /// Discrete `L²` norms of `U₀ + x·∇U₀ + ΔU₀` and `Θ₀ + x·∇Θ₀ + ΔΘ₀` over
    /// points at least two cells inside the boundary.
    pub fn residual_profile_pde(&self, ops: &OperatorSet<T>) -> Result<(T, T)> {
        crate::grid::ensure_same(ops.grid(), self.grid())?;
        let mut su = T::zero();
        for d in 0..3 {
            su += profile_residual_sq(ops, Stagger::Face(d), self.u0.component(d));
        }
        let st = profile_residual_sq(ops, Stagger::Cell, self.theta0.values());
        let vol = self.grid().cell_volume();
        Ok(((vol * su).sqrt(), (vol * st).sqrt()))
    }

    /// `(C_val, C_grad)`: maxima over cell centres of `(1+|x|)(|U₀|+|Θ₀|)` and
    /// `(1+|x|)(|∇U₀|+|∇Θ₀|)`, with Frobenius norms for the gradients.
    pub fn decay_constants(&self) -> (T, T) {
        let pts = self.grid().points(Stagger::Cell);
        let (mut cv, mut cg) = (T::zero(), T::zero());
        for (n, x) in pts.iter().enumerate() {
            let w = T::one() + (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let u = self.u0_center.iter().map(|f| f.values()[n].powi(2)).sum::<T>().sqrt();
            let gu = self.grad_u0.iter().flatten().map(|f| f.values()[n].powi(2)).sum::<T>().sqrt();
            let gt = self.grad_theta0.iter().map(|f| f.values()[n].powi(2)).sum::<T>().sqrt();
            cv = cv.max(w * (u + self.theta0.values()[n].abs()));
            cg = cg.max(w * (gu + gt));
        }
        (cv, cg)
    }

    /// Discrete `L⁴` norms of `∇U₀` and `∇Θ₀` over the grid.
    pub fn gradient_l4_norms(&self) -> (T, T) {
        let vol = self.grid().cell_volume();
        let len = self.theta0.values().len();
        let (mut a, mut b) = (T::zero(), T::zero());
        for n in 0..len {
            let gu: T = self.grad_u0.iter().flatten().map(|f| f.values()[n].powi(2)).sum();
            let gt: T = self.grad_theta0.iter().map(|f| f.values()[n].powi(2)).sum();
            a += gu * gu;
            b += gt * gt;
        }
        ((vol * a).sqrt().sqrt(), (vol * b).sqrt().sqrt())
    }

    /// Max-norm of the discrete divergence of `U₀`.
    pub fn divergence_defect(&self, ops: &OperatorSet<T>) -> Result<T> {
        Ok(ops.divergence(&self.u0)?.max_abs())
    }
}

fn profile_residual_sq<T: Real>(ops: &OperatorSet<T>, s: Stagger, f: &[T]) -> T {
    residual_sq_with(ops, s, f, |_, _| Some(T::zero()))
}

/// Sum of `(f + x·∇f + Δf − e)²` over points at least two cells inside the
/// boundary, where `extra` yields `e` or skips the point with `None`.
pub(crate) fn residual_sq_with<T: Real>(ops: &OperatorSet<T>, s: Stagger, f: &[T], mut extra: impl FnMut(usize, [usize; 3]) -> Option<T>) -> T {
    let lap = ops.laplacian_array(s, f);
    let drift = ops.drift_array(s, f);
    let dims = ops.grid().dims(s);
    let mut sum = T::zero();
    for k in 2..dims[2].saturating_sub(2) {
        for j in 2..dims[1].saturating_sub(2) {
            for i in 2..dims[0].saturating_sub(2) {
                let n = index(dims, i, j, k);
                if let Some(e) = extra(n, [i, j, k]) {
                    sum += (f[n] + drift[n] + lap[n] - e).powi(2);
                }
            }
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_config_is_validated() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let few = QuadratureConfig { angular_nodes: 32, ..Default::default() };
        assert!(matches!(few.validate(), Err(Error::Config(_))));
        let short = QuadratureConfig { truncation: 5.0, ..Default::default() };
        assert!(matches!(short.validate(), Err(Error::QuadratureUnderflow { .. })));
    }

    #[test]
    fn gauss_radial_rule_agrees_with_closed_form() {
        let exact = QuadratureConfig::default();
        let gauss = QuadratureConfig { radial_rule: RadialRule::Gauss, radial_nodes: 64, ..Default::default() };
        let d = HomogeneousData::swirl(1.0f64);
        for x in [[0.3, -0.2, 0.1], [2.0, 1.0, -3.0], [9.0, 0.5, 0.0]] {
            let a = profile_at(&d, &exact, x).unwrap();
            let b = profile_at(&d, &gauss, x).unwrap();
            for i in 0..3 {
                assert!((a.u[i] - b.u[i]).abs() < 1e-10, "{x:?}: {a:?} {b:?}");
            }
        }
    }

    #[test]
    fn sampled_azimuth_agrees_with_exact_average() {
        let q = QuadratureConfig::default();
        let d = HomogeneousData::builtin(
            vec![crate::initial_data::VelocityMode::Swirl { strength: 1.0 }],
            vec![crate::initial_data::TemperatureMode::Harmonic { degree: 1, order: 1, strength: 0.8 }],
            1.3f64,
        )
        .unwrap();
        let rules = Rules::new(&q);
        let lf = d.linear_form().unwrap();
        for x in [[0.4, 0.1, -0.7], [3.0, -2.0, 1.0]] {
            let rho = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] as f64).sqrt();
            let xh = x.map(|v| v / rho);
            let a = rules.evaluate_linear(&lf, x, rho, xh);
            let b = rules.evaluate_sampled(&d, x, rho, xh);
            assert!((a.theta - b.theta).abs() < 1e-12);
            for i in 0..3 {
                assert!((a.u[i] - b.u[i]).abs() < 1e-12);
                assert!((a.grad_theta[i] - b.grad_theta[i]).abs() < 1e-12);
                for j in 0..3 {
                    assert!((a.grad_u[i][j] - b.grad_u[i][j]).abs() < 1e-12);
                }
            }
        }
    }
}
