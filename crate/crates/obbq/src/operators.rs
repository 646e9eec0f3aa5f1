//! Discrete operators on the staggered grid.
//!
//! Conventions shared by every stencil:
//! * values outside the array are never read; an operator is evaluated at
//!   points whose six neighbours exist and is zero on the outermost layer;
//! * the solver keeps its unknowns strictly inside that layer, so the layer
//!   acts as homogeneous Dirichlet ghost data;
//! * the Laplacian is literally `divergence ∘ gradient`.
//!
//! The drift `x·∇` and the transport terms default to skew-symmetric
//! splittings. With those, `Σ (x·∇Ψ)Ψ = −(3/2)ΣΨ²` and `Σ ((w·∇)f)·f = 0`
//! hold exactly on fields vanishing on the boundary layer, which makes the
//! discrete energy identities exact rather than `O(h²)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same, index, len, Field, Grid, ScalarField, Stagger, VectorField};
use crate::linalg::separable::{AxisFactor, SeparableSolver};
use crate::real::{cnt, lit, Real};

/// Discretisation of the drift `x·∇`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// `½(x·δ + δ·x) − 3/2`: centred, second order, exactly skew.
    #[default]
    Skew,
    /// Plain centred `xₐ δₐ`.
    Centered,
    /// First-order upwind, for coarse grids with large `R·h`.
    Upwind,
}

impl DriftScheme {
    /// Coefficients of `f(i−1), f(i), f(i+1)` for one axis at coordinate
    /// `x0` with neighbours `xm`, `xp`.
    #[inline]
    pub(crate) fn coeffs<T: Real>(self, xm: T, x0: T, xp: T, h: T) -> [T; 3] {
        match self {
            DriftScheme::Skew => {
                let q = lit::<T>(4.0) * h;
                [-(x0 + xm) / q, T::zero(), (x0 + xp) / q]
            }
            DriftScheme::Centered => {
                let q = h + h;
                [-x0 / q, T::zero(), x0 / q]
            }
            DriftScheme::Upwind => {
                if x0 > T::zero() {
                    [T::zero(), -x0 / h, x0 / h]
                } else if x0 < T::zero() {
                    [-x0 / h, x0 / h, T::zero()]
                } else {
                    [T::zero(); 3]
                }
            }
        }
    }

    /// Constant added to the diagonal once (not per axis).
    pub(crate) fn diagonal<T: Real>(self) -> T {
        match self {
            DriftScheme::Skew => lit(-1.5),
            _ => T::zero(),
        }
    }
}

/// `ρ_k(x) = ρ(k|x|)` with the cubic smoothstep ramp between 1/2 and 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffFamily {
    k: u32,
}

impl CutoffFamily {
    pub fn new(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("cutoff index must be at least 1".into()));
        }
        Ok(CutoffFamily { k })
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    /// Base profile `ρ(r)`.
    pub fn base<T: Real>(r: T) -> T {
        let t = ((r - lit(0.5)) / lit(0.5)).max(T::zero()).min(T::one());
        t * t * (lit::<T>(3.0) - lit::<T>(2.0) * t)
    }

    pub fn rho<T: Real>(&self, x: [T; 3]) -> T {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        Self::base(cnt::<T>(self.k as usize) * r)
    }
}

/// Index bookkeeping for the unknown block of a scalar or velocity array.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Block {
    pub full: [usize; 3],
    pub lo: [usize; 3],
    pub dims: [usize; 3],
}

impl Block {
    pub fn scalar(n: usize) -> Self {
        Block { full: [n; 3], lo: [1; 3], dims: [n - 2; 3] }
    }

    /// Faces of component `d` strictly between two active cells.
    pub fn velocity(n: usize, d: usize) -> Self {
        let mut full = [n; 3];
        full[d] += 1;
        let mut lo = [1; 3];
        lo[d] = 2;
        let mut dims = [n - 2; 3];
        dims[d] = n - 3;
        Block { full, lo, dims }
    }

    pub fn len(&self) -> usize {
        len(self.dims)
    }

    pub fn gather<V: Copy>(&self, full: &[V], out: &mut [V]) {
        let [d0, d1, d2] = self.dims;
        let mut q = 0;
        for k in 0..d2 {
            for j in 0..d1 {
                let base = index(self.full, self.lo[0], j + self.lo[1], k + self.lo[2]);
                out[q..q + d0].copy_from_slice(&full[base..base + d0]);
                q += d0;
            }
        }
    }

    /// Writes `compact` into the block of `full`; other entries untouched.
    pub fn scatter<V: Copy>(&self, compact: &[V], full: &mut [V]) {
        let [d0, d1, d2] = self.dims;
        let mut q = 0;
        for k in 0..d2 {
            for j in 0..d1 {
                let base = index(self.full, self.lo[0], j + self.lo[1], k + self.lo[2]);
                full[base..base + d0].copy_from_slice(&compact[q..q + d0]);
                q += d0;
            }
        }
    }

    /// Zeroes every entry outside the block.
    pub fn mask<T: Real>(&self, full: &mut [T]) {
        let [f0, f1, f2] = self.full;
        for k in 0..f2 {
            for j in 0..f1 {
                for i in 0..f0 {
                    let inside = [i, j, k].iter().enumerate().all(|(a, &v)| v >= self.lo[a] && v < self.lo[a] + self.dims[a]);
                    if !inside {
                        full[index(self.full, i, j, k)] = T::zero();
                    }
                }
            }
        }
    }
}

/// Stencils bound to one grid.
pub struct OperatorSet<T: Real> {
    grid: Grid<T>,
    drift: DriftScheme,
    poisson: OnceLock<SeparableSolver<T>>,
}

impl<T: Real> Clone for OperatorSet<T> {
    fn clone(&self) -> Self {
        OperatorSet::new(&self.grid, self.drift)
    }
}

impl<T: Real> std::fmt::Debug for OperatorSet<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorSet").field("grid", &self.grid).field("drift", &self.drift).finish()
    }
}

impl<T: Real> OperatorSet<T> {
    pub fn new(grid: &Grid<T>, drift: DriftScheme) -> Self {
        OperatorSet { grid: *grid, drift, poisson: OnceLock::new() }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn drift_scheme(&self) -> DriftScheme {
        self.drift
    }

    fn check<F: Field<T>>(&self, f: &F) -> Result<()> {
        ensure_same(&self.grid, f.grid())
    }

    /// Face gradient; boundary faces (index 0 and n) are zero.
    pub fn gradient(&self, s: &ScalarField<T>) -> Result<VectorField<T>> {
        self.check(s)?;
        Ok(VectorField::from_raw(&self.grid, [0, 1, 2].map(|d| self.gradient_component(s.values(), d))))
    }

    fn gradient_component(&self, s: &[T], d: usize) -> Vec<T> {
        let n = self.grid.cells();
        let h = self.grid.spacing();
        let fd = self.grid.dims(Stagger::Face(d));
        let cd = [n; 3];
        let stride = [1, n, n * n][d];
        let mut out = vec![T::zero(); len(fd)];
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let p = [i, j, k];
                    if p[d] == 0 || p[d] == n {
                        continue;
                    }
                    let c = index(cd, i, j, k);
                    out[index(fd, i, j, k)] = (s[c] - s[c - stride]) / h;
                }
            }
        }
        out
    }

    /// Cell divergence `Σ_d (v_d(+) − v_d(−))/h`, defined on every cell.
    pub fn divergence(&self, v: &VectorField<T>) -> Result<ScalarField<T>> {
        self.check(v)?;
        Ok(ScalarField::from_raw(&self.grid, self.divergence_raw(v.components())))
    }

    pub(crate) fn divergence_raw(&self, comps: &[Vec<T>; 3]) -> Vec<T> {
        let n = self.grid.cells();
        let h = self.grid.spacing();
        let mut out = vec![T::zero(); n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut acc = T::zero();
                    for d in 0..3 {
                        let fd = self.grid.dims(Stagger::Face(d));
                        let lo = index(fd, i, j, k);
                        let hi = lo + [1, fd[0], fd[0] * fd[1]][d];
                        acc += (comps[d][hi] - comps[d][lo]) / h;
                    }
                    out[index([n; 3], i, j, k)] = acc;
                }
            }
        }
        out
    }

    /// `divergence(gradient(s))` on interior cells, zero on the boundary layer.
    pub fn laplacian(&self, s: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(s)?;
        let g = [0, 1, 2].map(|d| self.gradient_component(s.values(), d));
        let mut out = self.divergence_raw(&g);
        Block::scalar(self.grid.cells()).mask(&mut out);
        Ok(ScalarField::from_raw(&self.grid, out))
    }

    /// Componentwise 7-point Laplacian on interior face points.
    pub fn laplacian_vector(&self, v: &VectorField<T>) -> Result<VectorField<T>> {
        self.check(v)?;
        Ok(VectorField::from_raw(&self.grid, [0, 1, 2].map(|d| self.laplacian_array(Stagger::Face(d), v.component(d)))))
    }

    pub(crate) fn laplacian_array(&self, s: Stagger, f: &[T]) -> Vec<T> {
        let h = self.grid.spacing();
        let dims = self.grid.dims(s);
        let strides = [1, dims[0], dims[0] * dims[1]];
        let mut out = vec![T::zero(); len(dims)];
        for_interior(dims, |_, q| {
            let mut acc = T::zero();
            for st in strides {
                acc += ((f[q + st] - f[q]) / h - (f[q] - f[q - st]) / h) / h;
            }
            out[q] = acc;
        });
        out
    }

    /// `x·∇f` at interior points of a scalar field.
    pub fn drift(&self, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(f)?;
        Ok(ScalarField::from_raw(&self.grid, self.drift_array(Stagger::Cell, f.values())))
    }

    pub fn drift_vector(&self, v: &VectorField<T>) -> Result<VectorField<T>> {
        self.check(v)?;
        Ok(VectorField::from_raw(&self.grid, [0, 1, 2].map(|d| self.drift_array(Stagger::Face(d), v.component(d)))))
    }

    pub(crate) fn drift_array(&self, s: Stagger, f: &[T]) -> Vec<T> {
        let h = self.grid.spacing();
        let dims = self.grid.dims(s);
        let strides = [1, dims[0], dims[0] * dims[1]];
        let coords: [Vec<T>; 3] = [0, 1, 2].map(|a| (0..dims[a]).map(|i| self.grid.coord(s, a, i)).collect());
        let diag = self.drift.diagonal::<T>();
        let mut out = vec![T::zero(); len(dims)];
        for_interior(dims, |p, q| {
            let mut acc = diag * f[q];
            for a in 0..3 {
                let x = &coords[a];
                let i = p[a];
                let c = self.drift.coeffs(x[i - 1], x[i], x[i + 1], h);
                let st = strides[a];
                acc += c[0] * f[q - st] + c[1] * f[q] + c[2] * f[q + st];
            }
            out[q] = acc;
        });
        out
    }

    /// Convective `(w·∇)f` for a cell scalar, face velocities averaged.
    pub fn advect(&self, w: &VectorField<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(w)?;
        self.check(f)?;
        Ok(ScalarField::from_raw(&self.grid, self.scalar_transport(w.components(), f.values(), Form::Advective)))
    }

    /// Convective `(w·∇)v` for a face vector field.
    pub fn advect_vector(&self, w: &VectorField<T>, v: &VectorField<T>) -> Result<VectorField<T>> {
        self.check(w)?;
        self.check(v)?;
        Ok(VectorField::from_raw(&self.grid, [0, 1, 2].map(|d| self.vector_transport(w.components(), d, v.component(d), Form::Advective))))
    }

    /// Skew form of `(w·∇)f`: `Σₐ (w₊f₊ − w₋f₋)/(2h)`. Equals the
    /// convective and the conservative form whenever `divergence(w) = 0`.
    pub fn transport(&self, w: &VectorField<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(w)?;
        self.check(f)?;
        Ok(ScalarField::from_raw(&self.grid, self.scalar_transport(w.components(), f.values(), Form::Skew)))
    }

    pub fn transport_vector(&self, w: &VectorField<T>, v: &VectorField<T>) -> Result<VectorField<T>> {
        self.check(w)?;
        self.check(v)?;
        Ok(VectorField::from_raw(&self.grid, [0, 1, 2].map(|d| self.vector_transport(w.components(), d, v.component(d), Form::Skew))))
    }

    /// Conservative `∇·(s v)` with face values of `s` averaged from the two
    /// adjacent cells (a missing neighbour counts as zero).
    pub fn div_product(&self, s: &ScalarField<T>, v: &VectorField<T>) -> Result<ScalarField<T>> {
        self.check(s)?;
        self.check(v)?;
        let n = self.grid.cells();
        let half = lit::<T>(0.5);
        let flux = [0, 1, 2].map(|d| {
            let fd = self.grid.dims(Stagger::Face(d));
            let stride = [1, n, n * n][d];
            let mut out = vec![T::zero(); len(fd)];
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let p = [i, j, k];
                        let lo = if p[d] > 0 { s.values()[index([n; 3], i, j, k) - stride] } else { T::zero() };
                        let hi = if p[d] < n { s.values()[index([n; 3], i, j, k)] } else { T::zero() };
                        let q = index(fd, i, j, k);
                        out[q] = v.component(d)[q] * half * (lo + hi);
                    }
                }
            }
            out
        });
        Ok(ScalarField::from_raw(&self.grid, self.divergence_raw(&flux)))
    }

    pub(crate) fn scalar_transport(&self, w: &[Vec<T>; 3], f: &[T], form: Form) -> Vec<T> {
        let n = self.grid.cells();
        let h = self.grid.spacing();
        let dims = [n; 3];
        let strides = [1, n, n * n];
        let mut out = vec![T::zero(); len(dims)];
        for_interior(dims, |p, q| {
            let mut acc = T::zero();
            for a in 0..3 {
                let fd = self.grid.dims(Stagger::Face(a));
                let lo = index(fd, p[0], p[1], p[2]);
                let hi = lo + [1, fd[0], fd[0] * fd[1]][a];
                let st = strides[a];
                acc += form.combine(w[a][hi], w[a][lo], f[q + st], f[q], f[q - st], h);
            }
            out[q] = acc;
        });
        out
    }

    /// Transport of face component `d` by the face field `w`, with
    /// transport velocities averaged onto the links.
    pub(crate) fn vector_transport(&self, w: &[Vec<T>; 3], d: usize, f: &[T], form: Form) -> Vec<T> {
        let h = self.grid.spacing();
        let dims = self.grid.dims(Stagger::Face(d));
        let strides = [1, dims[0], dims[0] * dims[1]];
        let half = lit::<T>(0.5);
        let mut out = vec![T::zero(); len(dims)];
        for_interior(dims, |p, q| {
            let mut acc = T::zero();
            for a in 0..3 {
                let st = strides[a];
                let (wp, wm) = if a == d {
                    (half * (w[d][q] + w[d][q + st]), half * (w[d][q - st] + w[d][q]))
                } else {
                    let wd = self.grid.dims(Stagger::Face(a));
                    let at = |shift_d: usize, ia: usize| {
                        let mut r = p;
                        r[d] = p[d] - shift_d;
                        r[a] = ia;
                        w[a][index(wd, r[0], r[1], r[2])]
                    };
                    (half * (at(1, p[a] + 1) + at(0, p[a] + 1)), half * (at(1, p[a]) + at(0, p[a])))
                };
                acc += form.combine(wp, wm, f[q + st], f[q], f[q - st], h);
            }
            out[q] = acc;
        });
        out
    }

    /// `(Ψ+Θ₀)·ρ_k(x)·(−x/|x|³)` at face points; exactly zero where
    /// `ρ_k = 0`. The temperature is averaged from the adjacent cells.
    pub fn gravity_force(&self, psi: &ScalarField<T>, theta0: &ScalarField<T>, cutoff: &CutoffFamily) -> Result<VectorField<T>> {
        self.check(psi)?;
        self.check(theta0)?;
        let total: Vec<T> = psi.values().iter().zip(theta0.values()).map(|(&a, &b)| a + b).collect();
        Ok(VectorField::from_raw(&self.grid, [0, 1, 2].map(|d| self.gravity_component(&total, d, Some(cutoff)))))
    }

    /// Face component `d` of `θ·ρ_k·∇|x|⁻¹`, or the uncut field when
    /// `cutoff` is `None`.
    pub(crate) fn gravity_component(&self, theta: &[T], d: usize, cutoff: Option<&CutoffFamily>) -> Vec<T> {
        let n = self.grid.cells();
        let fd = self.grid.dims(Stagger::Face(d));
        let half = lit::<T>(0.5);
        let mut out = vec![T::zero(); len(fd)];
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let p = [i, j, k];
                    let x = self.grid.point(Stagger::Face(d), p);
                    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                    let rho = match cutoff {
                        Some(c) => c.rho(x),
                        None => T::one(),
                    };
                    if rho == T::zero() || r2 == T::zero() {
                        continue;
                    }
                    let cell = |q: [usize; 3]| theta[index([n; 3], q[0], q[1], q[2])];
                    let th = if p[d] == 0 {
                        cell(p)
                    } else if p[d] == n {
                        let mut q = p;
                        q[d] = n - 1;
                        cell(q)
                    } else {
                        let mut q = p;
                        q[d] -= 1;
                        half * (cell(p) + cell(q))
                    };
                    out[index(fd, i, j, k)] = th * rho * (-x[d] / (r2 * r2.sqrt()));
                }
            }
        }
        out
    }

    /// Discrete Leray projection with homogeneous Dirichlet velocity context.
    ///
    /// The input is first restricted to the faces strictly inside the
    /// unknown block; then `q` solves the Neumann problem
    /// `divergence(gradient q) = divergence(v)` on the active cells with zero
    /// mean, and only block-interior faces are corrected.
    pub fn leray_project(&self, v: &VectorField<T>) -> Result<(VectorField<T>, ScalarField<T>)> {
        self.check(v)?;
        let n = self.grid.cells();
        let mut comps = v.components().clone();
        for d in 0..3 {
            Block::velocity(n, d).mask(&mut comps[d]);
        }
        let div = self.divergence_raw(&comps);
        let q = self.neumann_solve(&div)?;
        for d in 0..3 {
            let g = self.gradient_component(&q, d);
            let b = Block::velocity(n, d);
            let mut gm = g;
            b.mask(&mut gm);
            for (c, gv) in comps[d].iter_mut().zip(&gm) {
                *c -= *gv;
            }
        }
        Ok((VectorField::from_raw(&self.grid, comps), ScalarField::from_raw(&self.grid, q)))
    }

    /// Solves the Neumann Poisson problem on the active cells for a
    /// full-grid right-hand side; returns a full-grid field with a zero
    /// boundary layer and zero mean over the active block.
    pub(crate) fn neumann_solve(&self, rhs_full: &[T]) -> Result<Vec<T>> {
        let n = self.grid.cells();
        let block = Block::scalar(n);
        let mut rhs = vec![T::zero(); block.len()];
        block.gather(rhs_full, &mut rhs);
        // Solve (−L) q = −rhs with the positive semidefinite −L.
        rhs.iter_mut().for_each(|v| *v = -*v);
        let mut sol = vec![T::zero(); block.len()];
        self.poisson().solve(&rhs, &mut sol);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::PoissonDivergence("non-finite pressure".into()));
        }
        let mut out = vec![T::zero(); n * n * n];
        block.scatter(&sol, &mut out);
        Ok(out)
    }

    fn poisson(&self) -> &SeparableSolver<T> {
        self.poisson.get_or_init(|| {
            let m = self.grid.cells() - 2;
            let h = self.grid.spacing().to_f64().unwrap_or(f64::NAN);
            let factor = neumann_factor(m, h);
            let first = (2.0 - 2.0 * (std::f64::consts::PI / m as f64).cos()) / (h * h);
            SeparableSolver::new([&factor, &factor, &factor], 0.0, Some(1e-6 * first))
        })
    }

    /// `‖f/|x|‖₂ / ‖∇f‖₂` for a field vanishing on the boundary layer.
    pub fn hardy_ratio(&self, f: &ScalarField<T>) -> Result<T> {
        self.check(f)?;
        let n = self.grid.cells();
        let mut outside = f.values().to_vec();
        let block = Block::scalar(n);
        let mut inner = vec![T::zero(); block.len()];
        block.gather(&outside, &mut inner);
        block.scatter(&vec![T::zero(); block.len()], &mut outside);
        if outside.iter().any(|&v| v != T::zero()) {
            return Err(Error::InvalidInput("hardy_ratio needs a field vanishing on the boundary cells".into()));
        }
        let grad = crate::grid::h1_seminorm(f);
        if grad == T::zero() {
            return Err(Error::ZeroGradient);
        }
        // f² is taken cellwise constant and 1/|x|² is integrated exactly over
        // each cell; the plain midpoint rule loses O(h) next to the origin.
        let w = inverse_square_weights(n / 2);
        let half = n / 2;
        let fold = |i: usize| if i < half { half - 1 - i } else { i - half };
        let mut sum = 0.0;
        let vals = f.values();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let v = vals[index([n, n, n], i, j, k)].to_f64().unwrap_or(f64::NAN);
                    sum += v * v * w[(fold(k) * half + fold(j)) * half + fold(i)];
                }
            }
        }
        let h = self.grid.spacing().to_f64().unwrap_or(f64::NAN);
        Ok(lit::<T>((h * sum).sqrt()) / grad)
    }
}

/// `∫ |x|⁻² dx` over the unit cells of one octant, indexed by the cell
/// offset from the origin. The integral over a cell of width `h` is `h`
/// times this value.
fn inverse_square_weights(m: usize) -> Vec<f64> {
    const NEAR: usize = 4;
    const SUB: usize = 8;
    let (xg, wg) = crate::quadrature::gauss_legendre_on(3, -0.5, 0.5);
    let rule = |c: [f64; 3], width: f64| {
        let mut s = 0.0;
        for (x, wx) in xg.iter().zip(&wg) {
            for (y, wy) in xg.iter().zip(&wg) {
                for (z, wz) in xg.iter().zip(&wg) {
                    let p = [c[0] + width * x, c[1] + width * y, c[2] + width * z];
                    s += wx * wy * wz / (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                }
            }
        }
        s * width.powi(3)
    };
    let mut out = vec![0.0; m * m * m];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let centre = [c as f64 + 0.5, b as f64 + 0.5, a as f64 + 0.5];
                out[(a * m + b) * m + c] = if a.max(b).max(c) < NEAR {
                    let w = 1.0 / SUB as f64;
                    let mut s = 0.0;
                    for p in 0..SUB * SUB * SUB {
                        let off = [p % SUB, (p / SUB) % SUB, p / (SUB * SUB)].map(|q| (q as f64 + 0.5) * w - 0.5);
                        s += rule([centre[0] + off[0], centre[1] + off[1], centre[2] + off[2]], w);
                    }
                    s
                } else {
                    rule(centre, 1.0)
                };
            }
        }
    }
    out
}

/// 1-D Neumann `−δ²` on `m` cells: cosine eigenvectors, exact spectrum.
pub(crate) fn neumann_factor(m: usize, h: f64) -> AxisFactor {
    let mut vecs = vec![0.0; m * m];
    let mut vals = vec![0.0; m];
    let pi = std::f64::consts::PI;
    for k in 0..m {
        let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
        for j in 0..m {
            vecs[k * m + j] = scale * (pi * k as f64 * (j as f64 + 0.5) / m as f64).cos();
        }
        vals[k] = (2.0 - 2.0 * (pi * k as f64 / m as f64).cos()) / (h * h);
    }
    AxisFactor::from_orthogonal(m, &vecs, &vals)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Form {
    Skew,
    Advective,
}

impl Form {
    #[inline]
    fn combine<T: Real>(self, wp: T, wm: T, fp: T, f0: T, fm: T, h: T) -> T {
        let two_h = h + h;
        match self {
            Form::Skew => (wp * fp - wm * fm) / two_h,
            Form::Advective => (wp * (fp - f0) + wm * (f0 - fm)) / two_h,
        }
    }
}

/// Calls `f(index triple, linear index)` for every point whose six
/// neighbours exist.
#[inline]
pub(crate) fn for_interior(dims: [usize; 3], mut f: impl FnMut([usize; 3], usize)) {
    if dims.iter().any(|&d| d < 3) {
        return;
    }
    for k in 1..dims[2] - 1 {
        for j in 1..dims[1] - 1 {
            let row = index(dims, 0, j, k);
            for i in 1..dims[0] - 1 {
                f([i, j, k], row + i);
            }
        }
    }
}
