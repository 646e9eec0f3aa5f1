//! Homogeneous degree −1 initial data described by values on the unit sphere.
//!
//! Every family is evaluated through the single rule
//! `u₀(x) = a·σ_u(x/|x|)/|x|`, `θ₀(x) = a·σ_θ(x/|x|)/|x|`, so homogeneity is
//! structural rather than something to be checked after the fact.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::grid::{Grid, Stagger};
use crate::real::{cnt, lit, Real};

/// Builtin velocity sphere maps.
#[derive(Clone, Debug, PartialEq)]
pub enum VelocityMode<T> {
    /// `a·(−ω₂, ω₁, 0)`, i.e. `a·(−x₂, x₁, 0)/|x|²`. Divergence free.
    Swirl { strength: T },
    /// `a·ω`, i.e. `a·x/|x|²`. Not divergence free; kept as a negative
    /// control for the divergence check.
    Source { strength: T },
}

/// Builtin temperature sphere maps.
#[derive(Clone, Debug, PartialEq)]
pub enum TemperatureMode<T> {
    /// `b`, i.e. `θ₀ = b/|x|`.
    Radial { strength: T },
    /// Real orthonormal spherical harmonic `Y_ℓm`.
    Harmonic { degree: usize, order: i32, strength: T },
}

/// Lat-long table of `(σ_u, σ_θ)` with bilinear interpolation, periodic in
/// azimuth.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereTable<T> {
    polar: Vec<T>,
    azimuth: Vec<T>,
    values: Vec<[T; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family<T> {
    Builtin { velocity: Vec<VelocityMode<T>>, temperature: Vec<TemperatureMode<T>> },
    Tabulated(SphereTable<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousData<T> {
    family: Family<T>,
    amplitude: T,
}

impl<T: Real> HomogeneousData<T> {
    pub fn new(family: Family<T>, amplitude: T) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::InvalidInput("amplitude must be finite".into()));
        }
        if let Family::Builtin { temperature, .. } = &family {
            for t in temperature {
                if let TemperatureMode::Harmonic { degree, order, .. } = t {
                    if order.unsigned_abs() as usize > *degree {
                        return Err(Error::InvalidInput(format!("|order| {order} exceeds degree {degree}")));
                    }
                }
            }
        }
        Ok(HomogeneousData { family, amplitude })
    }

    pub fn builtin(velocity: Vec<VelocityMode<T>>, temperature: Vec<TemperatureMode<T>>, amplitude: T) -> Result<Self> {
        Self::new(Family::Builtin { velocity, temperature }, amplitude)
    }

    pub fn zero() -> Self {
        HomogeneousData { family: Family::Builtin { velocity: vec![], temperature: vec![] }, amplitude: T::zero() }
    }

    pub fn swirl(a: T) -> Self {
        HomogeneousData { family: Family::Builtin { velocity: vec![VelocityMode::Swirl { strength: T::one() }], temperature: vec![] }, amplitude: a }
    }

    pub fn radial_temperature(b: T) -> Self {
        HomogeneousData { family: Family::Builtin { velocity: vec![], temperature: vec![TemperatureMode::Radial { strength: T::one() }] }, amplitude: b }
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn with_amplitude(&self, amplitude: T) -> Self {
        HomogeneousData { family: self.family.clone(), amplitude }
    }

    /// True when the velocity part vanishes identically.
    pub fn has_velocity(&self) -> bool {
        self.amplitude != T::zero()
            && match &self.family {
                Family::Builtin { velocity, .. } => !velocity.is_empty(),
                Family::Tabulated(t) => t.values.iter().any(|v| v[0] != T::zero() || v[1] != T::zero() || v[2] != T::zero()),
            }
    }

    /// Stable textual identity used for cache keys.
    pub fn fingerprint(&self) -> String {
        format!("{:?}", self)
    }

    /// Unscaled sphere values `(σ_u(ω), σ_θ(ω))` for a unit vector `ω`.
    pub fn sphere(&self, w: [T; 3]) -> ([T; 3], T) {
        match &self.family {
            Family::Builtin { velocity, temperature } => {
                let mut u = [T::zero(); 3];
                for mode in velocity {
                    match *mode {
                        VelocityMode::Swirl { strength } => {
                            u[0] -= strength * w[1];
                            u[1] += strength * w[0];
                        }
                        VelocityMode::Source { strength } => {
                            for d in 0..3 {
                                u[d] += strength * w[d];
                            }
                        }
                    }
                }
                let mut th = T::zero();
                for mode in temperature {
                    th += match *mode {
                        TemperatureMode::Radial { strength } => strength,
                        TemperatureMode::Harmonic { degree, order, strength } => strength * real_harmonic(degree, order, w),
                    };
                }
                (u, th)
            }
            Family::Tabulated(table) => table.lookup(w),
        }
    }

    /// Sphere maps that are affine in `ω`, returned as `(M, b₀, β)` with
    /// `σ_u = Mω` and `σ_θ = b₀ + β·ω`, amplitude included. `None` for
    /// tabulated data and harmonics of degree two or more.
    pub(crate) fn linear_form(&self) -> Option<LinearForm> {
        let Family::Builtin { velocity, temperature } = &self.family else {
            return None;
        };
        let a = self.amplitude.to_f64()?;
        let mut m = [[0.0; 3]; 3];
        for mode in velocity {
            match *mode {
                VelocityMode::Swirl { strength } => {
                    let s = a * strength.to_f64()?;
                    m[0][1] -= s;
                    m[1][0] += s;
                }
                VelocityMode::Source { strength } => {
                    let s = a * strength.to_f64()?;
                    for (d, row) in m.iter_mut().enumerate() {
                        row[d] += s;
                    }
                }
            }
        }
        let (mut b0, mut beta) = (0.0, [0.0; 3]);
        let pi = std::f64::consts::PI;
        for mode in temperature {
            match *mode {
                TemperatureMode::Radial { strength } => b0 += a * strength.to_f64()?,
                TemperatureMode::Harmonic { degree: 0, strength, .. } => b0 += a * strength.to_f64()? * 0.5 / pi.sqrt(),
                TemperatureMode::Harmonic { degree: 1, order, strength } => {
                    // Y₁₁ ∝ x, Y₁₋₁ ∝ y, Y₁₀ ∝ z.
                    let axis = match order {
                        1 => 0,
                        -1 => 1,
                        _ => 2,
                    };
                    beta[axis] += a * strength.to_f64()? * (3.0 / (4.0 * pi)).sqrt();
                }
                TemperatureMode::Harmonic { .. } => return None,
            }
        }
        Some(LinearForm { m, b0, beta })
    }

    /// `(u₀(x), θ₀(x))`.
    pub fn evaluate(&self, x: [T; 3]) -> Result<([T; 3], T)> {
        let r = norm3(x);
        if r == T::zero() {
            return Err(Error::OriginEvaluation);
        }
        let w = [x[0] / r, x[1] / r, x[2] / r];
        let (u, th) = self.sphere(w);
        let c = self.amplitude / r;
        Ok(([c * u[0], c * u[1], c * u[2]], c * th))
    }

    /// Largest `|σ_u| + |σ_θ|` over a dense sample of the sphere, times the
    /// amplitude.
    pub fn sphere_sup(&self) -> T {
        let (np, na) = (64, 128);
        let mut best = T::zero();
        for i in 0..=np {
            let th = T::PI() * cnt(i) / cnt(np);
            for j in 0..na {
                let ph = lit::<T>(2.0) * T::PI() * cnt(j) / cnt(na);
                let w = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                let (u, t) = self.sphere(w);
                best = best.max(norm3(u) + t.abs());
            }
        }
        best * self.amplitude.abs()
    }

    /// Largest relative defect of `λ·f(λx) = f(x)` over random points and
    /// `λ ∈ {2, 1/2}`.
    pub fn check_homogeneity(&self, sample_count: usize) -> Result<T> {
        if sample_count == 0 {
            return Err(Error::InvalidInput("sample_count must be at least 1".into()));
        }
        let mut rng = StdRng::seed_from_u64(0x0bb9);
        let mut worst = T::zero();
        for _ in 0..sample_count {
            let x = loop {
                let p: [T; 3] = [0, 1, 2].map(|_| lit(rng.gen_range(-10.0..10.0)));
                if norm3(p) > lit(1e-3) {
                    break p;
                }
            };
            let (u, th) = self.evaluate(x)?;
            let scale = norm3(u) + th.abs();
            for lam in [lit::<T>(2.0), lit(0.5)] {
                let (ul, tl) = self.evaluate(x.map(|v| lam * v))?;
                let diff = norm3([lam * ul[0] - u[0], lam * ul[1] - u[1], lam * ul[2] - u[2]]) + (lam * tl - th).abs();
                let rel = if scale > T::zero() { diff / scale } else { diff };
                worst = worst.max(rel);
            }
        }
        Ok(worst)
    }

    /// Weak divergence residual `max_φ |h³ Σ u₀·∇φ| / ‖φ‖_{H¹}` over a fixed
    /// family of smooth bumps. Cell centres never coincide with the origin
    /// (the cell count is even), so no cell has to be dropped.
    pub fn divergence_residual(&self, grid: &Grid<T>) -> T {
        if !self.has_velocity() {
            return T::zero();
        }
        let big_r = grid.half_width();
        let radius = big_r / lit(2.0);
        let off = big_r / lit(4.0);
        let mut centres = vec![[T::zero(); 3]];
        for d in 0..3 {
            for s in [T::one(), -T::one()] {
                let mut c = [T::zero(); 3];
                c[d] = s * off;
                centres.push(c);
            }
        }
        let diag = off / lit::<T>(3.0).sqrt();
        for s in 0..8 {
            centres.push([0, 1, 2].map(|d| if (s >> d) & 1 == 1 { diag } else { -diag }));
        }
        let points = grid.points(Stagger::Cell);
        let vol = grid.cell_volume();
        let mut worst = T::zero();
        for c in centres {
            let (mut pair, mut norm2) = (T::zero(), T::zero());
            for x in &points {
                let y = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
                let s = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) / (radius * radius);
                if s >= T::one() {
                    continue;
                }
                let one_minus = T::one() - s;
                let phi = one_minus.powi(4);
                let g = -lit::<T>(8.0) * one_minus.powi(3) / (radius * radius);
                let grad = [g * y[0], g * y[1], g * y[2]];
                norm2 += phi * phi + grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
                if let Ok((u, _)) = self.evaluate(*x) {
                    pair += u[0] * grad[0] + u[1] * grad[1] + u[2] * grad[2];
                }
            }
            let denom = (vol * norm2).sqrt();
            if denom > T::zero() {
                worst = worst.max((vol * pair).abs() / denom);
            }
        }
        worst
    }

    /// Divergence residual, failing above `10·h²`.
    pub fn check_divergence(&self, grid: &Grid<T>) -> Result<T> {
        let residual = self.divergence_residual(grid);
        let h = grid.spacing();
        let tolerance = lit::<T>(10.0) * h * h;
        if residual > tolerance {
            return Err(Error::NotDivergenceFree {
                residual: residual.to_f64().unwrap_or(f64::NAN),
                tolerance: tolerance.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(residual)
    }

    /// Loads a tabulated family from CSV with columns
    /// `polar, azimuth, σ_u1, σ_u2, σ_u3, σ_θ` (radians, polar-major rows).
    pub fn from_csv(path: &Path, amplitude: T) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.len() != 6 {
                return Err(Error::Format(format!("{}: expected 6 columns, found {}", path.display(), rec.len())));
            }
            let mut row = [T::zero(); 6];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                let v: f64 = field.parse().map_err(|_| Error::Format(format!("{}: cannot parse {field:?}", path.display())))?;
                *slot = lit(v);
            }
            rows.push(row);
        }
        Self::new(Family::Tabulated(SphereTable::from_rows(&rows)?), amplitude)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other:?}", path.display())),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

impl<T: Real> SphereTable<T> {
    /// Builds a table from `(polar, azimuth, σ_u1, σ_u2, σ_u3, σ_θ)` rows
    /// laid out polar-major on a full lat-long product grid.
    pub fn from_rows(rows: &[[T; 6]]) -> Result<Self> {
        let mut polar: Vec<T> = Vec::new();
        let mut azimuth: Vec<T> = Vec::new();
        for r in rows {
            if polar.last() != Some(&r[0]) {
                polar.push(r[0]);
            }
            if polar.len() == 1 {
                azimuth.push(r[1]);
            }
        }
        let (np, na) = (polar.len(), azimuth.len());
        if np < 2 || na < 2 || np * na != rows.len() {
            return Err(Error::Format("sphere table is not a full lat-long grid with at least 2x2 nodes".into()));
        }
        let increasing = |v: &[T]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&polar) || !increasing(&azimuth) {
            return Err(Error::Format("sphere table angles must be strictly increasing".into()));
        }
        let two_pi = lit::<T>(2.0) * T::PI();
        if azimuth[0] < T::zero() || azimuth[na - 1] >= two_pi || polar[0] < T::zero() || polar[np - 1] > T::PI() {
            return Err(Error::Format("sphere table angles out of range".into()));
        }
        let mut values = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r[0] != polar[i / na] || r[1] != azimuth[i % na] {
                return Err(Error::Format(format!("sphere table row {i} breaks the polar-major layout")));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("sphere table row {i} is not finite")));
            }
            values.push([r[2], r[3], r[4], r[5]]);
        }
        Ok(SphereTable { polar, azimuth, values })
    }

    fn lookup(&self, w: [T; 3]) -> ([T; 3], T) {
        let th = w[2].max(-T::one()).min(T::one()).acos();
        let two_pi = lit::<T>(2.0) * T::PI();
        let mut ph = w[1].atan2(w[0]);
        if ph < T::zero() {
            ph += two_pi;
        }
        let np = self.polar.len();
        let na = self.azimuth.len();
        let th = th.max(self.polar[0]).min(self.polar[np - 1]);
        let i = self.polar.partition_point(|&p| p <= th).clamp(1, np - 1) - 1;
        let ti = (th - self.polar[i]) / (self.polar[i + 1] - self.polar[i]);
        // Azimuth interval with wrap-around past the last node.
        let j = self.azimuth.partition_point(|&a| a <= ph);
        let (j0, j1, tj) = if j == 0 || j == na {
            let lo = self.azimuth[na - 1];
            let hi = self.azimuth[0] + two_pi;
            let p = if ph < self.azimuth[0] { ph + two_pi } else { ph };
            (na - 1, 0, (p - lo) / (hi - lo))
        } else {
            (j - 1, j, (ph - self.azimuth[j - 1]) / (self.azimuth[j] - self.azimuth[j - 1]))
        };
        let v = |a: usize, b: usize| self.values[a * na + b];
        let (a, b, c, d) = (v(i, j0), v(i, j1), v(i + 1, j0), v(i + 1, j1));
        let mut out = [T::zero(); 4];
        for k in 0..4 {
            out[k] = (T::one() - ti) * ((T::one() - tj) * a[k] + tj * b[k]) + ti * ((T::one() - tj) * c[k] + tj * d[k]);
        }
        ([out[0], out[1], out[2]], out[3])
    }
}

/// Affine sphere maps: `σ_u = Mω`, `σ_θ = b₀ + β·ω`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearForm {
    pub m: [[f64; 3]; 3],
    pub b0: f64,
    pub beta: [f64; 3],
}

pub(crate) fn norm3<T: Real>(x: [T; 3]) -> T {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Orthonormal real spherical harmonic `Y_ℓm(ω)` without Condon–Shortley
/// phase; negative orders use `sin(|m|φ)`.
pub fn real_harmonic<T: Real>(l: usize, m: i32, w: [T; 3]) -> T {
    let am = m.unsigned_abs() as usize;
    let x = w[2].max(-T::one()).min(T::one());
    let s = (T::one() - x * x).max(T::zero()).sqrt();
    // P_m^m, then upward recurrence in degree.
    let mut pmm = T::one();
    for k in 0..am {
        pmm = pmm * cnt::<T>(2 * k + 1) * s;
    }
    let p = if l == am {
        pmm
    } else {
        let mut p0 = pmm;
        let mut p1 = x * cnt::<T>(2 * am + 1) * pmm;
        for ll in am + 2..=l {
            let p2 = (cnt::<T>(2 * ll - 1) * x * p1 - cnt::<T>(ll + am - 1) * p0) / cnt::<T>(ll - am);
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    let mut ratio = T::one();
    for k in (l - am + 1)..=(l + am) {
        ratio /= cnt(k);
    }
    let norm = (cnt::<T>(2 * l + 1) / (lit::<T>(4.0) * T::PI()) * ratio).sqrt();
    if m == 0 {
        return norm * p;
    }
    let phi = w[1].atan2(w[0]);
    let angular = if m > 0 { (cnt::<T>(am) * phi).cos() } else { (cnt::<T>(am) * phi).sin() };
    lit::<T>(2.0).sqrt() * norm * p * angular
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        let s = HomogeneousData::swirl(1.0f64);
        let (u, th) = s.evaluate([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(u, [0.0, 1.0, 0.0]);
        assert_eq!(th, 0.0);
        let r = HomogeneousData::radial_temperature(1.0f64);
        assert_eq!(r.evaluate([0.0, 0.0, 2.0]).unwrap().1, 0.5);
        assert!(matches!(r.evaluate([0.0; 3]), Err(Error::OriginEvaluation)));
    }

    #[test]
    fn values_scale_by_inverse_distance() {
        let d = HomogeneousData::builtin(
            vec![VelocityMode::Swirl { strength: 0.7 }],
            vec![TemperatureMode::Harmonic { degree: 3, order: -2, strength: 1.3 }],
            1.0f64,
        )
        .unwrap();
        let x = [0.3, -1.1, 0.4];
        let (u1, t1) = d.evaluate(x).unwrap();
        let (u3, t3) = d.evaluate(x.map(|v| 3.0 * v)).unwrap();
        for k in 0..3 {
            assert!((3.0 * u3[k] - u1[k]).abs() <= 1e-15 * u1[k].abs().max(1.0));
        }
        assert!((3.0 * t3 - t1).abs() <= 1e-15);
    }

    #[test]
    fn homogeneity_is_structural() {
        assert!(HomogeneousData::swirl(1.0f64).check_homogeneity(200).unwrap() <= 1e-14);
        assert_eq!(HomogeneousData::swirl(0.0f64).check_homogeneity(10).unwrap(), 0.0);
        assert!(HomogeneousData::<f64>::zero().check_homogeneity(0).is_err());
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let (nt, np) = (80, 160);
        let (x, w) = crate::quadrature::gauss_legendre(nt);
        let ip = |a: (usize, i32), b: (usize, i32)| {
            let mut s = 0.0;
            for (ct, wt) in x.iter().zip(&w) {
                let st = (1.0f64 - ct * ct).sqrt();
                for j in 0..np {
                    let ph = 2.0 * std::f64::consts::PI * j as f64 / np as f64;
                    let om = [st * ph.cos(), st * ph.sin(), *ct];
                    s += wt * 2.0 * std::f64::consts::PI / np as f64 * real_harmonic(a.0, a.1, om) * real_harmonic(b.0, b.1, om);
                }
            }
            s
        };
        assert!((ip((0, 0), (0, 0)) - 1.0).abs() < 1e-12);
        assert!((ip((2, 1), (2, 1)) - 1.0).abs() < 1e-12);
        assert!((ip((3, -2), (3, -2)) - 1.0).abs() < 1e-12);
        assert!(ip((2, 1), (3, 1)).abs() < 1e-12);
        assert!(ip((2, 1), (2, -1)).abs() < 1e-12);
    }

    #[test]
    fn divergence_check_separates_swirl_from_source() {
        let g = Grid::new(4.0f64, 32).unwrap();
        let h = g.spacing();
        let swirl = HomogeneousData::swirl(1.0).check_divergence(&g).unwrap();
        assert!(swirl <= 10.0 * h * h);
        let source = HomogeneousData::builtin(vec![VelocityMode::Source { strength: 1.0 }], vec![], 1.0).unwrap();
        assert!(matches!(source.check_divergence(&g), Err(Error::NotDivergenceFree { .. })));
        assert_eq!(HomogeneousData::<f64>::zero().divergence_residual(&g), 0.0);
    }

    #[test]
    fn table_interpolates_and_wraps() {
        let mut rows = Vec::new();
        for i in 0..5 {
            for j in 0..8 {
                let th = std::f64::consts::PI * i as f64 / 4.0;
                let ph = 2.0 * std::f64::consts::PI * j as f64 / 8.0;
                rows.push([th, ph, 0.0, 0.0, 0.0, 1.0 + th]);
            }
        }
        let d = HomogeneousData::new(Family::Tabulated(SphereTable::from_rows(&rows).unwrap()), 2.0f64).unwrap();
        // Linear in the polar angle, so bilinear lookup is exact.
        let th = 0.3f64;
        let ph = 6.2f64;
        let w = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        assert!((d.sphere(w).1 - (1.0 + th)).abs() < 1e-12);
        assert!(d.check_homogeneity(50).unwrap() <= 1e-14);
        assert!(SphereTable::from_rows(&rows[..7]).is_err());
    }

    #[test]
    fn linear_form_reproduces_sphere_values() {
        let d = HomogeneousData::builtin(
            vec![VelocityMode::Swirl { strength: 0.7 }, VelocityMode::Source { strength: -0.2 }],
            vec![
                TemperatureMode::Radial { strength: 0.5 },
                TemperatureMode::Harmonic { degree: 1, order: -1, strength: 1.1 },
                TemperatureMode::Harmonic { degree: 1, order: 0, strength: 0.3 },
                TemperatureMode::Harmonic { degree: 0, order: 0, strength: 2.0 },
            ],
            1.5f64,
        )
        .unwrap();
        let lf = d.linear_form().unwrap();
        let w = [0.36f64, -0.48, 0.8];
        let (u, th) = d.sphere(w);
        for i in 0..3 {
            let mu: f64 = (0..3).map(|k| lf.m[i][k] * w[k]).sum();
            assert!((mu - 1.5 * u[i]).abs() < 1e-14);
        }
        let t = lf.b0 + (0..3).map(|k| lf.beta[k] * w[k]).sum::<f64>();
        assert!((t - 1.5 * th).abs() < 1e-14);
        let quad = HomogeneousData::builtin(vec![], vec![TemperatureMode::Harmonic { degree: 2, order: 0, strength: 1.0 }], 1.0f64).unwrap();
        assert!(quad.linear_form().is_none());
    }
}
