//! Truncated cube domain, staggered field layout and discrete norms.
//!
//! The cube `[-R, R]³` is split into `n³` cells of width `h = 2R/n`. Scalars
//! live at cell centres, velocity component `d` lives on the faces normal to
//! axis `d`. All arrays are stored x-fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{cnt, lit, Real};

/// Where the values of one array sit inside a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stagger {
    Cell,
    Face(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    half_width: T,
    cells: usize,
    spacing: T,
}

impl<T: Real> Grid<T> {
    pub fn new(half_width: T, cells: usize) -> Result<Self> {
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        if cells < 8 || !cells.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("cells per axis must be even and at least 8, got {cells}")));
        }
        let spacing = (half_width + half_width) / cnt(cells);
        Ok(Grid { half_width, cells, spacing })
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Volume element `h³` of the midpoint quadrature.
    pub fn cell_volume(&self) -> T {
        self.spacing * self.spacing * self.spacing
    }

    /// Coordinate of cell centre `i` along any axis.
    #[inline]
    pub fn center(&self, i: usize) -> T {
        -self.half_width + (cnt::<T>(i) + lit(0.5)) * self.spacing
    }

    /// Coordinate of face `i` along any axis (`0..=n`).
    #[inline]
    pub fn face(&self, i: usize) -> T {
        -self.half_width + cnt::<T>(i) * self.spacing
    }

    pub fn dims(&self, s: Stagger) -> [usize; 3] {
        let n = self.cells;
        match s {
            Stagger::Cell => [n; 3],
            Stagger::Face(d) => {
                let mut dims = [n; 3];
                dims[d] += 1;
                dims
            }
        }
    }

    #[inline]
    pub fn coord(&self, s: Stagger, axis: usize, i: usize) -> T {
        match s {
            Stagger::Face(d) if d == axis => self.face(i),
            _ => self.center(i),
        }
    }

    #[inline]
    pub fn point(&self, s: Stagger, idx: [usize; 3]) -> [T; 3] {
        [self.coord(s, 0, idx[0]), self.coord(s, 1, idx[1]), self.coord(s, 2, idx[2])]
    }

    /// Positions of all nodes of one array, in storage order.
    pub fn points(&self, s: Stagger) -> Vec<[T; 3]> {
        let dims = self.dims(s);
        let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    out.push(self.point(s, [i, j, k]));
                }
            }
        }
        out
    }

    fn same_as(&self, other: &Grid<T>) -> bool {
        self.cells == other.cells && self.half_width == other.half_width
    }
}

#[inline]
pub(crate) fn index(dims: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    i + dims[0] * (j + dims[1] * k)
}

#[inline]
pub(crate) fn len(dims: [usize; 3]) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Shared behaviour of scalar and vector fields.
pub trait Field<T: Real> {
    fn grid(&self) -> &Grid<T>;
    fn arrays(&self) -> Vec<(Stagger, &[T])>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        ScalarField { grid: *grid, values: vec![T::zero(); len(grid.dims(Stagger::Cell))] }
    }

    pub fn from_values(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        check_array(grid, Stagger::Cell, &values)?;
        Ok(ScalarField { grid: *grid, values })
    }

    pub(crate) fn from_raw(grid: &Grid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), len(grid.dims(Stagger::Cell)));
        ScalarField { grid: *grid, values }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: &Grid<T>, f: impl Fn([T; 3]) -> T) -> Self {
        let values = grid.points(Stagger::Cell).into_iter().map(f).collect();
        ScalarField { grid: *grid, values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.values[index([self.grid.cells; 3], i, j, k)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure_same(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(ScalarField { grid: self.grid, values })
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Real> Field<T> for ScalarField<T> {
    fn grid(&self) -> &Grid<T> {
        &self.grid
    }
    fn arrays(&self) -> Vec<(Stagger, &[T])> {
        vec![(Stagger::Cell, &self.values[..])]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    grid: Grid<T>,
    comps: [Vec<T>; 3],
}

impl<T: Real> VectorField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        let comps = [0, 1, 2].map(|d| vec![T::zero(); len(grid.dims(Stagger::Face(d)))]);
        VectorField { grid: *grid, comps }
    }

    pub fn from_components(grid: &Grid<T>, comps: [Vec<T>; 3]) -> Result<Self> {
        for (d, c) in comps.iter().enumerate() {
            check_array(grid, Stagger::Face(d), c)?;
        }
        Ok(VectorField { grid: *grid, comps })
    }

    pub(crate) fn from_raw(grid: &Grid<T>, comps: [Vec<T>; 3]) -> Self {
        VectorField { grid: *grid, comps }
    }

    /// Samples component `d` of `f` at the faces normal to axis `d`.
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(usize, [T; 3]) -> T) -> Self {
        let comps = [0, 1, 2].map(|d| grid.points(Stagger::Face(d)).into_iter().map(|x| f(d, x)).collect());
        VectorField { grid: *grid, comps }
    }

    pub fn component(&self, d: usize) -> &[T] {
        &self.comps[d]
    }

    pub fn components(&self) -> &[Vec<T>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<T>; 3] {
        self.comps
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let comps = [0, 1, 2].map(|d| self.comps[d].iter().map(|&v| f(v)).collect());
        VectorField { grid: self.grid, comps }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure_same(&self.grid, &other.grid)?;
        let comps = [0, 1, 2].map(|d| self.comps[d].iter().zip(&other.comps[d]).map(|(&a, &b)| f(a, b)).collect());
        Ok(VectorField { grid: self.grid, comps })
    }

    pub fn max_abs(&self) -> T {
        self.comps.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Real> Field<T> for VectorField<T> {
    fn grid(&self) -> &Grid<T> {
        &self.grid
    }
    fn arrays(&self) -> Vec<(Stagger, &[T])> {
        (0..3).map(|d| (Stagger::Face(d), &self.comps[d][..])).collect()
    }
}

fn check_array<T: Real>(grid: &Grid<T>, s: Stagger, values: &[T]) -> Result<()> {
    let expected = len(grid.dims(s));
    if values.len() != expected {
        return Err(Error::InvalidInput(format!("expected {expected} values for {s:?}, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIterate);
    }
    Ok(())
}

pub(crate) fn ensure_same<T: Real>(a: &Grid<T>, b: &Grid<T>) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `√(h³ Σ v²)`, summed in storage order.
pub fn l2_norm<T: Real, F: Field<T>>(f: &F) -> T {
    let sum = f.arrays().iter().flat_map(|(_, a)| a.iter()).fold(T::zero(), |acc, &v| acc + v * v);
    (f.grid().cell_volume() * sum).sqrt()
}

/// `h³ Σ a·b` over matching arrays.
pub fn inner<T: Real, F: Field<T>>(a: &F, b: &F) -> Result<T> {
    ensure_same(a.grid(), b.grid())?;
    let mut sum = T::zero();
    for ((_, x), (_, y)) in a.arrays().iter().zip(b.arrays().iter()) {
        for (&p, &q) in x.iter().zip(y.iter()) {
            sum += p * q;
        }
    }
    Ok(a.grid().cell_volume() * sum)
}

/// Discrete `‖∇f‖₂` from forward differences along every link inside each
/// array. For fields vanishing outside the unknown block this is exactly the
/// energy of the discrete Laplacian.
pub fn h1_seminorm<T: Real, F: Field<T>>(f: &F) -> T {
    let grid = f.grid();
    let h = grid.spacing();
    let mut sum = T::zero();
    for (s, a) in f.arrays() {
        let dims = grid.dims(s);
        let strides = [1, dims[0], dims[0] * dims[1]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = index(dims, i, j, k);
                    let at = [i, j, k];
                    for axis in 0..3 {
                        if at[axis] + 1 < dims[axis] {
                            let d = a[p + strides[axis]] - a[p];
                            sum += d * d;
                        }
                    }
                }
            }
        }
    }
    (grid.cell_volume() * sum).sqrt() / h
}

/// `√(‖f‖² + ‖∇f‖²)`.
pub fn h1_norm<T: Real, F: Field<T>>(f: &F) -> T {
    let a = l2_norm(f);
    let b = h1_seminorm(f);
    (a * a + b * b).sqrt()
}

/// Trilinear sample of one array at a physical point. Points outside the
/// array's node box are clamped onto it.
pub fn sample<T: Real>(grid: &Grid<T>, s: Stagger, values: &[T], x: [T; 3]) -> T {
    let dims = grid.dims(s);
    let h = grid.spacing();
    let mut base = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for a in 0..3 {
        let origin = grid.coord(s, a, 0);
        let top = cnt::<T>(dims[a] - 1);
        let t = ((x[a] - origin) / h).max(T::zero()).min(top);
        let mut i = t.floor().to_usize().unwrap_or(0);
        if i + 1 >= dims[a] {
            i = dims[a].saturating_sub(2);
        }
        base[a] = i;
        frac[a] = t - cnt(i);
    }
    let mut acc = T::zero();
    for corner in 0..8 {
        let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = T::one();
        for a in 0..3 {
            w *= if off[a] == 1 { frac[a] } else { T::one() - frac[a] };
        }
        if w != T::zero() {
            acc += w * values[index(dims, base[0] + off[0], base[1] + off[1], base[2] + off[2])];
        }
    }
    acc
}

impl<T: Real> ScalarField<T> {
    pub fn sample(&self, x: [T; 3]) -> T {
        sample(&self.grid, Stagger::Cell, &self.values, x)
    }

    /// Trilinear interpolation onto the nodes of `target`.
    pub fn interpolate_to(&self, target: &Grid<T>) -> Self {
        ScalarField::from_fn(target, |x| self.sample(x))
    }

    /// Restriction to the centred sub-cube of half width `sub`, which must be
    /// a whole number of cells of this grid.
    pub fn restrict(&self, sub: T) -> Result<Self> {
        let (g, off) = sub_grid(&self.grid, sub)?;
        let m = g.cells();
        let mut values = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    values.push(self.get(i + off, j + off, k + off));
                }
            }
        }
        Ok(ScalarField { grid: g, values })
    }
}

impl<T: Real> VectorField<T> {
    pub fn sample(&self, d: usize, x: [T; 3]) -> T {
        sample(&self.grid, Stagger::Face(d), &self.comps[d], x)
    }

    pub fn interpolate_to(&self, target: &Grid<T>) -> Self {
        VectorField::from_fn(target, |d, x| self.sample(d, x))
    }

    pub fn restrict(&self, sub: T) -> Result<Self> {
        let (g, off) = sub_grid(&self.grid, sub)?;
        let comps = [0, 1, 2].map(|d| {
            let src = self.grid.dims(Stagger::Face(d));
            let dst = g.dims(Stagger::Face(d));
            let mut out = Vec::with_capacity(len(dst));
            for k in 0..dst[2] {
                for j in 0..dst[1] {
                    for i in 0..dst[0] {
                        out.push(self.comps[d][index(src, i + off, j + off, k + off)]);
                    }
                }
            }
            out
        });
        Ok(VectorField { grid: g, comps })
    }
}

fn sub_grid<T: Real>(grid: &Grid<T>, sub: T) -> Result<(Grid<T>, usize)> {
    if sub > grid.half_width() * (T::one() + lit(1e-12)) {
        return Err(Error::DomainMismatch {
            requested: sub.to_f64().unwrap_or(f64::NAN),
            available: grid.half_width().to_f64().unwrap_or(f64::NAN),
        });
    }
    let cells_f = (sub + sub) / grid.spacing();
    let m = cells_f.round().to_usize().unwrap_or(0);
    if (cells_f - cnt(m)).abs() > lit(1e-9) || !m.is_multiple_of(2) || m < 8 {
        return Err(Error::InvalidGrid(format!("sub-domain half width {sub} is not an even multiple (>= 8) of the cell size")));
    }
    Ok((Grid::new(sub, m)?, (grid.cells() - m) / 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_examples() {
        let g = Grid::<f64>::new(4.0, 8).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.points(Stagger::Cell).len(), 512);
        for i in 0..8 {
            assert_eq!(g.center(i), -g.center(7 - i));
        }
        assert_eq!(Grid::<f64>::new(8.0, 128).unwrap().spacing(), 0.125);
        assert!(matches!(Grid::<f64>::new(4.0, 7), Err(Error::InvalidGrid(_))));
        assert!(matches!(Grid::<f64>::new(4.0, 6), Err(Error::InvalidGrid(_))));
        assert!(matches!(Grid::<f64>::new(-1.0, 8), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = Grid::<f64>::new(1.0, 8).unwrap();
        assert_eq!(l2_norm(&ScalarField::zeros(&g)), 0.0);
        let one = ScalarField::from_fn(&g, |_| 1.0);
        assert!((l2_norm(&one) - 8f64.sqrt()).abs() < 1e-14);
        assert_eq!(h1_seminorm(&one), 0.0);
        let s = one.scale(-3.0);
        assert!((l2_norm(&s) - 3.0 * l2_norm(&one)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_norms() {
        let g = Grid::<f64>::new(8.0, 128).unwrap();
        let f = ScalarField::from_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let pi = std::f64::consts::PI;
        assert!((l2_norm(&f) - pi.powf(0.75)).abs() < 1e-3);
        assert!((h1_seminorm(&f) - (1.5 * pi.powf(1.5)).sqrt()).abs() < 1e-2);
    }

    #[test]
    fn interpolation_reproduces_linears() {
        let coarse = Grid::<f64>::new(2.0, 8).unwrap();
        let fine = Grid::<f64>::new(2.0, 16).unwrap();
        let f = ScalarField::from_fn(&coarse, |x| x[0]);
        let g = f.interpolate_to(&fine);
        for (x, v) in fine.points(Stagger::Cell).iter().zip(g.values()) {
            // Inside the node box of the coarse centres linears are exact.
            if x[0].abs() <= coarse.center(7) {
                assert!((x[0] - v).abs() < 1e-14);
            }
        }
        let c = ScalarField::from_fn(&coarse, |_| 2.5).interpolate_to(&fine);
        assert!(c.values().iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn restrict_keeps_nodes() {
        let g = Grid::<f64>::new(4.0, 16).unwrap();
        let f = VectorField::from_fn(&g, |d, x| x[d] + 2.0 * x[(d + 1) % 3]);
        let r = f.restrict(2.0).unwrap();
        assert_eq!(r.grid().cells(), 8);
        for d in 0..3 {
            for (x, v) in r.grid().points(Stagger::Face(d)).iter().zip(r.component(d)) {
                assert_eq!(*v, x[d] + 2.0 * x[(d + 1) % 3]);
            }
        }
        assert!(matches!(f.restrict(5.0), Err(Error::DomainMismatch { .. })));
    }

    #[test]
    fn norm_is_symmetric_under_reflection() {
        let g = Grid::<f64>::new(3.0, 12).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] * (-x[1] * x[1]).exp() + x[2]);
        let r = ScalarField::from_fn(&g, |x| -x[0] * (-x[1] * x[1]).exp() - x[2]);
        assert_eq!(l2_norm(&f), l2_norm(&r));
    }
}
