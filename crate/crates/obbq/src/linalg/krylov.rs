//! Restarted GMRES with right preconditioning.

use crate::real::Real;

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions<T> {
    pub tolerance: T,
    pub restart: usize,
    pub max_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome<T> {
    pub iterations: usize,
    /// Final `‖b − A x‖ / ‖b‖` (absolute residual when `b = 0`).
    pub relative_residual: T,
    pub converged: bool,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from the contents of `x`. `apply` writes
/// `A v` into its second argument, `precond` writes `M⁻¹ v`.
pub fn gmres<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    mut precond: impl FnMut(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    opts: &GmresOptions<T>,
) -> GmresOutcome<T> {
    let n = b.len();
    let bnorm = norm(b);
    let scale = if bnorm > T::zero() { bnorm } else { T::one() };
    let m = opts.restart.max(1);
    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![T::zero(); m]; m + 1];
    let (mut cs, mut sn) = (vec![T::zero(); m], vec![T::zero(); m]);
    let mut g = vec![T::zero(); m + 1];
    let mut total = 0;

    apply(x, &mut w);
    for i in 0..n {
        r[i] = b[i] - w[i];
    }
    let mut rnorm = norm(&r);
    if rnorm / scale <= opts.tolerance {
        return GmresOutcome { iterations: 0, relative_residual: rnorm / scale, converged: true };
    }

    while total < opts.max_iterations {
        basis.clear();
        basis.push(r.iter().map(|&v| v / rnorm).collect());
        g.iter_mut().for_each(|v| *v = T::zero());
        g[0] = rnorm;
        let mut k = 0;
        while k < m && total < opts.max_iterations {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            // Modified Gram–Schmidt, repeated once for stability.
            for h in hess.iter_mut() {
                h[k] = T::zero();
            }
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    hess[j][k] += c;
                    for (wi, &vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
            }
            let wn = norm(&w);
            hess[k + 1][k] = wn;
            for j in 0..k {
                let (a, b) = (hess[j][k], hess[j + 1][k]);
                hess[j][k] = cs[j] * a + sn[j] * b;
                hess[j + 1][k] = -sn[j] * a + cs[j] * b;
            }
            let (a, b) = (hess[k][k], hess[k + 1][k]);
            let d = a.hypot(b);
            let (c, s) = if d > T::zero() { (a / d, b / d) } else { (T::one(), T::zero()) };
            cs[k] = c;
            sn[k] = s;
            hess[k][k] = d;
            hess[k + 1][k] = T::zero();
            g[k + 1] = -s * g[k];
            g[k] = c * g[k];
            total += 1;
            k += 1;
            let est = g[k].abs() / scale;
            if est <= opts.tolerance || !(wn > T::zero()) || !est.is_finite() {
                break;
            }
            basis.push(w.iter().map(|&v| v / wn).collect());
        }
        // Back-substitute the small triangular system and update x.
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[i][j] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, &yj) in y.iter().enumerate() {
            for (u, &v) in update.iter_mut().zip(&basis[j]) {
                *u += yj * v;
            }
        }
        precond(&update, &mut z);
        for (xi, &zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        apply(x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        rnorm = norm(&r);
        let rel = rnorm / scale;
        if rel <= opts.tolerance || !rel.is_finite() {
            return GmresOutcome { iterations: total, relative_residual: rel, converged: rel <= opts.tolerance };
        }
    }
    GmresOutcome { iterations: total, relative_residual: rnorm / scale, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convection(n: usize, pe: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r + pe * (r - l);
            }
        }
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 50;
        let a = convection(n, 0.3);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let opts = GmresOptions { tolerance: 1e-12, restart: 20, max_iterations: 500 };
        let out = gmres(&a, |v: &[f64], z: &mut [f64]| z.copy_from_slice(v), &b, &mut x, &opts);
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        a(&x, &mut ax);
        let err = ax.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err < 1e-10);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let n = 10;
        let scale = |v: &[f64], y: &mut [f64]| y.iter_mut().zip(v).enumerate().for_each(|(i, (y, v))| *y = (i + 1) as f64 * v);
        let inv = |v: &[f64], y: &mut [f64]| y.iter_mut().zip(v).enumerate().for_each(|(i, (y, v))| *y = v / (i + 1) as f64);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let opts = GmresOptions { tolerance: 1e-14, restart: 5, max_iterations: 10 };
        let out = gmres(scale, inv, &b, &mut x, &opts);
        assert_eq!(out.iterations, 1);
        assert!((x[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_with_zero_guess_returns_immediately() {
        let b = vec![0.0; 4];
        let mut x = vec![0.0; 4];
        let opts = GmresOptions { tolerance: 1e-10, restart: 5, max_iterations: 10 };
        let out = gmres(|v: &[f64], y: &mut [f64]| y.copy_from_slice(v), |v: &[f64], y: &mut [f64]| y.copy_from_slice(v), &b, &mut x, &opts);
        assert_eq!(out.iterations, 0);
    }
}
