//! Scalar abstraction shared by every numerical kernel.
//!
//! The library is written once over [`Real`] and instantiated for `f32` and
//! `f64`. Special functions and dense products dispatch to `libm` and
//! `matrixmultiply` per precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, RemAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + RemAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    fn erf(self) -> Self;
    fn erfc(self) -> Self;

    /// `c ← alpha·a·b + beta·c` on strided real matrices.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m×k`, `k×n`, `m×n` views.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Complex counterpart of [`Real::gemm`].
    ///
    /// # Safety
    /// Same contract as [`Real::gemm`].
    #[allow(clippy::too_many_arguments)]
    unsafe fn cgemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Complex<Self>,
        rsa: isize,
        csa: isize,
        b: *const Complex<Self>,
        rsb: isize,
        csb: isize,
        beta: Complex<Self>,
        c: *mut Complex<Self>,
        rsc: isize,
        csc: isize,
    );
}

/// Converts an `f64` literal into the working precision.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite literal")
}

/// Converts a count into the working precision.
#[inline]
pub fn cnt<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("representable count")
}

impl Real for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
    unsafe fn cgemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Complex<f64>,
        rsa: isize,
        csa: isize,
        b: *const Complex<f64>,
        rsb: isize,
        csb: isize,
        beta: Complex<f64>,
        c: *mut Complex<f64>,
        rsc: isize,
        csc: isize,
    ) {
        use matrixmultiply::CGemmOption::Standard;
        // Complex<f64> is repr(C) {re, im}, layout-identical to [f64; 2].
        matrixmultiply::zgemm(
            Standard,
            Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.cast(),
            rsa,
            csa,
            b.cast(),
            rsb,
            csb,
            [beta.re, beta.im],
            c.cast(),
            rsc,
            csc,
        );
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
    unsafe fn cgemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Complex<f32>,
        rsa: isize,
        csa: isize,
        b: *const Complex<f32>,
        rsb: isize,
        csb: isize,
        beta: Complex<f32>,
        c: *mut Complex<f32>,
        rsc: isize,
        csc: isize,
    ) {
        use matrixmultiply::CGemmOption::Standard;
        matrixmultiply::cgemm(
            Standard,
            Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.cast(),
            rsa,
            csa,
            b.cast(),
            rsb,
            csb,
            [beta.re, beta.im],
            c.cast(),
            rsc,
            csc,
        );
    }
}

/// Element type of the dense transforms: either the real scalar itself or
/// its complex extension.
pub trait Elem<T: Real>:
    Copy
    + Send
    + Sync
    + Debug
    + num_traits::Zero
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::SubAssign
    + 'static
{
    fn from_re(x: T) -> Self;
    fn re(self) -> T;
    fn norm1(self) -> T;
    fn conj(self) -> Self;

    /// # Safety
    /// Same contract as [`Real::gemm`].
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl<T: Real> Elem<T> for T {
    fn from_re(x: T) -> Self {
        x
    }
    fn re(self) -> T {
        self
    }
    fn norm1(self) -> T {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const T,
        rsa: isize,
        csa: isize,
        b: *const T,
        rsb: isize,
        csb: isize,
        c: *mut T,
        rsc: isize,
        csc: isize,
    ) {
        T::gemm(m, k, n, a, rsa, csa, b, rsb, csb, T::zero(), c, rsc, csc)
    }
}

impl<T: Real> Elem<T> for Complex<T> {
    fn from_re(x: T) -> Self {
        Complex::new(x, T::zero())
    }
    fn re(self) -> T {
        self.re
    }
    fn norm1(self) -> T {
        self.re.abs() + self.im.abs()
    }
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        T::cgemm(m, k, n, a, rsa, csa, b, rsb, csb, Complex::new(T::zero(), T::zero()), c, rsc, csc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_matches_reference_values() {
        assert!((Real::erf(1.0f64) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((Real::erfc(1.0f64) - 0.157_299_207_050_285_1).abs() < 1e-15);
        assert!((Real::erf(1.0f32) - 0.842_700_8).abs() < 1e-6);
    }

    #[test]
    fn complex_gemm_multiplies() {
        let a = [Complex::new(1.0, 1.0), Complex::new(0.0, 2.0)];
        let b = [Complex::new(2.0, 0.0), Complex::new(1.0, -1.0)];
        let mut c = [Complex::new(0.0, 0.0)];
        unsafe { <Complex<f64> as Elem<f64>>::gemm(1, 2, 1, a.as_ptr(), 2, 1, b.as_ptr(), 1, 1, c.as_mut_ptr(), 1, 1) };
        assert_eq!(c[0], Complex::new(4.0, 4.0));
    }
}
