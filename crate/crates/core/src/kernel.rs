//! Green's function of the Dirichlet problem
//! `(-1)^r φ^{(2r)} = μ φ`, `φ^{(k)}(a) = φ^{(k)}(b) = 0` for `k < r`.
//!
//! For `x ≤ y`,
//!
//! ```text
//! g(x, y) = (y-a)^r (b-y)^r / ((2r-1)! (b-a)) · B[a,…,a, y, b,…,b](x)
//! ```
//!
//! with `r` copies of each endpoint, and `g(x, y) = g(y, x)` otherwise.

use serde::Serialize;

use crate::bspline::{self, Workspace};
use crate::error::{Error, Result};

/// Largest derivative order supported without an explicit override.
pub const MAX_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                x,
                a: self.a,
                b: self.b,
            })
        }
    }
}

/// Prefactor `(y-a)^r (b-y)^r / ((2r-1)! (b-a))`.
///
/// Multiplications and divisions are interleaved so that neither the
/// factorial nor the monomials leave the float64 range for `r ≤ 20`. Orders
/// above [`MAX_ORDER`] need `allow_large_order`.
pub fn factorial_scale(r: usize, y: f64, iv: Interval, allow_large_order: bool) -> Result<f64> {
    check_order(r, allow_large_order)?;
    iv.check(y)?;
    Ok(scale_unchecked(r, y, iv))
}

fn scale_unchecked(r: usize, y: f64, iv: Interval) -> f64 {
    let w = (y - iv.a) * (iv.b - y);
    let mut s = 1.0 / iv.length();
    for i in 1..2 * r {
        if i <= r {
            s *= w;
        }
        s /= i as f64;
    }
    s
}

fn check_order(r: usize, allow_large_order: bool) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidArgument("r must be at least 1".into()));
    }
    if r > MAX_ORDER && !allow_large_order {
        return Err(Error::InvalidArgument(format!(
            "r = {r} exceeds the supported range 1..={MAX_ORDER}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kernel {
    r: usize,
    interval: Interval,
}

impl Kernel {
    pub fn new(r: usize, interval: Interval) -> Result<Self> {
        check_order(r, false)?;
        Ok(Self { r, interval })
    }

    /// Same as [`Kernel::new`] but accepts `r > 20`. Float64 may underflow.
    pub fn new_unbounded(r: usize, interval: Interval) -> Result<Self> {
        check_order(r, true)?;
        Ok(Self { r, interval })
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn workspace(&self) -> KernelWorkspace {
        KernelWorkspace {
            knots: Vec::with_capacity(2 * self.r + 1),
            bspline: Workspace::with_degree(2 * self.r - 1),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let mut ws = self.workspace();
        self.eval_with(&mut ws, x, y)
    }

    /// [`Kernel::eval`] reusing scratch buffers.
    pub fn eval_with(&self, ws: &mut KernelWorkspace, x: f64, y: f64) -> Result<f64> {
        self.interval.check(x)?;
        self.interval.check(y)?;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let Interval { a, b } = self.interval;
        if lo == a || hi == b {
            return Ok(0.0);
        }

        ws.knots.clear();
        ws.knots.extend(std::iter::repeat_n(a, self.r));
        ws.knots.push(hi);
        ws.knots.extend(std::iter::repeat_n(b, self.r));
        let spline = bspline::eval_unchecked(&ws.knots, lo, &mut ws.bspline);
        Ok(scale_unchecked(self.r, hi, self.interval) * spline)
    }
}

#[derive(Debug, Clone)]
pub struct KernelWorkspace {
    knots: Vec<f64>,
    bspline: Workspace,
}

/// Explicit piecewise-polynomial form of the kernel for `r = 1` and `r = 2`.
pub fn closed_form(r: usize, iv: Interval, x: f64, y: f64) -> Option<f64> {
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let Interval { a, b } = iv;
    match r {
        1 => Some((x - a) * (b - y) / (b - a)),
        2 => Some(
            (x - a).powi(2) * (b - y).powi(2) / (6.0 * (b - a).powi(3))
                * ((b - a) * (y - x) + 2.0 * (b - x) * (y - a)),
        ),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r1_value() {
        let k = Kernel::new(1, Interval::unit()).unwrap();
        assert!((k.eval(0.25, 0.5).unwrap() - 0.125).abs() < 1e-16);
    }

    #[test]
    fn r2_value() {
        let k = Kernel::new(2, Interval::unit()).unwrap();
        let g = k.eval(0.3, 0.6).unwrap();
        assert!((g - 0.002736).abs() < 1e-17, "{g}");
    }

    #[test]
    fn boundary_is_zero() {
        for r in 1..=20 {
            let k = Kernel::new(r, Interval::new(-1.0, 2.0).unwrap()).unwrap();
            for y in [-1.0, -0.3, 0.5, 1.9, 2.0] {
                assert_eq!(k.eval(-1.0, y).unwrap(), 0.0);
                assert_eq!(k.eval(2.0, y).unwrap(), 0.0);
                assert_eq!(k.eval(y, -1.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn rejects_outside_points() {
        let k = Kernel::new(2, Interval::unit()).unwrap();
        assert!(k.eval(-0.1, 0.5).is_err());
        assert!(k.eval(0.5, 1.0 + 1e-12).is_err());
    }

    #[test]
    fn scale_values() {
        let iv = Interval::unit();
        assert!((factorial_scale(1, 0.5, iv, false).unwrap() - 0.25).abs() < 1e-16);
        let s2 = factorial_scale(2, 0.5, iv, false).unwrap();
        assert!((s2 - 0.0625 / 6.0).abs() < 1e-17);
        assert!(factorial_scale(0, 0.5, iv, false).is_err());
        assert!(factorial_scale(21, 0.5, iv, false).is_err());
        assert!(factorial_scale(21, 0.5, iv, true).is_ok());
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_positive(r in 1usize..=20, x in 0.001f64..0.999, y in 0.001f64..0.999) {
            let k = Kernel::new(r, Interval::unit()).unwrap();
            let gxy = k.eval(x, y).unwrap();
            let gyx = k.eval(y, x).unwrap();
            prop_assert_eq!(gxy.to_bits(), gyx.to_bits());
            prop_assert!(gxy > 0.0);
        }

        #[test]
        fn affine_covariance(r in 1usize..=6, a in -3.0f64..3.0, len in 0.1f64..5.0,
                             s in 0.01f64..0.99, t in 0.01f64..0.99) {
            let iv = Interval::new(a, a + len).unwrap();
            let g = Kernel::new(r, iv).unwrap().eval(a + len * s, a + len * t).unwrap();
            let g0 = Kernel::new(r, Interval::unit()).unwrap().eval(s, t).unwrap();
            let expected = len.powi(2 * r as i32 - 1) * g0;
            prop_assert!(((g - expected) / expected).abs() < 1e-11, "{g} vs {expected}");
        }
    }
}
