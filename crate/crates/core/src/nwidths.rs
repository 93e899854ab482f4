//! n-widths from eigenvalues, their a-priori bounds and the conjectured
//! asymptotic midpoint.
//!
//! For `n ≥ r`, `d_n = λ_{n+1-r}^{1/2}` where `λ_k` is the k-th largest
//! eigenvalue of the integral operator. The bounds
//! `(n-r+1)π/(b-a) ≤ d_n^{-1/r} ≤ nπ/(b-a)` hold for every `n ≥ r`, and
//! `d_n^{-1/r}` is conjectured to approach their midpoint
//! `(n-(r-1)/2)π/(b-a)`.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{self, Eigenpair};
use crate::error::{Error, Result};
use crate::kernel::{Interval, Kernel};
use crate::nystrom::{assemble, build_grid, NystromSystem};

/// Eigenvalues below this multiple of `ε λ_1` carry no reliable digits.
pub const PRECISION_LIMIT: f64 = 1e3 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    Ok,
    PrecisionLimited,
    NonMonotone,
    NonPositive,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::PrecisionLimited => "precision-limited",
            Flag::NonMonotone => "non-monotone",
            Flag::NonPositive => "non-positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NWidthResult {
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub d_n: f64,
    /// `d_n^{-1/r}`, computed as `λ^{-1/(2r)}`.
    pub dn_inv_r: f64,
    pub lower: f64,
    pub upper: f64,
    pub conjecture: f64,
    /// `|d_n^{-1/r} - conjecture| / conjecture`
    pub rel_err: f64,
    pub flag: Flag,
}

fn check_n(r: usize, n: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidArgument("r must be at least 1".into()));
    }
    if n < r {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be at least r = {r}"
        )));
    }
    Ok(())
}

/// `d_n = sqrt(λ)` for the `(n+1-r)`-th largest eigenvalue `λ`.
pub fn dn_from_eigenvalue(lambda: f64, n: usize, r: usize) -> Result<f64> {
    check_n(r, n)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue must be positive, got {lambda:e}"
        )));
    }
    Ok(lambda.sqrt())
}

/// Rank of the eigenvalue that yields `d_n`.
pub fn eigen_rank(n: usize, r: usize) -> Result<usize> {
    check_n(r, n)?;
    Ok(n + 1 - r)
}

/// `((n-r+1)π/(b-a), nπ/(b-a))`, the bounds on `d_n^{-1/r}`.
pub fn theorem1_bounds(r: usize, n: usize, iv: Interval) -> Result<(f64, f64)> {
    check_n(r, n)?;
    let len = iv.length();
    Ok(((n - r + 1) as f64 * PI / len, n as f64 * PI / len))
}

/// `(n-(r-1)/2)π/(b-a)`.
pub fn conjecture_value(r: usize, n: usize, iv: Interval) -> Result<f64> {
    check_n(r, n)?;
    Ok((n as f64 - (r as f64 - 1.0) / 2.0) * PI / iv.length())
}

/// Exact n-width for `r = 1`: `(b-a)/(nπ)`.
pub fn analytic_r1(n: usize, iv: Interval) -> Result<f64> {
    check_n(1, n)?;
    Ok(iv.length() / (n as f64 * PI))
}

/// Assembles the Nyström system and computes its top `count` eigenpairs.
pub fn solve(
    r: usize,
    iv: Interval,
    m: usize,
    count: usize,
    tol_res: f64,
) -> Result<(NystromSystem, Vec<Eigenpair>)> {
    let kernel = Kernel::new(r, iv)?;
    let grid = build_grid(iv, m)?;
    let sys = assemble(&kernel, &grid)?;
    let pairs = eigen::top_eigenpairs(&sys, count, tol_res)?;
    Ok((sys, pairs))
}

fn result_row(r: usize, n: usize, m: usize, iv: Interval, values: &[f64]) -> Result<NWidthResult> {
    let k = eigen_rank(n, r)?;
    let lambda = values[k - 1];
    let (lower, upper) = theorem1_bounds(r, n, iv)?;
    let conjecture = conjecture_value(r, n, iv)?;
    let flag = if !(lambda > 0.0) {
        Flag::NonPositive
    } else if k >= 2 && !(lambda < values[k - 2]) {
        Flag::NonMonotone
    } else if lambda < PRECISION_LIMIT * values[0] {
        Flag::PrecisionLimited
    } else {
        Flag::Ok
    };
    let (d_n, dn_inv_r) = if lambda > 0.0 {
        (lambda.sqrt(), lambda.powf(-0.5 / r as f64))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(NWidthResult {
        r,
        n,
        m,
        d_n,
        dn_inv_r,
        lower,
        upper,
        conjecture,
        rel_err: (dn_inv_r - conjecture).abs() / conjecture,
        flag,
    })
}

/// n-widths `d_n` for every `n` in `ns`, from a single assembly.
pub fn compute(
    r: usize,
    ns: &[usize],
    m: usize,
    iv: Interval,
    tol_res: f64,
) -> Result<Vec<NWidthResult>> {
    let kernel = Kernel::new(r, iv)?;
    let sys = assemble(&kernel, &build_grid(iv, m)?)?;
    compute_on(&sys, ns, tol_res)
}

/// As [`compute`], on an already assembled system.
pub fn compute_on(sys: &NystromSystem, ns: &[usize], tol_res: f64) -> Result<Vec<NWidthResult>> {
    let r = sys.kernel().order();
    let Some(&n_max) = ns.iter().max() else {
        return Ok(Vec::new());
    };
    for &n in ns {
        check_n(r, n)?;
    }
    let count = eigen_rank(n_max, r)?;
    let pairs = eigen::top_eigenpairs(sys, count, tol_res)?;
    let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    let (m, iv) = (sys.grid().m(), sys.grid().interval());
    ns.iter()
        .map(|&n| result_row(r, n, m, iv, &values))
        .collect()
}

/// Relative distance of `d_n^{-1/r}` from the conjectured midpoint for
/// `r = 1..=r_max` and `n = r + offset`.
///
/// Each `r` needs one assembly and one eigensolve. Values that float64
/// cannot resolve are flagged instead of failing the whole table.
pub fn conjecture_table(
    r_max: usize,
    offsets: RangeInclusive<usize>,
    m: usize,
    iv: Interval,
    tol_res: f64,
) -> Result<Vec<NWidthResult>> {
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    if offsets.is_empty() {
        return Err(Error::InvalidArgument("empty offset range".into()));
    }
    let count = offsets.end() + 1;
    let rows: Vec<Vec<NWidthResult>> = (1..=r_max)
        .into_par_iter()
        .map(|r| {
            let kernel = Kernel::new(r, iv)?;
            let sys = assemble(&kernel, &build_grid(iv, m)?)?;
            let pairs = eigen::top_eigenpairs_relaxed(sys.matrix(), count, tol_res)?;
            let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
            offsets
                .clone()
                .map(|off| result_row(r, r + off, m, iv, &values))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_root() {
        assert_eq!(dn_from_eigenvalue(0.25, 3, 2).unwrap(), 0.5);
        assert!(dn_from_eigenvalue(0.0, 3, 2).is_err());
        assert!(dn_from_eigenvalue(0.25, 1, 2).is_err());
    }

    #[test]
    fn bounds() {
        let unit = Interval::unit();
        let (lo, hi) = theorem1_bounds(1, 5, unit).unwrap();
        assert_eq!(lo, hi);
        assert!((lo - 5.0 * PI).abs() < 1e-14);
        let (lo, hi) = theorem1_bounds(3, 3, unit).unwrap();
        assert!((lo - PI).abs() < 1e-15 && (hi - 3.0 * PI).abs() < 1e-14);
        let (lo, hi) = theorem1_bounds(2, 10, Interval::new(0.0, 2.0).unwrap()).unwrap();
        assert!((lo - 4.5 * PI).abs() < 1e-14 && (hi - 5.0 * PI).abs() < 1e-14);
        assert!(theorem1_bounds(3, 2, unit).is_err());
    }

    #[test]
    fn conjecture() {
        let unit = Interval::unit();
        assert!((conjecture_value(1, 4, unit).unwrap() - 4.0 * PI).abs() < 1e-14);
        assert!((conjecture_value(3, 5, unit).unwrap() - 4.0 * PI).abs() < 1e-14);
        assert!((conjecture_value(20, 20, unit).unwrap() - 10.5 * PI).abs() < 1e-13);
        let (lo, hi) = theorem1_bounds(7, 12, unit).unwrap();
        assert!((conjecture_value(7, 12, unit).unwrap() - 0.5 * (lo + hi)).abs() < 1e-13);
    }

    #[test]
    fn r1_first_width() {
        let rows = compute(1, &[1], 511, Interval::unit(), eigen::DEFAULT_TOL_RES).unwrap();
        let exact = analytic_r1(1, Interval::unit()).unwrap();
        assert!((rows[0].d_n - exact).abs() / exact < 1e-5);
        assert_eq!(rows[0].flag, Flag::Ok);
    }

    #[test]
    fn r2_sandwich_and_monotone() {
        let iv = Interval::unit();
        let ns: Vec<usize> = (2..=8).collect();
        let rows = compute(2, &ns, 511, iv, eigen::DEFAULT_TOL_RES).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].d_n < w[0].d_n);
        }
        for row in &rows {
            assert!(
                row.lower <= row.dn_inv_r && row.dn_inv_r <= row.upper,
                "{row:?}"
            );
        }
        // d_2^{-1/2} lies in [π, 2π] and near 1.5π
        assert!((rows[0].dn_inv_r / PI - 1.5).abs() < 0.1);
    }

    #[test]
    fn scaling_law() {
        let r = 3;
        let ns = [3, 4, 5];
        let unit = compute(r, &ns, 255, Interval::unit(), eigen::DEFAULT_TOL_RES).unwrap();
        let iv = Interval::new(-1.0, 1.5).unwrap();
        let scaled = compute(r, &ns, 255, iv, eigen::DEFAULT_TOL_RES).unwrap();
        for (u, s) in unit.iter().zip(&scaled) {
            let expected = iv.length().powi(r as i32) * u.d_n;
            assert!(
                (s.d_n - expected).abs() / expected < 1e-8,
                "{} vs {expected}",
                s.d_n
            );
        }
    }

    #[test]
    fn table_layout() {
        let rows =
            conjecture_table(3, 0..=2, 127, Interval::unit(), eigen::DEFAULT_TOL_RES).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!((rows[0].r, rows[0].n), (1, 1));
        assert_eq!((rows[8].r, rows[8].n), (3, 5));
        assert!(rows.iter().all(|row| row.flag == Flag::Ok));
    }

    #[test]
    fn flags() {
        let iv = Interval::unit();
        let row = result_row(2, 3, 10, iv, &[1.0, 1e-20]).unwrap();
        assert_eq!(row.flag, Flag::PrecisionLimited);
        let row = result_row(2, 3, 10, iv, &[1.0, 1.0]).unwrap();
        assert_eq!(row.flag, Flag::NonMonotone);
        let row = result_row(2, 3, 10, iv, &[1.0, -1e-30]).unwrap();
        assert_eq!(row.flag, Flag::NonPositive);
        assert!(row.d_n.is_nan());
    }
}
