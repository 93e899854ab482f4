//! Zeros of computed eigenfunctions.
//!
//! The interior zeros of the k-th eigenfunction are the interior knots of an
//! optimal spline space of degree `r - 1` and smoothness `C^{r-2}`. Each sign
//! change of the sampled eigenfunction is refined on the cubic through the
//! four nearest samples.

use std::io::Write;

use serde::Serialize;

use crate::eigen::{eigenfunction_values, Eigenpair};
use crate::error::{Error, Result};
use crate::nystrom::Grid;
use crate::output::fmt_f64;

/// Samples at or below this magnitude (relative to the max-norm 1) are
/// treated as zero.
pub const NEGLIGIBLE: f64 = 1e-12;

/// Default refinement tolerance relative to `b - a`.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnotReport {
    pub r: usize,
    pub eigen_rank: usize,
    pub zeros: Vec<f64>,
    pub refinement_tol: f64,
}

/// Locates the `k - 1` interior zeros of the rank-`k` eigenfunction.
///
/// Negligible samples are skipped when looking for sign changes, which keeps
/// the boundary layer of high-order eigenfunctions (where samples fall far
/// below rounding noise) from producing spurious crossings. Two consecutive
/// negligible samples between resolved samples of opposite sign mean the
/// mesh does not resolve the zero, and the extraction fails.
pub fn extract_knots(pair: &Eigenpair, grid: &Grid, r: usize, tol: f64) -> Result<KnotReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "refinement tolerance must be positive".into(),
        ));
    }
    let samples = eigenfunction_values(pair, grid)?;
    let nodes = grid.nodes();
    let rank = pair.index;

    let resolved: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].abs() > NEGLIGIBLE)
        .collect();
    let mut brackets = Vec::new();
    for w in resolved.windows(2) {
        let (i, j) = (w[0], w[1]);
        if samples[i].signum() == samples[j].signum() {
            continue;
        }
        if j - i > 2 {
            return Err(Error::UnderResolved {
                rank,
                reason: format!(
                    "{} consecutive negligible samples inside ({}, {})",
                    j - i - 1,
                    nodes[i],
                    nodes[j]
                ),
            });
        }
        brackets.push((i, j));
    }
    if brackets.len() + 1 != rank {
        return Err(Error::UnderResolved {
            rank,
            reason: format!(
                "found {} sign changes, expected {}",
                brackets.len(),
                rank.saturating_sub(1)
            ),
        });
    }

    let zeros: Vec<f64> = brackets
        .iter()
        .map(|&(i, j)| refine(nodes, &samples, i, j, tol))
        .collect();
    let iv = grid.interval();
    for w in zeros.windows(2) {
        if w[1] - w[0] <= tol {
            return Err(Error::UnderResolved {
                rank,
                reason: format!("zeros {} and {} collide", w[0], w[1]),
            });
        }
    }
    if zeros.iter().any(|&z| !(z > iv.a && z < iv.b)) {
        return Err(Error::UnderResolved {
            rank,
            reason: "zero on the boundary".into(),
        });
    }
    Ok(KnotReport {
        r,
        eigen_rank: rank,
        zeros,
        refinement_tol: tol,
    })
}

/// Root of the cubic interpolant of four consecutive samples covering the
/// bracket `[nodes[i], nodes[j]]`, located by an Illinois/bisection hybrid.
fn refine(nodes: &[f64], samples: &[f64], i: usize, j: usize, tol: f64) -> f64 {
    let last = nodes.len() - 1;
    let start = if j - i == 1 { i.saturating_sub(1) } else { i };
    let start = start.min(last.saturating_sub(3));
    let end = (start + 3).min(last);
    let xs = &nodes[start..=end];
    let ys = &samples[start..=end];
    let p = |x: f64| lagrange(xs, ys, x);

    let (mut lo, mut hi) = (nodes[i], nodes[j]);
    let (mut flo, mut fhi) = (samples[i], samples[j]);
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let secant = (lo * fhi - hi * flo) / (fhi - flo);
        let mid = 0.5 * (lo + hi);
        // fall back to bisection when the secant point is not well inside
        let x = if secant.is_finite()
            && secant > lo + 0.01 * (hi - lo)
            && secant < hi - 0.01 * (hi - lo)
        {
            secant
        } else {
            mid
        };
        let fx = p(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    if flo.abs() < fhi.abs() {
        lo
    } else {
        hi
    }
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut sum = 0.0;
    for (k, (&xk, &yk)) in xs.iter().zip(ys).enumerate() {
        let mut w = yk;
        for (l, &xl) in xs.iter().enumerate() {
            if l != k {
                w *= (x - xl) / (xk - xl);
            }
        }
        sum += w;
    }
    sum
}

/// CSV rows `r,k,index,zero` (index is 1-based).
pub fn write_knots_csv<W: Write>(reports: &[KnotReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "r,k,index,zero")?;
    for rep in reports {
        for (i, z) in rep.zeros.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                rep.r,
                rep.eigen_rank,
                i + 1,
                fmt_f64(*z)
            )?;
        }
    }
    Ok(())
}

/// Two-column CSV `x,phi` over all `m + 2` nodes.
pub fn eigenfunction_dump<W: Write>(pair: &Eigenpair, grid: &Grid, mut out: W) -> Result<()> {
    let values = eigenfunction_values(pair, grid)?;
    writeln!(out, "x,phi")?;
    for (x, v) in grid.nodes().iter().zip(values) {
        writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(v))?;
    }
    Ok(())
}
