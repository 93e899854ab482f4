//! Convergence of `λ_{n+1-r,h}^{1/2}` towards `d_n` under mesh refinement.
//!
//! Errors are measured against a run on a finer reference mesh (or against
//! the exact value when `r = 1`), and the order is the least-squares slope of
//! `log error` against `log h`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Interval;
use crate::nwidths;
use crate::output::fmt_f64;

/// Errors below this multiple of `ε d_n` are treated as converged to the
/// reference precision and left out of the fit.
pub const PLATEAU: f64 = 1e3 * f64::EPSILON;
/// Relative misfit above which the coarsest point counts as pre-asymptotic.
pub const PRE_ASYMPTOTIC_MISFIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    Ok,
    /// Slope fitted on exactly two points.
    FewPoints,
    /// Fewer than two usable points; no slope.
    Insufficient,
}

impl FitFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            FitFlag::Ok => "ok",
            FitFlag::FewPoints => "few-points",
            FitFlag::Insufficient => "insufficient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedOrder {
    pub n: usize,
    /// NaN when fewer than two points are usable.
    pub order: f64,
    pub points_used: usize,
    /// Points dropped because they reached reference precision.
    pub converged_points: usize,
    pub flag: FitFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub r: usize,
    pub interval: Interval,
    pub n_list: Vec<usize>,
    pub h_list: Vec<f64>,
    /// Mesh size of the reference run; 0 when the exact value is used.
    pub reference_h: f64,
    /// `d_n` of the reference, one per entry of `n_list`.
    pub reference: Vec<f64>,
    /// `d_n(h)`, indexed `[n][h]`.
    pub values: Vec<Vec<f64>>,
    /// `|d_n(h) - reference|`, indexed `[n][h]`.
    pub errors: Vec<Vec<f64>>,
    pub orders: Vec<FittedOrder>,
}

/// Interior node count for mesh size `h`, which must divide `b - a`.
pub fn mesh_for(iv: Interval, h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mesh size must be positive, got {h}"
        )));
    }
    let segments = (iv.length() / h).round();
    if segments < 2.0 || ((iv.length() / segments) - h).abs() > 1e-12 * h {
        return Err(Error::InvalidArgument(format!(
            "h = {h} does not split ({}, {}) into at least 2 equal segments",
            iv.a, iv.b
        )));
    }
    Ok(segments as usize - 1)
}

fn widths(r: usize, ns: &[usize], m: usize, iv: Interval, tol_res: f64) -> Result<Vec<f64>> {
    Ok(nwidths::compute(r, ns, m, iv, tol_res)?
        .into_iter()
        .map(|row| row.d_n)
        .collect())
}

fn validate(r: usize, n_list: &[usize], h_list: &[f64]) -> Result<()> {
    if n_list.is_empty() || h_list.is_empty() {
        return Err(Error::InvalidArgument("empty n or h list".into()));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n < r) {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be at least r = {r}"
        )));
    }
    Ok(())
}

/// Runs the pipeline at every `h` and at `h_ref`, which must be finer.
pub fn run_study(
    r: usize,
    n_list: &[usize],
    h_list: &[f64],
    h_ref: f64,
    iv: Interval,
    tol_res: f64,
) -> Result<ConvergenceStudy> {
    validate(r, n_list, h_list)?;
    if let Some(&h) = h_list.iter().find(|&&h| !(h > h_ref)) {
        return Err(Error::InvalidArgument(format!(
            "reference mesh {h_ref} must be finer than every h (got {h})"
        )));
    }
    let mut meshes: Vec<usize> = h_list
        .iter()
        .map(|&h| mesh_for(iv, h))
        .collect::<Result<_>>()?;
    meshes.push(mesh_for(iv, h_ref)?);

    let runs: Vec<Vec<f64>> = meshes
        .par_iter()
        .map(|&m| widths(r, n_list, m, iv, tol_res))
        .collect::<Result<_>>()?;
    let (reference, coarse) = runs.split_last().expect("at least one mesh");
    Ok(assemble_study(
        r,
        n_list,
        h_list,
        h_ref,
        iv,
        reference.clone(),
        coarse,
    ))
}

/// `r = 1` study against the exact widths `(b-a)/(nπ)`.
pub fn run_study_analytic(
    n_list: &[usize],
    h_list: &[f64],
    iv: Interval,
    tol_res: f64,
) -> Result<ConvergenceStudy> {
    validate(1, n_list, h_list)?;
    let meshes: Vec<usize> = h_list
        .iter()
        .map(|&h| mesh_for(iv, h))
        .collect::<Result<_>>()?;
    let runs: Vec<Vec<f64>> = meshes
        .par_iter()
        .map(|&m| widths(1, n_list, m, iv, tol_res))
        .collect::<Result<_>>()?;
    let exact = n_list
        .iter()
        .map(|&n| nwidths::analytic_r1(n, iv))
        .collect::<Result<_>>()?;
    Ok(assemble_study(1, n_list, h_list, 0.0, iv, exact, &runs))
}

fn assemble_study(
    r: usize,
    n_list: &[usize],
    h_list: &[f64],
    reference_h: f64,
    iv: Interval,
    reference: Vec<f64>,
    runs: &[Vec<f64>],
) -> ConvergenceStudy {
    let values: Vec<Vec<f64>> = (0..n_list.len())
        .map(|i| runs.iter().map(|run| run[i]).collect())
        .collect();
    let errors: Vec<Vec<f64>> = values
        .iter()
        .zip(&reference)
        .map(|(row, &d)| row.iter().map(|v| (v - d).abs()).collect())
        .collect();
    let orders = n_list
        .iter()
        .zip(&errors)
        .zip(&reference)
        .map(|((&n, errs), &d)| fit_order(n, h_list, errs, d))
        .collect();
    ConvergenceStudy {
        r,
        interval: iv,
        n_list: n_list.to_vec(),
        h_list: h_list.to_vec(),
        reference_h,
        reference,
        values,
        errors,
        orders,
    }
}

/// Least-squares slope of `log e` against `log h`.
///
/// Points whose error is below `PLATEAU · d_n` are excluded. While more than
/// three points remain, the coarsest one is dropped if it misses the fitted
/// line by more than 25%.
pub fn fit_order(n: usize, hs: &[f64], errors: &[f64], d_n: f64) -> FittedOrder {
    let mut pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errors)
        .map(|(&h, &e)| (h, e))
        .filter(|&(_, e)| e.is_finite())
        .collect();
    let total = pts.len();
    pts.retain(|&(_, e)| e > 0.0 && e >= PLATEAU * d_n.abs());
    let converged_points = total - pts.len();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));

    loop {
        if pts.len() < 2 {
            return FittedOrder {
                n,
                order: f64::NAN,
                points_used: pts.len(),
                converged_points,
                flag: FitFlag::Insufficient,
            };
        }
        let (slope, intercept) = least_squares(&pts);
        let (h0, e0) = pts[0];
        let predicted = (intercept + slope * h0.ln()).exp();
        if pts.len() > 3 && (e0 / predicted - 1.0).abs() > PRE_ASYMPTOTIC_MISFIT {
            pts.remove(0);
            continue;
        }
        return FittedOrder {
            n,
            order: slope,
            points_used: pts.len(),
            converged_points,
            flag: if pts.len() >= 3 {
                FitFlag::Ok
            } else {
                FitFlag::FewPoints
            },
        };
    }
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

impl ConvergenceStudy {
    /// CSV `r,n,h,error`.
    pub fn write_errors_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,n,h,error")?;
        for (n, errs) in self.n_list.iter().zip(&self.errors) {
            for (h, e) in self.h_list.iter().zip(errs) {
                writeln!(out, "{},{},{},{}", self.r, n, fmt_f64(*h), fmt_f64(*e))?;
            }
        }
        Ok(())
    }

    /// CSV `r,n,fitted_order,points_used`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,n,fitted_order,points_used")?;
        for o in &self.orders {
            writeln!(
                out,
                "{},{},{},{}",
                self.r,
                o.n,
                fmt_f64(o.order),
                o.points_used
            )?;
        }
        Ok(())
    }

    /// One gnuplot data block per `n` (`plot 'file' index i using 1:2`),
    /// followed by two blocks with the dashed guides `h^{2r-2}` and
    /// `64 h^{2r}`.
    pub fn write_gnuplot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (n, errs) in self.n_list.iter().zip(&self.errors) {
            writeln!(out, "# r={} n={}", self.r, n)?;
            for (h, e) in self.h_list.iter().zip(errs) {
                writeln!(out, "{} {}", fmt_f64(*h), fmt_f64(*e))?;
            }
            writeln!(out)?;
            writeln!(out)?;
        }
        let low = 2 * self.r as i32 - 2;
        let high = 2 * self.r as i32;
        for (scale, power) in [(1.0, low), (64.0, high)] {
            writeln!(out, "# guide {scale} h^{power}")?;
            for h in &self.h_list {
                writeln!(out, "{} {}", fmt_f64(*h), fmt_f64(scale * h.powi(power)))?;
            }
            writeln!(out)?;
            writeln!(out)?;
        }
        Ok(())
    }
}
