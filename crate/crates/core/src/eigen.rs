//! Largest eigenpairs of a dense symmetric positive matrix.
//!
//! Blocked subspace iteration with Rayleigh–Ritz and full
//! reorthogonalization. The spectrum of a Nyström matrix decays like
//! `k^{-2r}`, so a block of `count + max(count, 8)` vectors converges in a
//! handful of steps. Once every wanted residual is below tolerance, a few
//! polishing steps are run with compensated (double-double accumulated) dot
//! products. Plain summation leaves an absolute error of order `ε λ_1` in
//! every Ritz value, which for large `r` swamps the small eigenvalues; the
//! compensated steps bring the error down to `ε λ_k`.
//!
//! The projected `p × p` problems are solved with cyclic Jacobi, which keeps
//! high relative accuracy on graded, nearly diagonal matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nystrom::{Grid, NystromSystem, SymMatrix};

/// Default residual tolerance relative to `‖A‖_F`.
pub const DEFAULT_TOL_RES: f64 = 1e-10;
/// Budget of subspace iterations.
pub const MAX_ITERATIONS: usize = 1000;
const MAX_POLISH_STEPS: usize = 8;
/// Consecutive eigenvalues closer than this (relative) are reported as a tie.
pub const TIE_TOLERANCE: f64 = 1e-13;
const SEED: u64 = 0x6e77_6964_7468;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    /// 1-based rank by descending eigenvalue.
    pub index: usize,
    pub value: f64,
    /// Values at the interior nodes, scaled to max-norm 1.
    pub vector: Vec<f64>,
}

pub fn top_eigenpairs(sys: &NystromSystem, count: usize, tol_res: f64) -> Result<Vec<Eigenpair>> {
    top_eigenpairs_of(sys.matrix(), count, tol_res)
}

/// Eigenpair contract: sorted by strictly descending positive eigenvalue,
/// residual `‖A v - λ v‖₂ ≤ tol_res ‖A‖_F` for the returned (max-normalized)
/// vectors, and the first entry of each vector that is not negligible is
/// positive.
pub fn top_eigenpairs_of(a: &SymMatrix, count: usize, tol_res: f64) -> Result<Vec<Eigenpair>> {
    solve(a, count, tol_res, true)
}

/// Like [`top_eigenpairs_of`] but returns eigenvalues that are not positive
/// or not strictly decreasing instead of failing. Used where such values are
/// reported as precision-limited rather than treated as errors.
pub fn top_eigenpairs_relaxed(a: &SymMatrix, count: usize, tol_res: f64) -> Result<Vec<Eigenpair>> {
    solve(a, count, tol_res, false)
}

fn solve(a: &SymMatrix, count: usize, tol_res: f64, strict: bool) -> Result<Vec<Eigenpair>> {
    let n = a.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "requested {count} eigenpairs of a {n}x{n} matrix"
        )));
    }
    if !(tol_res > 0.0) {
        return Err(Error::InvalidArgument("tol_res must be positive".into()));
    }
    let fro = a.frobenius_norm();
    let bound = tol_res * fro;
    let p = n.min(count + count.max(8));

    let (values, vectors) = if p == n {
        let mut h = Small::from_fn(n, |i, j| a.get(i, j));
        let (values, y) = jacobi_eigen(&mut h)?;
        let x = Block {
            n,
            p: n,
            data: y.data,
        };
        let ax = block_matvec(a, &x, true);
        let worst = worst_residual(&x, &ax, &values, count);
        if !(worst <= bound) {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: worst,
            });
        }
        (values, x)
    } else {
        subspace_iteration(a, count, p, bound)?
    };

    finalize(&values, &vectors, count, strict)
}

fn subspace_iteration(
    a: &SymMatrix,
    count: usize,
    p: usize,
    bound: f64,
) -> Result<(Vec<f64>, Block)> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut q = Block {
        n,
        p,
        data: (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    orthonormalize(&mut q, &mut rng);

    let mut polishing = false;
    let mut polish_steps = 0;
    let mut previous: Option<Vec<f64>> = None;
    let mut worst = f64::INFINITY;

    for iter in 1..=MAX_ITERATIONS {
        let w = block_matvec(a, &q, polishing);
        let mut h = gram(&q, &w);
        let (theta, y) = jacobi_eigen(&mut h)?;
        let x = mul_small(&q, &y, polishing);
        let ax = mul_small(&w, &y, polishing);
        worst = worst_residual(&x, &ax, &theta, count);

        if polishing {
            polish_steps += 1;
            let settled = previous.as_ref().is_some_and(|prev| {
                prev.iter()
                    .zip(&theta)
                    .all(|(old, new)| (old - new).abs() <= 16.0 * f64::EPSILON * new.abs())
            });
            if worst <= bound
                && ((polish_steps >= 2 && settled) || polish_steps >= MAX_POLISH_STEPS)
            {
                return Ok((theta, x));
            }
        } else if iter >= 2 && worst <= bound {
            polishing = true;
        }
        previous = Some(theta[..count].to_vec());
        q = ax;
        orthonormalize(&mut q, &mut rng);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: worst,
    })
}

fn finalize(values: &[f64], x: &Block, count: usize, strict: bool) -> Result<Vec<Eigenpair>> {
    if strict {
        check_spectrum(&values[..count])?;
    }
    Ok((0..count)
        .map(|k| {
            let mut vector = x.column(k);
            normalize_max(&mut vector);
            Eigenpair {
                index: k + 1,
                value: values[k],
                vector,
            }
        })
        .collect())
}

fn check_spectrum(values: &[f64]) -> Result<()> {
    for (k, &v) in values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveEigenvalue {
                index: k + 1,
                value: v,
            });
        }
        if let Some(&next) = values.get(k + 1) {
            if !(v - next > TIE_TOLERANCE * v) {
                return Err(Error::EigenvalueTie {
                    index: k + 1,
                    next: k + 2,
                    value: v,
                    next_value: next,
                });
            }
        }
    }
    Ok(())
}

/// Scales to max-norm 1 and fixes the sign so that the first entry above
/// `1e-6` in magnitude is positive. Entries in the boundary layer of a high
/// order eigenfunction can be far below rounding noise; the first resolved
/// entry lies before the first zero and carries the same sign.
fn normalize_max(v: &mut [f64]) {
    let Some((imax, max)) = v
        .iter()
        .map(|x| x.abs())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
    else {
        return;
    };
    if max == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .copied()
        .find(|x| x.abs() >= 1e-6 * max)
        .unwrap_or(1.0);
    let sign = lead.signum();
    let peak_sign = v[imax].signum();
    for x in v.iter_mut() {
        *x = sign * (*x / max);
    }
    v[imax] = sign * peak_sign;
}

/// Samples of the discrete eigenfunction on all `m + 2` nodes, with the
/// Dirichlet zeros at both ends.
pub fn eigenfunction_values(pair: &Eigenpair, grid: &Grid) -> Result<Vec<f64>> {
    if pair.vector.len() != grid.m() {
        return Err(Error::InvalidArgument(format!(
            "eigenvector has {} entries but the grid has {} interior nodes",
            pair.vector.len(),
            grid.m()
        )));
    }
    let mut out = Vec::with_capacity(grid.m() + 2);
    out.push(0.0);
    out.extend_from_slice(&pair.vector);
    out.push(0.0);
    Ok(out)
}

/// Row-major `n × p` block of vectors.
#[derive(Debug, Clone)]
struct Block {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Block {
    fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.p + k]).collect()
    }
}

/// Small dense square matrix, row-major.
#[derive(Debug, Clone)]
struct Small {
    n: usize,
    data: Vec<f64>,
}

impl Small {
    fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Running sum with an error-free transformation of every product and
/// addition (Dot2 of Ogita, Rump and Oishi, with Dekker's product so no FMA
/// instruction is needed).
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sum: f64,
    err: f64,
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

#[inline(always)]
fn split(a: f64) -> (f64, f64) {
    let c = SPLITTER * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

impl Acc {
    #[inline(always)]
    fn add_product(&mut self, a: f64, a_split: (f64, f64), b: f64, b_split: (f64, f64)) {
        let prod = a * b;
        let prod_err =
            ((a_split.0 * b_split.0 - prod) + a_split.0 * b_split.1 + a_split.1 * b_split.0)
                + a_split.1 * b_split.1;
        let s = self.sum + prod;
        let bb = s - self.sum;
        let sum_err = (self.sum - (s - bb)) + (prod - bb);
        self.sum = s;
        self.err += prod_err + sum_err;
    }

    #[inline(always)]
    fn value(self) -> f64 {
        self.sum + self.err
    }
}

/// `A · Q`, parallel over rows of `A`. Each row is reduced in a fixed order,
/// so the result does not depend on the thread count.
fn block_matvec(a: &SymMatrix, q: &Block, compensated: bool) -> Block {
    let n = q.n;
    let p = q.p;
    let q_split: Vec<(f64, f64)> = if compensated {
        q.data.iter().map(|&v| split(v)).collect()
    } else {
        Vec::new()
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = a.row(i);
            if compensated {
                let mut acc = vec![Acc::default(); p];
                for (j, &aij) in row.iter().enumerate() {
                    let s = split(aij);
                    let qr = &q.data[j * p..(j + 1) * p];
                    let qs = &q_split[j * p..(j + 1) * p];
                    for k in 0..p {
                        acc[k].add_product(aij, s, qr[k], qs[k]);
                    }
                }
                acc.into_iter().map(Acc::value).collect()
            } else {
                let mut acc = vec![0.0; p];
                for (j, &aij) in row.iter().enumerate() {
                    let qr = &q.data[j * p..(j + 1) * p];
                    for k in 0..p {
                        acc[k] += aij * qr[k];
                    }
                }
                acc
            }
        })
        .collect();
    Block {
        n,
        p,
        data: rows.into_iter().flatten().collect(),
    }
}

/// Upper triangle of `Qᵀ W` (compensated), mirrored.
fn gram(q: &Block, w: &Block) -> Small {
    let p = q.p;
    let mut h = Small::from_fn(p, |_, _| 0.0);
    for j in 0..p {
        for k in j..p {
            let mut acc = Acc::default();
            for i in 0..q.n {
                let a = q.data[i * p + j];
                let b = w.data[i * p + k];
                acc.add_product(a, split(a), b, split(b));
            }
            h.data[j * p + k] = acc.value();
        }
    }
    for j in 0..p {
        for k in 0..j {
            h.data[j * p + k] = h.data[k * p + j];
        }
    }
    h
}

/// `B · Y` for a block `B` and a small square `Y`.
fn mul_small(b: &Block, y: &Small, compensated: bool) -> Block {
    let p = b.p;
    let mut data = vec![0.0; b.n * p];
    for i in 0..b.n {
        let row = &b.data[i * p..(i + 1) * p];
        for k in 0..p {
            data[i * p + k] = if compensated {
                let mut acc = Acc::default();
                for (j, &bij) in row.iter().enumerate() {
                    let yjk = y.at(j, k);
                    acc.add_product(bij, split(bij), yjk, split(yjk));
                }
                acc.value()
            } else {
                row.iter()
                    .enumerate()
                    .map(|(j, &bij)| bij * y.at(j, k))
                    .sum()
            };
        }
    }
    Block { n: b.n, p, data }
}

/// Largest `‖A x_k - θ_k x_k‖₂ / ‖x_k‖_∞` over the first `count` columns,
/// i.e. the residual of the max-normalized vector.
fn worst_residual(x: &Block, ax: &Block, theta: &[f64], count: usize) -> f64 {
    let p = x.p;
    (0..count)
        .map(|k| {
            let mut r2 = 0.0;
            let mut xmax = 0.0f64;
            for i in 0..x.n {
                let xi = x.data[i * p + k];
                let d = ax.data[i * p + k] - theta[k] * xi;
                r2 += d * d;
                xmax = xmax.max(xi.abs());
            }
            r2.sqrt() / xmax
        })
        .fold(0.0, f64::max)
}

/// Modified Gram–Schmidt, two passes. Columns that vanish are replaced by
/// fresh random directions.
fn orthonormalize(q: &mut Block, rng: &mut ChaCha8Rng) {
    let (n, p) = (q.n, q.p);
    for k in 0..p {
        let mut attempts = 0;
        loop {
            let before = col_norm(q, k);
            for _pass in 0..2 {
                for j in 0..k {
                    let mut dot = 0.0;
                    for i in 0..n {
                        dot += q.data[i * p + j] * q.data[i * p + k];
                    }
                    for i in 0..n {
                        q.data[i * p + k] -= dot * q.data[i * p + j];
                    }
                }
            }
            let after = col_norm(q, k);
            if after > 1e-10 * before && after > f64::MIN_POSITIVE {
                for i in 0..n {
                    q.data[i * p + k] /= after;
                }
                break;
            }
            attempts += 1;
            assert!(attempts < 100, "cannot complete an orthonormal basis");
            for i in 0..n {
                q.data[i * p + k] = rng.gen_range(-1.0..1.0);
            }
        }
    }
}

fn col_norm(q: &Block, k: usize) -> f64 {
    (0..q.n)
        .map(|i| q.data[i * q.p + k].powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Cyclic Jacobi for a small symmetric matrix (destroyed). Returns
/// eigenvalues in descending order and the matching eigenvectors as columns
/// of a row-major matrix.
fn jacobi_eigen(h: &mut Small) -> Result<(Vec<f64>, Small)> {
    let n = h.n;
    let mut v = Small::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 });
    let max_sweeps = 100;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = h.data[p * n + q];
                let app = h.data[p * n + p];
                let aqq = h.data[q * n + q];
                // relative threshold keeps small diagonal entries accurate
                if apq == 0.0 || apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() {
                    h.data[p * n + q] = 0.0;
                    h.data[q * n + p] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let hkp = h.data[k * n + p];
                    let hkq = h.data[k * n + q];
                    h.data[k * n + p] = c * hkp - s * hkq;
                    h.data[k * n + q] = s * hkp + c * hkq;
                }
                for k in 0..n {
                    let hpk = h.data[p * n + k];
                    let hqk = h.data[q * n + k];
                    h.data[p * n + k] = c * hpk - s * hqk;
                    h.data[q * n + k] = s * hpk + c * hqk;
                }
                h.data[p * n + p] = app - t * apq;
                h.data[q * n + q] = aqq + t * apq;
                h.data[p * n + q] = 0.0;
                h.data[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v.data[k * n + p];
                    let vkq = v.data[k * n + q];
                    v.data[k * n + p] = c * vkp - s * vkq;
                    v.data[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_sweeps,
            residual: f64::NAN,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| h.at(j, j).total_cmp(&h.at(i, i)));
    let values = order.iter().map(|&i| h.at(i, i)).collect();
    let sorted = Small::from_fn(n, |i, k| v.at(i, order[k]));
    Ok((values, sorted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Interval, Kernel};
    use crate::nystrom::{assemble, build_grid};

    fn system(r: usize, iv: Interval, m: usize) -> NystromSystem {
        assemble(&Kernel::new(r, iv).unwrap(), &build_grid(iv, m).unwrap()).unwrap()
    }

    #[test]
    fn one_by_one() {
        let a = SymMatrix::from_row_major(1, vec![0.125]).unwrap();
        let pairs = top_eigenpairs_of(&a, 1, DEFAULT_TOL_RES).unwrap();
        assert_eq!(pairs[0].value, 0.125);
        assert_eq!(pairs[0].vector, vec![1.0]);
    }

    #[test]
    fn diagonal_matrix() {
        let d = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = d[i];
        }
        let a = SymMatrix::from_row_major(n, data).unwrap();
        let pairs = top_eigenpairs_of(&a, 3, DEFAULT_TOL_RES).unwrap();
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        assert_eq!(values, vec![9.0, 4.0, 3.0]);
        assert_eq!(pairs[0].vector[4], 1.0);
    }

    #[test]
    fn rejects_bad_counts() {
        let a = SymMatrix::from_row_major(1, vec![1.0]).unwrap();
        assert!(top_eigenpairs_of(&a, 0, DEFAULT_TOL_RES).is_err());
        assert!(top_eigenpairs_of(&a, 2, DEFAULT_TOL_RES).is_err());
    }

    #[test]
    fn ties_are_errors() {
        let a = SymMatrix::from_row_major(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            top_eigenpairs_of(&a, 2, DEFAULT_TOL_RES),
            Err(Error::EigenvalueTie { .. })
        ));
    }

    #[test]
    fn r1_first_eigenvalue() {
        let sys = system(1, Interval::unit(), 255);
        let pairs = top_eigenpairs(&sys, 3, DEFAULT_TOL_RES).unwrap();
        let h = sys.grid().h();
        for (k, pair) in pairs.iter().enumerate() {
            let exact = (1.0 / ((k + 1) as f64 * std::f64::consts::PI)).powi(2);
            // trapezoid error is O(h²) with a constant growing like k²
            assert!((pair.value - exact).abs() / exact < h * h * (k + 1).pow(2) as f64);
        }
    }

    #[test]
    fn sign_changes_and_normalization() {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        for r in [1, 2, 4] {
            let sys = system(r, iv, 300);
            let pairs = top_eigenpairs(&sys, 6, DEFAULT_TOL_RES).unwrap();
            for pair in &pairs {
                let max = pair.vector.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert_eq!(max, 1.0);
                assert!(pair.vector[0] > 0.0);
                let changes = pair.vector.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
                assert_eq!(changes, pair.index - 1, "r={r} k={}", pair.index);
            }
        }
    }

    #[test]
    fn eigenfunction_padding() {
        let grid = build_grid(Interval::unit(), 1).unwrap();
        let pair = Eigenpair {
            index: 1,
            value: 0.125,
            vector: vec![1.0],
        };
        assert_eq!(
            eigenfunction_values(&pair, &grid).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        let bad = Eigenpair {
            vector: vec![1.0, 0.5],
            ..pair
        };
        assert!(eigenfunction_values(&bad, &grid).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let sys = system(3, Interval::unit(), 200);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let a = one.install(|| top_eigenpairs(&sys, 4, DEFAULT_TOL_RES).unwrap());
        let b = three.install(|| top_eigenpairs(&sys, 4, DEFAULT_TOL_RES).unwrap());
        assert_eq!(a, b);
    }
}
