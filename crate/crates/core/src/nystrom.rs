//! Trapezoid-rule Nyström discretization of `∫ g(x, y) φ(y) dy = λ φ(x)`.
//!
//! On the uniform grid `ξ_k = a + k h`, `h = (b-a)/(m+1)`, the boundary terms
//! vanish because `g(·, a) = g(·, b) = 0`, leaving the `m × m` matrix
//! `A[k][l] = h · g(ξ_k, ξ_l)` over the interior nodes. The factor `h` is kept
//! in the matrix so its eigenvalues approximate those of the integral operator
//! directly.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Interval, Kernel};
use crate::output::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    interval: Interval,
    m: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// Number of interior nodes.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// All `m + 2` nodes, boundary included.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interior(&self) -> &[f64] {
        &self.nodes[1..=self.m]
    }
}

pub fn build_grid(iv: Interval, m: usize) -> Result<Grid> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "the grid needs at least one interior node (m >= 1)".into(),
        ));
    }
    let iv = Interval::new(iv.a, iv.b)?;
    let h = iv.length() / (m + 1) as f64;
    let mut nodes: Vec<f64> = (0..=m).map(|k| iv.a + k as f64 * h).collect();
    nodes.push(iv.b);
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "m = {m} is too large for the interval ({}, {}) in float64",
            iv.a, iv.b
        )));
    }
    Ok(Grid {
        interval: iv,
        m,
        h,
        nodes,
    })
}

/// Dense symmetric matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Wraps row-major data. Fails unless the data is square and exactly
    /// symmetric.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "expected {n}x{n} entries, got {}",
                data.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j].to_bits() != data[j * n + i].to_bits() {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Whitespace-separated rows, one per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NystromSystem {
    kernel: Kernel,
    grid: Grid,
    matrix: SymMatrix,
}

impl NystromSystem {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }
}

/// Assembles `A = h · [g(ξ_k, ξ_l)]`.
///
/// The uniform grid is symmetric about the midpoint and the kernel is
/// invariant under `x → a + b - x`, so `A` is persymmetric as well as
/// symmetric. Only entries with `k ≤ l` and `k + l ≤ m - 1` are evaluated
/// (rows in parallel); the rest are copies. Copying makes both symmetries
/// hold bit-exactly.
pub fn assemble(kernel: &Kernel, grid: &Grid) -> Result<NystromSystem> {
    if kernel.interval() != grid.interval() {
        return Err(Error::InvalidArgument(format!(
            "kernel interval {:?} differs from grid interval {:?}",
            kernel.interval(),
            grid.interval()
        )));
    }
    let m = grid.m();
    let h = grid.h();
    let xs = grid.interior();

    let rows: Vec<Vec<f64>> = (0..m.div_ceil(2))
        .into_par_iter()
        .map_init(
            || kernel.workspace(),
            |ws, i| {
                xs[i..m - i]
                    .iter()
                    .map(|&y| kernel.eval_with(ws, xs[i], y).map(|g| h * g))
                    .collect::<Result<Vec<f64>>>()
            },
        )
        .collect::<Result<_>>()?;

    let mut data = vec![0.0; m * m];
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            for (p, q) in [
                (i, j),
                (j, i),
                (m - 1 - j, m - 1 - i),
                (m - 1 - i, m - 1 - j),
            ] {
                data[p * m + q] = v;
            }
        }
    }
    Ok(NystromSystem {
        kernel: *kernel,
        grid: grid.clone(),
        matrix: SymMatrix { n: m, data },
    })
}
