//! Single B-splines evaluated with the Cox–de Boor recurrence.
//!
//! A [`KnotVector`] of `p + 2` nondecreasing knots defines exactly one
//! normalized B-spline of degree `p`. To evaluate it, the knot vector is padded
//! on both sides with `p + 1` artificial knots so the target becomes one member
//! of a local basis; the triangular recurrence then yields all `p + 1`
//! nonzero basis functions on the knot span containing `x`, and the entry
//! belonging to the target is returned.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        validate(&knots)?;
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.len() - 2
    }

    /// Value of the B-spline at `x`.
    ///
    /// Right-continuous at interior knots, zero outside `[first, last]`, and
    /// the left limit at `x == last`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut ws = Workspace::with_degree(self.degree());
        eval_unchecked(&self.knots, x, &mut ws)
    }
}

fn validate(knots: &[f64]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::InvalidKnots(format!(
            "need at least 2 knots, got {}",
            knots.len()
        )));
    }
    if knots.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidKnots("knots must be finite".into()));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
    }
    if knots[0] == knots[knots.len() - 1] {
        return Err(Error::InvalidKnots("all knots are equal".into()));
    }
    Ok(())
}

/// Scratch buffers for repeated evaluations at a fixed maximum degree.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    padded: Vec<f64>,
    basis: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Workspace {
    pub fn with_degree(p: usize) -> Self {
        Self {
            padded: Vec::with_capacity(3 * p + 4),
            basis: vec![0.0; p + 1],
            left: vec![0.0; p + 1],
            right: vec![0.0; p + 1],
        }
    }
}

/// Evaluates the B-spline on `knots` at `x` without validating the knots.
///
/// The caller guarantees the invariants of [`KnotVector`].
pub fn eval_unchecked(knots: &[f64], x: f64, ws: &mut Workspace) -> f64 {
    let p = knots.len() - 2;
    let first = knots[0];
    let last = knots[p + 1];
    if !(x >= first && x <= last) {
        return 0.0;
    }

    let offset = (last - first).max(1.0);
    let lo = first - offset;
    let hi = last + offset;
    ws.padded.clear();
    ws.padded.extend(std::iter::repeat_n(lo, p + 1));
    ws.padded.extend_from_slice(knots);
    ws.padded.extend(std::iter::repeat_n(hi, p + 1));
    let t = &ws.padded;

    // Real knots occupy t[p + 1 ..= 2p + 2]; the target spline starts at p + 1.
    let target = p + 1;
    let span = if x < last {
        // largest mu with t[mu] <= x < t[mu + 1]
        let mut mu = target;
        while t[mu + 1] <= x {
            mu += 1;
        }
        mu
    } else {
        // left limit at the last knot: t[mu] < x <= t[mu + 1]
        let mut mu = 2 * p + 1;
        while t[mu] >= x {
            mu -= 1;
        }
        mu
    };

    if ws.basis.len() < p + 1 {
        ws.basis.resize(p + 1, 0.0);
        ws.left.resize(p + 1, 0.0);
        ws.right.resize(p + 1, 0.0);
    }
    let n = &mut ws.basis;
    let left = &mut ws.left;
    let right = &mut ws.right;
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            // t[span + r + 1] > t[span + r + 1 - j] because the span is
            // nondegenerate, so no 0/0 can occur here.
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }

    // n[i] holds the basis function starting at t[span - p + i].
    let first_index = span - p;
    if target < first_index || target > span {
        return 0.0;
    }
    n[target - first_index]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(knots: &[f64], x: f64) -> f64 {
        KnotVector::new(knots.to_vec()).unwrap().eval(x)
    }

    #[test]
    fn linear_hat() {
        assert_eq!(b(&[0.0, 1.0, 2.0], 1.0), 1.0);
        assert!((b(&[0.0, 0.5, 1.0], 0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_with_double_end_knots() {
        // (x-a)^2/((y-a)^2 (b-a)^2) ((b-a)(y-x) + 2(b-x)(y-a)) at a=0, b=1, y=0.6, x=0.3
        assert!((b(&[0.0, 0.0, 0.6, 1.0, 1.0], 0.3) - 0.285).abs() < 1e-15);
    }

    #[test]
    fn mirrored_quadratic() {
        // B[0,0,0.5,1,1] is symmetric about 0.5; closed form at 0.25:
        // 0.0625/(0.25*1) * (0.25 + 2*0.75*0.5) = 0.25
        let left = b(&[0.0, 0.0, 0.5, 1.0, 1.0], 0.25);
        let right = b(&[0.0, 0.0, 0.5, 1.0, 1.0], 0.75);
        assert!((left - 0.25).abs() < 1e-15);
        assert!((right - 0.25).abs() < 1e-15);
    }

    #[test]
    fn last_knot_is_left_limit() {
        assert_eq!(b(&[0.0, 0.0, 0.6, 1.0, 1.0], 1.0), 0.0);
        // simple last knot of a constant: left limit is 1
        assert_eq!(b(&[0.0, 1.0], 1.0), 1.0);
        assert_eq!(b(&[0.0, 1.0], 0.0), 1.0);
        assert_eq!(b(&[0.0, 1.0], 1.5), 0.0);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(KnotVector::new(vec![0.0, 1.0, 0.5]).is_err());
        assert!(KnotVector::new(vec![0.3, 0.3, 0.3]).is_err());
        assert!(KnotVector::new(vec![0.0]).is_err());
        assert!(KnotVector::new(vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn partition_of_unity_on_uniform_knots() {
        for p in 0..8usize {
            let knots: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
            let mut ws = Workspace::with_degree(p);
            // interior points are covered by p + 1 splines
            let lo = knots[p];
            let hi = knots[knots.len() - 1 - p];
            for s in 0..200 {
                let x = lo + (hi - lo) * (s as f64 + 0.37) / 200.0;
                let sum: f64 = knots
                    .windows(p + 2)
                    .map(|w| eval_unchecked(w, x, &mut ws))
                    .sum();
                assert!((sum - 1.0).abs() < 1e-12, "p={p} x={x} sum={sum}");
            }
        }
    }

    fn sorted_knots(p: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, p + 2).prop_filter_map("distinct ends", |mut v| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (v[v.len() - 1] - v[0] > 1e-3).then_some(v)
        })
    }

    proptest! {
        #[test]
        fn nonnegative_and_supported(knots in (0usize..7).prop_flat_map(sorted_knots), x in -4.0f64..4.0) {
            let kv = KnotVector::new(knots.clone()).unwrap();
            let v = kv.eval(x);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= 1.0 + 1e-12);
            if x < knots[0] || x > knots[knots.len() - 1] {
                prop_assert_eq!(v, 0.0);
            }
        }

        #[test]
        fn matches_explicit_hat(a in -2.0f64..0.0, ya in 0.01f64..1.0, yb in 0.01f64..1.0, s in 0.0f64..1.0) {
            let y = a + ya;
            let bb = y + yb;
            let x = a + s * (bb - a);
            let expected = if x <= y { (x - a) / (y - a) } else { (bb - x) / (bb - y) };
            let got = KnotVector::new(vec![a, y, bb]).unwrap().eval(x);
            prop_assert!((got - expected).abs() <= 1e-14, "got {got} expected {expected}");
        }
    }
}
