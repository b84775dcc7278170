//! Cox-de Boor evaluation of an open-uniform B-spline basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do with a value outside the boundary knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRange {
    #[default]
    Clamp,
    Error,
}

/// B-spline basis of a given degree with boundary knots replicated
/// `degree + 1` times.
#[derive(Debug, Clone, PartialEq)]
pub struct BsplineBasis {
    degree: usize,
    lo: f64,
    hi: f64,
    inner: Vec<f64>,
    knots: Vec<f64>,
}

impl BsplineBasis {
    pub fn new(degree: usize, lo: f64, hi: f64, inner: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "boundary knots [{lo}, {hi}] must be finite and increasing"
            )));
        }
        let mut prev = lo;
        for &k in &inner {
            if !(k > prev && k < hi) {
                return Err(Error::InvalidArgument(format!(
                    "inner knots {inner:?} must be strictly increasing inside ({lo}, {hi})"
                )));
            }
            prev = k;
        }
        let mut knots = Vec::with_capacity(inner.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat(lo).take(degree + 1));
        knots.extend_from_slice(&inner);
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        Ok(Self {
            degree,
            lo,
            hi,
            inner,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn inner_knots(&self) -> &[f64] {
        &self.inner
    }

    /// `n_inner_knots + degree + 1`.
    pub fn dim(&self) -> usize {
        self.inner.len() + self.degree + 1
    }

    /// Basis values at `x`. The returned flag is true when `x` was clamped.
    pub fn eval(&self, x: f64, policy: OutOfRange) -> Result<(Vec<f64>, bool)> {
        let mut out = vec![0.0; self.dim()];
        let clamped = self.eval_into(x, policy, &mut out)?;
        Ok((out, clamped))
    }

    /// Writes the basis into `out` (length [`dim`](Self::dim)).
    pub fn eval_into(&self, x: f64, policy: OutOfRange, out: &mut [f64]) -> Result<bool> {
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot evaluate spline at {x}"
            )));
        }
        let mut clamped = false;
        let x = if x < self.lo || x > self.hi {
            if policy == OutOfRange::Error {
                return Err(Error::OutOfRange {
                    value: x,
                    lo: self.lo,
                    hi: self.hi,
                });
            }
            clamped = true;
            x.clamp(self.lo, self.hi)
        } else {
            x
        };

        let p = self.degree;
        let t = &self.knots;
        // span index mu with t[mu] <= x < t[mu + 1]; the right boundary
        // belongs to the last non-empty span
        let last = t.len() - p - 2;
        let mu = if x >= self.hi {
            last
        } else {
            let mut mu = p;
            while mu < last && t[mu + 1] <= x {
                mu += 1;
            }
            mu
        };

        // triangular Cox-de Boor table over the p + 1 nonzero functions
        let mut n = vec![0.0; p + 1];
        n[0] = 1.0;
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, v) in n.into_iter().enumerate() {
            out[mu - p + r] = v;
        }
        Ok(clamped)
    }
}

/// Basis values at `x` for the given degree, boundary and inner knots;
/// out-of-range inputs are clamped.
pub fn bspline_basis(x: f64, degree: usize, lo: f64, hi: f64, inner: &[f64]) -> Result<Vec<f64>> {
    let basis = BsplineBasis::new(degree, lo, hi, inner.to_vec())?;
    basis.eval(x, OutOfRange::Clamp).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Textbook recursion on the full knot vector, used as an oracle.
    fn cox_de_boor(i: usize, p: usize, t: &[f64], x: f64, hi: f64) -> f64 {
        if p == 0 {
            let last_span = x == hi && t[i] < t[i + 1] && t[i + 1] == hi;
            return if (t[i] <= x && x < t[i + 1]) || last_span {
                1.0
            } else {
                0.0
            };
        }
        let mut v = 0.0;
        let d1 = t[i + p] - t[i];
        if d1 > 0.0 {
            v += (x - t[i]) / d1 * cox_de_boor(i, p - 1, t, x, hi);
        }
        let d2 = t[i + p + 1] - t[i + 1];
        if d2 > 0.0 {
            v += (t[i + p + 1] - x) / d2 * cox_de_boor(i + 1, p - 1, t, x, hi);
        }
        v
    }

    #[test]
    fn constant_basis() {
        assert_eq!(bspline_basis(0.5, 0, 0.0, 1.0, &[]).unwrap(), vec![1.0]);
    }

    #[test]
    fn hat_functions() {
        let v = bspline_basis(0.25, 1, 0.0, 1.0, &[0.5]).unwrap();
        assert_eq!(v.len(), 3);
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cubic_with_seventeen_knots() {
        let inner: Vec<f64> = (1..=17).map(|k| 25.0 + 40.0 * k as f64 / 18.0).collect();
        for x in [25.0, 30.3, 44.9, 65.0] {
            let v = bspline_basis(x, 3, 25.0, 65.0, &inner).unwrap();
            assert_eq!(v.len(), 21);
            assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn right_boundary_and_clamping() {
        let b = BsplineBasis::new(3, 0.0, 1.0, vec![0.3, 0.6]).unwrap();
        let (v, clamped) = b.eval(1.0, OutOfRange::Clamp).unwrap();
        assert!(!clamped);
        assert_abs_diff_eq!(v[v.len() - 1], 1.0, epsilon = 1e-15);
        let (w, clamped) = b.eval(1.7, OutOfRange::Clamp).unwrap();
        assert!(clamped);
        assert_eq!(v, w);
        assert!(matches!(
            b.eval(-0.1, OutOfRange::Error),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(BsplineBasis::new(3, 0.0, 1.0, vec![0.5, 0.5]).is_err());
        assert!(BsplineBasis::new(3, 0.0, 1.0, vec![1.0]).is_err());
        assert!(BsplineBasis::new(3, 1.0, 1.0, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_local_support(
            degree in 0usize..5,
            raw in proptest::collection::vec(0.01f64..0.99, 0..12),
            u in 0.0f64..=1.0,
        ) {
            let mut inner = raw;
            inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
            inner.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let lo = -2.0;
            let hi = 3.0;
            let inner: Vec<f64> = inner.into_iter().map(|k| lo + (hi - lo) * k).collect();
            let x = lo + (hi - lo) * u;
            let b = BsplineBasis::new(degree, lo, hi, inner).unwrap();
            let (v, _) = b.eval(x, OutOfRange::Error).unwrap();
            prop_assert_eq!(v.len(), b.dim());
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(v.iter().filter(|&&c| c != 0.0).count() <= degree + 1);
            prop_assert!(v.iter().all(|&c| c >= -1e-15));
            for (i, &vi) in v.iter().enumerate() {
                let o = cox_de_boor(i, degree, &b.knots, x, hi);
                prop_assert!((vi - o).abs() < 1e-12, "basis {} : {} vs {}", i, vi, o);
            }
        }
    }
}
