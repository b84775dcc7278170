//! ℓ1-penalized logistic regression by coordinate descent.
//!
//! Minimizes `(1/n) Σ [log(1 + e^η) - y η] + λ‖β‖₁` over standardized
//! columns with an unpenalized intercept. Each outer step forms the
//! weighted least-squares approximation of the log-likelihood, solves the
//! penalized quadratic by cyclic coordinate descent (full sweeps alternating
//! with sweeps over the active set), and takes a backtracking step on the
//! exact penalized objective. Stopping is on the KKT residual.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::cv::CvCurve;
use crate::domain::{expit, logit};
use crate::error::{Error, Result};

/// Columns with a standard deviation at or below this are treated as constant
/// and get a zero coefficient.
const MIN_SCALE: f64 = 1e-10;
/// Floor on the IRLS weights `p (1 - p)`.
const MIN_WEIGHT: f64 = 1e-12;
const MAX_OUTER: usize = 1_000;
/// Sweep cap for one inner solve.
const MAX_INNER: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the KKT residual (standardized scale).
    pub tol_kkt: f64,
    /// Budget of coordinate-descent sweeps.
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-7,
            max_iter: 100_000,
        }
    }
}

/// Per-column centering and scaling applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Zero marks a column that was constant on the fitting rows.
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }
}

/// Fitted logistic model with coefficients on the original column scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub standardization: Standardization,
    pub converged: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Mean training negative log-likelihood.
    pub train_loss: f64,
    pub cv: Option<CvCurve>,
    pub warnings: Vec<String>,
}

impl LogitModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&b| b != 0.0).count()
    }

    pub fn linear_predictor(&self, rows: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(
            rows.ncols(),
            self.coefficients.len(),
            "row width does not match model"
        );
        let mut eta = vec![self.intercept; rows.nrows()];
        for (j, &b) in self.coefficients.iter().enumerate() {
            if b != 0.0 {
                for (e, &x) in eta.iter_mut().zip(rows.column(j).iter()) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    /// Intercept and slopes on the standardized scale used while fitting.
    pub fn standardized_coefficients(&self) -> (f64, Vec<f64>) {
        let s = &self.standardization;
        let slopes: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&s.scale)
            .map(|(&b, &sc)| if sc > 0.0 { b * sc } else { 0.0 })
            .collect();
        let b0 = self.intercept
            + slopes
                .iter()
                .zip(s.mean.iter().zip(&s.scale))
                .filter(|(_, (_, &sc))| sc > 0.0)
                .map(|(&b, (&m, &sc))| b * m / sc)
                .sum::<f64>();
        (b0, slopes)
    }

    /// Linear predictor computed from standardized columns and coefficients.
    pub fn linear_predictor_standardized(&self, rows: &DMatrix<f64>) -> Vec<f64> {
        let (b0, slopes) = self.standardized_coefficients();
        let s = &self.standardization;
        let mut eta = vec![b0; rows.nrows()];
        for (j, &b) in slopes.iter().enumerate() {
            if b != 0.0 {
                let (m, sc) = (s.mean[j], s.scale[j]);
                for (e, &x) in eta.iter_mut().zip(rows.column(j).iter()) {
                    *e += b * (x - m) / sc;
                }
            }
        }
        eta
    }
}

/// Logistic probabilities clipped into `[epsilon, 1 - epsilon]`.
pub fn predict_proba(model: &LogitModel, rows: &DMatrix<f64>, epsilon: f64) -> Vec<f64> {
    model
        .linear_predictor(rows)
        .into_iter()
        .map(|e| expit(e).clamp(epsilon, 1.0 - epsilon))
        .collect()
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        let x: &[f64; 8] = x.try_into().expect("chunk of 8");
        let y: &[f64; 8] = y.try_into().expect("chunk of 8");
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `y += alpha * x`
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn check_labels(design: &DMatrix<f64>, labels: &[u8]) -> Result<()> {
    if labels.len() != design.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} design rows",
            labels.len(),
            design.nrows()
        )));
    }
    if labels.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two rows to fit".into(),
        ));
    }
    if labels.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0/1".into()));
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "design contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Standardized fitting problem shared by every λ on a path.
pub(crate) struct Problem {
    n: usize,
    n_features: usize,
    /// Standardized non-constant columns, `n x q`.
    xs: DMatrix<f64>,
    /// Original index of each column of `xs`.
    index: Vec<usize>,
    y: DVector<f64>,
    ybar: f64,
    std: Standardization,
}

/// Iterate on the standardized scale.
#[derive(Debug, Clone)]
pub(crate) struct State {
    b0: f64,
    beta: Vec<f64>,
    eta: Vec<f64>,
}

/// IRLS weights and the weighted Gram matrix (row-major, intercept first)
/// of the intercept and `cols`, scaled by 1/n.
struct Gram {
    w: Vec<f64>,
    cols: Vec<usize>,
    gram: Vec<f64>,
}

impl Problem {
    pub(crate) fn new(design: &DMatrix<f64>, labels: &[u8]) -> Result<Self> {
        check_labels(design, labels)?;
        let n = design.nrows();
        let p = design.ncols();
        let nf = n as f64;
        let mut mean = vec![0.0; p];
        let mut scale = vec![0.0; p];
        let mut index = Vec::new();
        for j in 0..p {
            let c = design.column(j);
            let m = c.sum() / nf;
            let var = c.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / nf;
            let sd = var.sqrt();
            mean[j] = m;
            if sd > MIN_SCALE {
                scale[j] = sd;
                index.push(j);
            }
        }
        let xs = DMatrix::from_fn(n, index.len(), |i, k| {
            let j = index[k];
            (design[(i, j)] - mean[j]) / scale[j]
        });
        let y = DVector::from_iterator(n, labels.iter().map(|&v| v as f64));
        let ybar = y.sum() / nf;
        Ok(Self {
            n,
            n_features: p,
            xs,
            index,
            y,
            ybar,
            std: Standardization { mean, scale },
        })
    }

    fn col(&self, k: usize) -> &[f64] {
        &self.xs.as_slice()[k * self.n..(k + 1) * self.n]
    }

    /// `(1/n) X^T v` over the standardized columns.
    fn xt_dot(&self, v: &[f64]) -> Vec<f64> {
        let nf = self.n as f64;
        (0..self.xs.ncols())
            .map(|k| dot(self.col(k), v) / nf)
            .collect()
    }

    pub(crate) fn single_class(&self) -> bool {
        self.ybar == 0.0 || self.ybar == 1.0
    }

    /// Smallest λ at which every slope is zero.
    pub(crate) fn lambda_max(&self) -> f64 {
        let centered: Vec<f64> = self.y.iter().map(|&y| y - self.ybar).collect();
        self.xt_dot(&centered)
            .iter()
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    pub(crate) fn null_state(&self) -> State {
        let b0 = logit(self.ybar.clamp(1e-12, 1.0 - 1e-12));
        State {
            b0,
            beta: vec![0.0; self.xs.ncols()],
            eta: vec![b0; self.n],
        }
    }

    fn loss(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(self.y.iter())
            .map(|(&e, &y)| log1p_exp(e) - y * e)
            .sum::<f64>()
            / self.n as f64
    }

    /// Max violation of the optimality conditions given the residual
    /// `p - y` at the current iterate.
    fn kkt_from_resid(&self, beta: &[f64], resid: &[f64], lambda: f64) -> f64 {
        let nf = self.n as f64;
        let g = self.xt_dot(resid);
        let mut worst = (resid.iter().sum::<f64>() / nf).abs();
        for (&gj, &b) in g.iter().zip(beta) {
            let v = if b == 0.0 {
                (gj.abs() - lambda).max(0.0)
            } else {
                (gj + lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Max violation of the optimality conditions at `state`.
    pub(crate) fn kkt_residual(&self, state: &State, lambda: f64) -> f64 {
        let resid: Vec<f64> = state
            .eta
            .iter()
            .zip(self.y.iter())
            .map(|(&e, &y)| expit(e) - y)
            .collect();
        self.kkt_from_resid(&state.beta, &resid, lambda)
    }

    /// Runs proximal Newton from `state` until the KKT residual drops below
    /// `opts.tol_kkt`. Returns the number of coordinate sweeps used; a
    /// screening pass over all columns counts as one sweep.
    pub(crate) fn solve(&self, state: &mut State, lambda: f64, opts: &FitOptions) -> Result<usize> {
        let n = self.n;
        let nf = n as f64;
        let q = self.xs.ncols();
        let mut sweeps = 0usize;

        let mut resid = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut d_eta = vec![0.0; n];
        let mut eta_try = vec![0.0; n];
        let mut stalled = 0;

        for _outer in 0..MAX_OUTER {
            for i in 0..n {
                resid[i] = expit(state.eta[i]) - self.y[i];
            }
            let kkt = self.kkt_from_resid(&state.beta, &resid, lambda);
            if kkt <= opts.tol_kkt {
                return Ok(sweeps);
            }
            if sweeps >= opts.max_iter {
                return Err(self.non_convergence(state, lambda, kkt, sweeps));
            }
            let w: Vec<f64> = state
                .eta
                .iter()
                .map(|&e| {
                    let p = expit(e);
                    (p * (1.0 - p)).max(MIN_WEIGHT)
                })
                .collect();
            let cols: Vec<usize> = (0..q).filter(|&j| state.beta[j] != 0.0).collect();
            let mut gram = self.build_gram(w, cols);
            // inexact inner solve: tighten as the outer residual shrinks
            let inner_tol = 1e-2 * opts.tol_kkt.max(1e-2 * kkt).powi(2);
            for i in 0..n {
                r[i] = -resid[i] / gram.w[i];
            }

            // penalized weighted least squares for the step: coordinate
            // descent over the active columns, then screen every column
            let mut b0 = state.b0;
            let mut beta = state.beta.clone();
            let mut first = true;
            loop {
                let wr: Vec<f64> = gram.w.iter().zip(&r).map(|(&wi, &ri)| wi * ri).collect();
                let g = self.xt_dot(&wr);
                sweeps += 1;
                let entering: Vec<usize> = (0..q)
                    .filter(|&j| beta[j] == 0.0 && g[j].abs() > lambda && !gram.cols.contains(&j))
                    .collect();
                if entering.is_empty() && !first {
                    break;
                }
                first = false;
                self.extend_gram(&mut gram, &entering);
                sweeps += self.active_sweeps(
                    &gram,
                    &mut beta,
                    &mut b0,
                    &mut r,
                    lambda,
                    inner_tol,
                    opts.max_iter.saturating_sub(sweeps).min(MAX_INNER),
                );
                if sweeps >= opts.max_iter {
                    break;
                }
            }

            // direction in linear-predictor space: X δ = (y - p)/w - r
            let mut grad_dot = 0.0;
            for i in 0..n {
                d_eta[i] = -resid[i] / gram.w[i] - r[i];
                grad_dot += resid[i] * d_eta[i];
            }
            grad_dot /= nf;
            let l1_old: f64 = state.beta.iter().map(|b| b.abs()).sum();
            let l1_new: f64 = beta.iter().map(|b| b.abs()).sum();
            let decrease = grad_dot + lambda * (l1_new - l1_old);
            let f_old = self.loss(&state.eta) + lambda * l1_old;

            let mut step = 1.0;
            let mut accepted = false;
            let mut gain = 0.0;
            for _ in 0..60 {
                for i in 0..n {
                    eta_try[i] = state.eta[i] + step * d_eta[i];
                }
                let l1_try: f64 = state
                    .beta
                    .iter()
                    .zip(&beta)
                    .map(|(&a, &b)| (a + step * (b - a)).abs())
                    .sum();
                let f_try = self.loss(&eta_try) + lambda * l1_try;
                if f_try <= f_old + 1e-4 * step * decrease.min(0.0) {
                    accepted = true;
                    gain = f_old - f_try;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                let kkt = self.kkt_residual(state, lambda);
                if kkt <= opts.tol_kkt {
                    return Ok(sweeps);
                }
                return Err(self.non_convergence(state, lambda, kkt, sweeps));
            }
            state.b0 += step * (b0 - state.b0);
            for (a, &b) in state.beta.iter_mut().zip(&beta) {
                // full steps keep the exact zeros produced by thresholding
                *a = if step == 1.0 { b } else { *a + step * (b - *a) };
            }
            std::mem::swap(&mut state.eta, &mut eta_try);
            // progress below rounding level: further steps cannot help
            if gain <= 1e-14 * f_old.abs() {
                stalled += 1;
                if stalled >= 3 {
                    let kkt = self.kkt_residual(state, lambda);
                    if kkt <= opts.tol_kkt {
                        return Ok(sweeps);
                    }
                    return Err(self.non_convergence(state, lambda, kkt, sweeps));
                }
            } else {
                stalled = 0;
            }
        }
        let kkt = self.kkt_residual(state, lambda);
        if kkt <= opts.tol_kkt {
            Ok(sweeps)
        } else {
            Err(self.non_convergence(state, lambda, kkt, sweeps))
        }
    }

    /// Weighted Gram matrix over the intercept and `cols`, scaled by 1/n.
    fn build_gram(&self, w: Vec<f64>, cols: Vec<usize>) -> Gram {
        let mut cache = Gram {
            w,
            cols: Vec::new(),
            gram: Vec::new(),
        };
        let total: f64 = cache.w.iter().sum();
        cache.gram.push(total / self.n as f64);
        self.extend_gram(&mut cache, &cols);
        cache
    }

    /// Appends `new` columns, computing only the new entries.
    fn extend_gram(&self, cache: &mut Gram, new: &[usize]) {
        if new.is_empty() {
            return;
        }
        let nf = self.n as f64;
        let m0 = cache.cols.len() + 1;
        let m = m0 + new.len();
        let mut gram = vec![0.0; m * m];
        for k in 0..m0 {
            gram[k * m..k * m + m0].copy_from_slice(&cache.gram[k * m0..(k + 1) * m0]);
        }
        let mut all: Vec<usize> = cache.cols.clone();
        all.extend_from_slice(new);
        for (e, &j) in new.iter().enumerate() {
            let k = m0 + e;
            let wx: Vec<f64> = self
                .col(j)
                .iter()
                .zip(&cache.w)
                .map(|(&x, &w)| x * w)
                .collect();
            let g0 = wx.iter().sum::<f64>() / nf;
            gram[k] = g0;
            gram[k * m] = g0;
            for l in 1..=k {
                let g = dot(&wx, self.col(all[l - 1])) / nf;
                gram[k * m + l] = g;
                gram[l * m + k] = g;
            }
        }
        cache.cols = all;
        cache.gram = gram;
    }

    /// Coordinate descent over the Gram columns and the intercept with
    /// covariance updates, so a sweep costs O(m^2) for m columns.
    /// The working residual `r` is brought up to date at the end. Returns
    /// the number of sweeps used.
    #[allow(clippy::too_many_arguments)]
    fn active_sweeps(
        &self,
        cache: &Gram,
        beta: &mut [f64],
        b0: &mut f64,
        r: &mut [f64],
        lambda: f64,
        inner_tol: f64,
        budget: usize,
    ) -> usize {
        let nf = self.n as f64;
        let active = &cache.cols;
        let gram = &cache.gram;
        // index 0 is the intercept, 1..=a the active columns
        let m = active.len() + 1;
        let wr: Vec<f64> = cache
            .w
            .iter()
            .zip(r.iter())
            .map(|(&w, &ri)| w * ri)
            .collect();
        let mut grad = Vec::with_capacity(m);
        grad.push(wr.iter().sum::<f64>() / nf);
        grad.extend(active.iter().map(|&j| dot(self.col(j), &wr) / nf));
        let mut delta = vec![0.0; m];
        let mut used = 0;
        let mut support: Vec<bool> = Vec::new();
        let mut stable = 0;
        while used < budget.max(1) {
            used += 1;
            let mut max_change: f64 = 0.0;
            for k in 1..m {
                let j = active[k - 1];
                let vj = gram[k * m + k];
                if vj <= 0.0 {
                    continue;
                }
                let old = beta[j];
                let new = soft_threshold(grad[k] + vj * old, lambda) / vj;
                if new != old {
                    let d = new - old;
                    beta[j] = new;
                    delta[k] += d;
                    axpy(-d, &gram[k * m..(k + 1) * m], &mut grad);
                    max_change = max_change.max(vj * d * d);
                }
            }
            let d0 = grad[0] / gram[0];
            if d0 != 0.0 {
                *b0 += d0;
                delta[0] += d0;
                axpy(-d0, &gram[..m], &mut grad);
                max_change = max_change.max(gram[0] * d0 * d0);
            }
            if max_change < inner_tol {
                break;
            }
            // once the support settles, jump to the stationary point of the
            // quadratic with the signs held fixed
            let now: Vec<bool> = active.iter().map(|&j| beta[j] != 0.0).collect();
            if now == support {
                stable += 1;
            } else {
                support = now;
                stable = 0;
            }
            if stable % 8 == 2 {
                newton_on_support(
                    active, &support, gram, &mut grad, beta, b0, &mut delta, lambda,
                );
            }
        }
        if delta[0] != 0.0 {
            for ri in r.iter_mut() {
                *ri -= delta[0];
            }
        }
        for k in 1..m {
            if delta[k] != 0.0 {
                axpy(-delta[k], self.col(active[k - 1]), r);
            }
        }
        used
    }

    fn non_convergence(&self, state: &State, lambda: f64, kkt: f64, sweeps: usize) -> Error {
        let model = self.to_model(state, lambda, false, kkt, sweeps);
        Error::NonConvergence {
            iterations: sweeps,
            lambda,
            kkt_residual: kkt,
            intercept: model.intercept,
            coefficients: model.coefficients,
        }
    }

    pub(crate) fn to_model(
        &self,
        state: &State,
        lambda: f64,
        converged: bool,
        kkt_residual: f64,
        iterations: usize,
    ) -> LogitModel {
        let mut coefficients = vec![0.0; self.n_features];
        let mut intercept = state.b0;
        for (k, &j) in self.index.iter().enumerate() {
            let b = state.beta[k];
            if b != 0.0 {
                let sc = self.std.scale[j];
                coefficients[j] = b / sc;
                intercept -= b * self.std.mean[j] / sc;
            }
        }
        LogitModel {
            intercept,
            coefficients,
            lambda,
            standardization: self.std.clone(),
            converged,
            kkt_residual,
            iterations,
            train_loss: self.loss(&state.eta),
            cv: None,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn train_loss(&self, state: &State) -> f64 {
        self.loss(&state.eta)
    }

    /// Intercept-only model used when all labels agree.
    pub(crate) fn single_class_model(&self, lambda: f64) -> LogitModel {
        let state = self.null_state();
        let kkt = self.kkt_residual(&state, lambda);
        let mut m = self.to_model(&state, lambda, true, kkt, 0);
        m.warnings.push(format!(
            "all {} labels equal {}; fitted an intercept-only model",
            self.n, self.ybar
        ));
        m
    }
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Solves `G_SS e = grad_S - λ sign(β_S)` over the intercept and the
/// nonzero slopes and moves toward the solution, stopping where a slope
/// would change sign.
#[allow(clippy::too_many_arguments)]
fn newton_on_support(
    active: &[usize],
    support: &[bool],
    gram: &[f64],
    grad: &mut [f64],
    beta: &mut [f64],
    b0: &mut f64,
    delta: &mut [f64],
    lambda: f64,
) {
    let m = active.len() + 1;
    let idx: Vec<usize> = std::iter::once(0)
        .chain((1..m).filter(|&k| support[k - 1]))
        .collect();
    let s = idx.len();
    let g = DMatrix::from_fn(s, s, |a, b| gram[idx[a] * m + idx[b]]);
    let rhs = DVector::from_fn(s, |a, _| {
        let k = idx[a];
        if k == 0 {
            grad[0]
        } else {
            grad[k] - lambda * beta[active[k - 1]].signum()
        }
    });
    let Some(chol) = g.cholesky() else {
        return;
    };
    let e = chol.solve(&rhs);
    if !e.iter().all(|v| v.is_finite()) {
        return;
    }
    // stop at the first sign change; the objective is the fixed-sign
    // quadratic up to there, so the partial step still descends
    let mut frac = 1.0;
    let mut hit = None;
    for a in 1..s {
        let b = beta[active[idx[a] - 1]];
        if b * (b + e[a]) <= 0.0 {
            let t = -b / e[a];
            if t < frac {
                frac = t;
                hit = Some(a);
            }
        }
    }
    for (a, &k) in idx.iter().enumerate() {
        let mut step = frac * e[a];
        if k == 0 {
            *b0 += step;
        } else {
            let j = active[k - 1];
            if hit == Some(a) {
                step = -beta[j];
                beta[j] = 0.0;
            } else {
                beta[j] += step;
            }
        }
        delta[k] += step;
        axpy(-step, &gram[k * m..(k + 1) * m], grad);
    }
}

/// `max_j |(1/n) Σ x̃_ij (y_i - ȳ)|` over standardized columns.
pub fn lambda_max(design: &DMatrix<f64>, labels: &[u8]) -> Result<f64> {
    Ok(Problem::new(design, labels)?.lambda_max())
}

/// Fits the penalized model at a single λ from the null model.
pub fn fit_logit_l1(
    design: &DMatrix<f64>,
    labels: &[u8],
    lambda: f64,
    opts: &FitOptions,
) -> Result<LogitModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be finite and >= 0"
        )));
    }
    let problem = Problem::new(design, labels)?;
    if problem.single_class() {
        return Ok(problem.single_class_model(lambda));
    }
    let mut state = problem.null_state();
    let sweeps = problem.solve(&mut state, lambda, opts)?;
    let kkt = problem.kkt_residual(&state, lambda);
    Ok(problem.to_model(&state, lambda, true, kkt, sweeps))
}

/// Outcome of fitting a decreasing λ sequence with warm starts.
#[derive(Debug, Clone)]
pub struct PathFit {
    pub models: Vec<LogitModel>,
    /// Why the path ended before its last λ, if it did.
    pub stopped_early: Option<String>,
}

/// Fits a strictly decreasing λ sequence with warm starts. The path stops
/// early when the training fit saturates (deviance explained ≥ 0.999 or
/// changing by less than 1e-5) or when a fit fails to converge.
pub fn fit_logit_l1_path(
    design: &DMatrix<f64>,
    labels: &[u8],
    lambdas: &[f64],
    opts: &FitOptions,
) -> Result<PathFit> {
    let problem = Problem::new(design, labels)?;
    fit_path_on(&problem, lambdas, opts)
}

pub(crate) fn fit_path_on(
    problem: &Problem,
    lambdas: &[f64],
    opts: &FitOptions,
) -> Result<PathFit> {
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) || lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument(
            "lambda path must be positive and strictly decreasing".into(),
        ));
    }
    if problem.single_class() {
        let models = lambdas
            .iter()
            .map(|&l| problem.single_class_model(l))
            .collect();
        return Ok(PathFit {
            models,
            stopped_early: None,
        });
    }
    let mut state = problem.null_state();
    let null_loss = problem.train_loss(&state);
    let mut models: Vec<LogitModel> = Vec::with_capacity(lambdas.len());
    let mut prev_ratio = 0.0;
    let mut stopped_early = None;
    let mut budget = *opts;
    for (k, &lambda) in lambdas.iter().enumerate() {
        let sweeps = match problem.solve(&mut state, lambda, &budget) {
            Ok(s) => s,
            Err(e) => {
                if models.is_empty() {
                    return Err(e);
                }
                stopped_early = Some(format!("fit at lambda index {k} failed: {e}"));
                break;
            }
        };
        budget.max_iter = budget.max_iter.saturating_sub(sweeps).max(1);
        let kkt = problem.kkt_residual(&state, lambda);
        let model = problem.to_model(&state, lambda, true, kkt, sweeps);
        let ratio = 1.0 - model.train_loss / null_loss;
        models.push(model);
        if k + 1 < lambdas.len() {
            if ratio >= 0.999 {
                stopped_early = Some(format!(
                    "deviance explained reached {ratio:.4} at lambda index {k}"
                ));
                break;
            }
            if k > 0 && ratio - prev_ratio < 1e-5 * ratio {
                stopped_early = Some(format!("deviance explained stalled at lambda index {k}"));
                break;
            }
        }
        prev_ratio = ratio;
    }
    Ok(PathFit {
        models,
        stopped_early,
    })
}

/// `n_lambda` values log-spaced from `lambda_max` down to
/// `min_ratio * lambda_max`.
pub fn lambda_path(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lambda_max];
    }
    let lmax = lambda_max.ln();
    let lmin = (lambda_max * min_ratio).ln();
    (0..n_lambda)
        .map(|k| (lmax + (lmin - lmax) * k as f64 / (n_lambda - 1) as f64).exp())
        .collect()
}
