//! Per-quarter-hour linear predictors.
//!
//! * `NaiveExaa`: the same-day EXAA price.
//! * `Lm`: ordinary least squares, minimum-norm when the design is rank deficient.
//! * `En`: elastic net, fitted by cyclic coordinate descent on
//!
//! ```text
//! (1 / 2n) ||y - Xβ||² + λ [ (1 - α)/2 ||β||² + α ||β||₁ ]
//! ```
//!
//! over an exponential λ grid with warm starts, λ chosen by K-fold
//! cross-validation. There is no intercept and no internal standardization;
//! inputs are expected on the transformed scale.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::market_data::{Dataset, SeriesId};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_LAMBDA_MIN: f64 = 0.001;
pub const DEFAULT_LAMBDA_STEPS: usize = 1000;
pub const DEFAULT_FOLDS: usize = 10;
pub const CD_TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 100_000;
const ACTIVE_SWEEPS_BEFORE_SOLVE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    NaiveExaa,
    Lm,
    En,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NaiveExaa => "Naive",
            ModelKind::Lm => "LM",
            ModelKind::En => "EN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NAIVE" | "NAIVE_EXAA" | "NAIVEEXAA" => Ok(ModelKind::NaiveExaa),
            "LM" | "OLS" => Ok(ModelKind::Lm),
            "EN" => Ok(ModelKind::En),
            _ => Err(Error::Config(format!("unknown model kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub qh: usize,
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    /// Grid used for cross-validation (descending), EN only.
    pub lambdas: Vec<f64>,
    /// Mean held-out MSE per grid value, EN only.
    pub cv_curve: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FittedModel {
    /// Prediction on the transformed scale. `names` must match the fitted
    /// feature names in order.
    pub fn predict(&self, names: &[String], row: &[f64]) -> Result<f64> {
        if names != self.feature_names.as_slice() {
            return Err(Error::data(format!(
                "qh {}: feature names do not match the fitted model",
                self.qh
            )));
        }
        self.predict_row(row)
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::data(format!(
                "qh {}: row has {} features, model has {}",
                self.qh,
                row.len(),
                self.coefficients.len()
            )));
        }
        Ok(dot(&self.coefficients, row))
    }

    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }

    pub fn summary(&self) -> ModelSummary {
        let cv = (!self.cv_curve.is_empty()).then(|| {
            let min = self.cv_curve.iter().copied().fold(f64::INFINITY, f64::min);
            CvSummary {
                grid_len: self.lambdas.len(),
                lambda_max: self.lambdas[0],
                lambda_min: *self.lambdas.last().unwrap(),
                min_mse: min,
                mse_at_lambda_max: self.cv_curve[0],
            }
        });
        ModelSummary {
            kind: self.kind,
            qh: self.qh,
            alpha: self.alpha,
            lambda: self.lambda,
            coefficients: self
                .feature_names
                .iter()
                .zip(&self.coefficients)
                .filter(|(_, b)| **b != 0.0)
                .map(|(n, b)| (n.clone(), *b))
                .collect(),
            cv,
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub grid_len: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub min_mse: f64,
    pub mse_at_lambda_max: f64,
}

/// Serialized form: nonzero coefficients only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub qh: usize,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub coefficients: Vec<(String, f64)>,
    pub cv: Option<CvSummary>,
    pub warnings: Vec<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(design: &DesignMatrix) -> Result<()> {
    if design.x.iter().chain(&design.response).any(|v| !v.is_finite()) {
        return Err(Error::data(format!("qh {}: design contains non-finite values", design.qh)));
    }
    Ok(())
}

/// Same-day EXAA price (raw scale) for 1-based `qh` on `day`.
pub fn fit_naive(dataset: &Dataset, qh: usize, day: NaiveDate) -> Result<f64> {
    let exaa = dataset.get(SeriesId::ExaaQh)?;
    exaa.get(day, qh - 1)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::data(format!("no EXAA price for {day} qh {qh}")))
}

/// Least squares via SVD; minimum-norm solution if rank deficient.
pub fn fit_ols(design: &DesignMatrix) -> Result<FittedModel> {
    check_finite(design)?;
    let (n, p) = (design.n_rows(), design.n_cols());
    if n == 0 || p == 0 {
        return Err(Error::data(format!("qh {}: empty design", design.qh)));
    }
    let x = DMatrix::from_row_slice(n, p, &design.x);
    let y = DVector::from_column_slice(&design.response);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = n.max(p) as f64 * f64::EPSILON * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::numerical(format!("qh {}: SVD solve failed: {e}", design.qh)))?;
    let mut warnings = Vec::new();
    if rank < p {
        warnings.push(format!("rank deficient design: rank {rank} < {p} columns, minimum-norm solution"));
    }
    Ok(FittedModel {
        qh: design.qh,
        kind: ModelKind::Lm,
        feature_names: design.columns.iter().map(|c| c.name.clone()).collect(),
        coefficients: beta.iter().copied().collect(),
        lambda: None,
        alpha: None,
        lambdas: vec![],
        cv_curve: vec![],
        warnings,
    })
}

/// Descending, log-equally-spaced λ values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

impl LambdaGrid {
    /// `steps` values from `lambda_max` down to `lambda_min`. If
    /// `lambda_max <= lambda_min` the grid collapses to `{lambda_min}` and
    /// is flagged as degenerate.
    pub fn exponential(lambda_max: f64, lambda_min: f64, steps: usize) -> Result<Self> {
        if !(lambda_min > 0.0) || steps == 0 || !lambda_max.is_finite() {
            return Err(Error::Config(format!(
                "invalid λ grid: max {lambda_max}, min {lambda_min}, steps {steps}"
            )));
        }
        if lambda_max <= lambda_min {
            return Ok(LambdaGrid {
                values: vec![lambda_min],
                degenerate: true,
            });
        }
        if steps == 1 {
            return Ok(LambdaGrid {
                values: vec![lambda_max],
                degenerate: false,
            });
        }
        let (hi, lo) = (lambda_max.ln(), lambda_min.ln());
        let step = (hi - lo) / (steps - 1) as f64;
        let mut values: Vec<f64> = (0..steps).map(|i| (hi - step * i as f64).exp()).collect();
        values[0] = lambda_max;
        values[steps - 1] = lambda_min;
        Ok(LambdaGrid {
            values,
            degenerate: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sufficient statistics `XᵀX/n`, `Xᵀy/n`, `yᵀy/n` of a design.
#[derive(Debug, Clone)]
pub struct Gram {
    pub n: usize,
    pub p: usize,
    /// Row-major p × p.
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl Gram {
    pub fn new(x: &[f64], y: &[f64], p: usize) -> Self {
        let n = y.len();
        let mut g = Gram {
            n,
            p,
            xtx: vec![0.0; p * p],
            xty: vec![0.0; p],
            yty: 0.0,
        };
        g.accumulate(x, y, 1.0);
        g.finish();
        g
    }

    fn accumulate(&mut self, x: &[f64], y: &[f64], sign: f64) {
        let p = self.p;
        for (row, &yi) in x.chunks_exact(p).zip(y) {
            for j in 0..p {
                let xj = row[j] * sign;
                if xj == 0.0 {
                    continue;
                }
                self.xty[j] += xj * yi;
                let out = &mut self.xtx[j * p..j * p + p];
                for (k, o) in out.iter_mut().enumerate().skip(j) {
                    *o += xj * row[k];
                }
            }
            self.yty += sign * yi * yi;
        }
    }

    fn finish(&mut self) {
        let p = self.p;
        let inv = 1.0 / self.n as f64;
        for j in 0..p {
            for k in j..p {
                let v = self.xtx[j * p + k] * inv;
                self.xtx[j * p + k] = v;
                self.xtx[k * p + j] = v;
            }
            self.xty[j] *= inv;
        }
        self.yty *= inv;
    }

    /// Statistics of the rows not in `held_out` given the full-data sums.
    fn without(full_x: &[f64], full_y: &[f64], p: usize, held_out: &[usize]) -> Self {
        let n = full_y.len();
        let mut g = Gram {
            n,
            p,
            xtx: vec![0.0; p * p],
            xty: vec![0.0; p],
            yty: 0.0,
        };
        let mut keep = vec![true; n];
        held_out.iter().for_each(|&i| keep[i] = false);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in (0..n).filter(|&i| keep[i]) {
            xs.extend_from_slice(&full_x[i * p..(i + 1) * p]);
            ys.push(full_y[i]);
        }
        g.n = ys.len();
        g.accumulate(&xs, &ys, 1.0);
        g.finish();
        g
    }
}

/// `max_j |x_jᵀy| / (n α)`: the smallest λ with an all-zero solution.
pub fn lambda_max(design: &DesignMatrix, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "λ_max needs 0 < α ≤ 1, got {alpha} (ridge has no finite all-zero threshold)"
        )));
    }
    let g = Gram::new(&design.x, &design.response, design.n_cols());
    Ok(lambda_max_gram(&g, alpha))
}

fn lambda_max_gram(g: &Gram, alpha: f64) -> f64 {
    g.xty.iter().fold(0.0f64, |m, v| m.max(v.abs())) / alpha
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate-descent state over a fixed Gram matrix.
struct Solver<'g> {
    g: &'g Gram,
    alpha: f64,
    beta: Vec<f64>,
    /// `XᵀX/n · β`
    gb: Vec<f64>,
    /// Sweeps at the current λ and over the whole path.
    sweeps: usize,
    total_sweeps: usize,
}

impl<'g> Solver<'g> {
    fn new(g: &'g Gram, alpha: f64) -> Self {
        Solver {
            g,
            alpha,
            beta: vec![0.0; g.p],
            gb: vec![0.0; g.p],
            sweeps: 0,
            total_sweeps: 0,
        }
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let p = self.g.p;
        let gjj = self.g.xtx[j * p + j];
        let old = self.beta[j];
        let denom = gjj + lambda * (1.0 - self.alpha);
        let new = if denom > 0.0 {
            let rho = self.g.xty[j] - self.gb[j] + gjj * old;
            soft_threshold(rho, lambda * self.alpha) / denom
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            let col = &self.g.xtx[j * p..j * p + p];
            for (gb, gk) in self.gb.iter_mut().zip(col) {
                *gb += delta * gk;
            }
        }
        delta.abs()
    }

    fn sweep(&mut self, lambda: f64, active_only: bool) -> Result<f64> {
        self.sweeps += 1;
        self.total_sweeps += 1;
        if self.sweeps > MAX_SWEEPS {
            return Err(Error::numerical(format!(
                "coordinate descent did not converge within {MAX_SWEEPS} sweeps at λ = {lambda:e} \
                 ({} nonzero coefficients)",
                self.beta.iter().filter(|b| **b != 0.0).count()
            )));
        }
        let mut max_change = 0.0f64;
        for j in 0..self.g.p {
            if active_only && self.beta[j] == 0.0 {
                continue;
            }
            max_change = max_change.max(self.update(j, lambda));
        }
        Ok(max_change)
    }

    /// Run to convergence at `lambda`, starting from the current β.
    /// Run to convergence at `lambda`, starting from the current β. When
    /// active-set sweeps stall, the active block is solved directly for the
    /// current sign pattern; the step is kept only if the signs survive.
    fn solve(&mut self, lambda: f64) -> Result<()> {
        self.sweeps = 0;
        loop {
            if self.sweep(lambda, false)? < CD_TOLERANCE {
                return Ok(());
            }
            let mut stalled = 0;
            while self.sweep(lambda, true)? >= CD_TOLERANCE {
                stalled += 1;
                if stalled % ACTIVE_SWEEPS_BEFORE_SOLVE == 0 && self.solve_active(lambda) {
                    break;
                }
            }
        }
    }

    fn solve_active(&mut self, lambda: f64) -> bool {
        let p = self.g.p;
        let active: Vec<usize> = (0..p).filter(|&j| self.beta[j] != 0.0).collect();
        let k = active.len();
        if k == 0 {
            return false;
        }
        let ridge = lambda * (1.0 - self.alpha);
        let a = DMatrix::from_fn(k, k, |r, c| {
            self.g.xtx[active[r] * p + active[c]] + if r == c { ridge } else { 0.0 }
        });
        let b = DVector::from_fn(k, |r, _| {
            let j = active[r];
            self.g.xty[j] - lambda * self.alpha * self.beta[j].signum()
        });
        let Some(chol) = a.cholesky() else {
            return false;
        };
        let x = chol.solve(&b);
        if active.iter().zip(x.iter()).any(|(&j, v)| v.signum() != self.beta[j].signum() || *v == 0.0) {
            return false;
        }
        for (&j, v) in active.iter().zip(x.iter()) {
            self.beta[j] = *v;
        }
        for (i, gb) in self.gb.iter_mut().enumerate() {
            *gb = active.iter().map(|&j| self.g.xtx[i * p + j] * self.beta[j]).sum();
        }
        true
    }
}

/// Elastic-net objective on the `1/(2n)` RSS scale.
pub fn en_objective(design: &DesignMatrix, beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let p = design.n_cols();
    let n = design.n_rows() as f64;
    let rss: f64 = design
        .x
        .chunks_exact(p)
        .zip(&design.response)
        .map(|(row, y)| (y - dot(row, beta)).powi(2))
        .sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    rss / (2.0 * n) + lambda * ((1.0 - alpha) / 2.0 * l2 + alpha * l1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnPath {
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn path_on_gram(g: &Gram, lambdas: &[f64], alpha: f64) -> Result<EnPath> {
    let mut solver = Solver::new(g, alpha);
    let mut coefficients = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        solver.solve(lambda)?;
        coefficients.push(solver.beta.clone());
    }
    Ok(EnPath {
        lambdas: lambdas.to_vec(),
        coefficients,
        sweeps: solver.total_sweeps,
    })
}

/// Warm-started coordinate-descent path over `grid` (descending λ).
pub fn fit_en_path(design: &DesignMatrix, grid: &LambdaGrid, alpha: f64) -> Result<EnPath> {
    check_finite(design)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("α must lie in [0, 1], got {alpha}")));
    }
    let g = Gram::new(&design.x, &design.response, design.n_cols());
    path_on_gram(&g, &grid.values, alpha)
}

/// Cold-start solution at a single λ.
pub fn fit_en_single(design: &DesignMatrix, lambda: f64, alpha: f64) -> Result<Vec<f64>> {
    let grid = LambdaGrid {
        values: vec![lambda],
        degenerate: false,
    };
    Ok(fit_en_path(design, &grid, alpha)?.coefficients.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FoldAssignment {
    /// Contiguous blocks in row (day) order.
    #[default]
    Contiguous,
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_star: f64,
    pub index: usize,
    pub cv_curve: Vec<f64>,
}

/// Fold index of each row.
pub fn fold_ids(n: usize, folds: usize, assignment: FoldAssignment) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).map(|i| i * folds / n).collect();
    if let FoldAssignment::Shuffled { seed } = assignment {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    ids
}

/// K-fold CV of the elastic-net path; returns the λ with the lowest mean
/// held-out MSE, preferring the larger λ on ties.
pub fn cross_validate(
    design: &DesignMatrix,
    grid: &LambdaGrid,
    alpha: f64,
    folds: usize,
    assignment: FoldAssignment,
) -> Result<CvResult> {
    check_finite(design)?;
    let (n, p) = (design.n_rows(), design.n_cols());
    if folds < 2 || n < folds {
        return Err(Error::data(format!(
            "qh {}: {n} rows is fewer than the {folds} CV folds",
            design.qh
        )));
    }
    let ids = fold_ids(n, folds, assignment);
    let mut sse = vec![0.0; grid.len()];
    for f in 0..folds {
        let held: Vec<usize> = (0..n).filter(|&i| ids[i] == f).collect();
        let g = Gram::without(&design.x, &design.response, p, &held);
        let path = path_on_gram(&g, &grid.values, alpha)?;
        for (k, beta) in path.coefficients.iter().enumerate() {
            sse[k] += held
                .iter()
                .map(|&i| (design.response[i] - dot(design.row(i), beta)).powi(2))
                .sum::<f64>();
        }
    }
    let cv_curve: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let mut index = 0;
    for (k, &m) in cv_curve.iter().enumerate() {
        if m < cv_curve[index] {
            index = k;
        }
    }
    Ok(CvResult {
        lambda_star: grid.values[index],
        index,
        cv_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnConfig {
    pub alpha: f64,
    pub lambda_min: f64,
    pub lambda_steps: usize,
    pub folds: usize,
    pub fold_assignment: FoldAssignment,
}

impl Default for EnConfig {
    fn default() -> Self {
        EnConfig {
            alpha: DEFAULT_ALPHA,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_steps: DEFAULT_LAMBDA_STEPS,
            folds: DEFAULT_FOLDS,
            fold_assignment: FoldAssignment::Contiguous,
        }
    }
}

/// Full elastic-net fit: data-derived grid, CV, and the path solution at λ*.
pub fn fit_en(design: &DesignMatrix, cfg: &EnConfig) -> Result<FittedModel> {
    check_finite(design)?;
    let lmax = lambda_max(design, cfg.alpha)?;
    let grid = LambdaGrid::exponential(lmax, cfg.lambda_min, cfg.lambda_steps)?;
    let mut warnings = Vec::new();
    if grid.degenerate {
        warnings.push(format!(
            "λ_max {lmax:e} ≤ λ_min {}: grid collapsed to a single value",
            cfg.lambda_min
        ));
    }
    let cv = cross_validate(design, &grid, cfg.alpha, cfg.folds, cfg.fold_assignment)?;
    let g = Gram::new(&design.x, &design.response, design.n_cols());
    let path = path_on_gram(&g, &grid.values[..=cv.index], cfg.alpha)?;
    let coefficients = path.coefficients.into_iter().next_back().unwrap();
    Ok(FittedModel {
        qh: design.qh,
        kind: ModelKind::En,
        feature_names: design.columns.iter().map(|c| c.name.clone()).collect(),
        coefficients,
        lambda: Some(cv.lambda_star),
        alpha: Some(cfg.alpha),
        lambdas: grid.values,
        cv_curve: cv.cv_curve,
        warnings,
    })
}

/// Largest violation of the elastic-net optimality conditions at `beta`
/// (on the `1/(2n)` scale, gradient `x_jᵀr / n`).
pub fn kkt_violation(design: &DesignMatrix, beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let (n, p) = (design.n_rows(), design.n_cols());
    let resid: Vec<f64> = (0..n)
        .map(|i| design.response[i] - dot(design.row(i), beta))
        .collect();
    let mut worst = 0.0f64;
    for (j, &b) in beta.iter().enumerate().take(p) {
        let grad: f64 = (0..n).map(|i| design.x[i * p + j] * resid[i]).sum::<f64>() / n as f64;
        let v = if b != 0.0 {
            (grad - lambda * ((1.0 - alpha) * b + alpha * b.signum())).abs()
        } else {
            (grad.abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}
