//! Elastic-net linear regression by cyclic coordinate descent.
//!
//! Minimizes
//!
//! ```text
//! (1/N) Σ ½ (y_i − a0 − aᵀx_i)² + λ [ (1 − γ) ‖a‖₂² / 2 + γ ‖a‖₁ ]
//! ```
//!
//! with `γ = alpha` mixing lasso (1) and ridge (0). The intercept is not
//! penalized. With `standardize` set (the default) each column is scaled to
//! unit variance before fitting, so the penalty applies to the standardized
//! coefficients; coefficients are reported on the original scale either way.
//! Pure ridge (`alpha = 0`, `lambda > 0`) is solved in closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_finite, LearnError};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetParams {
    pub alpha: f64,
    pub lambda: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iter: usize,
    /// Convergence threshold on the largest standardized coefficient change.
    pub tol: f64,
    pub standardize: bool,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 1e-4,
            max_iter: 10_000,
            tol: 1e-7,
            standardize: true,
        }
    }
}

impl ElasticNetParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LearnError::InvalidParams(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(LearnError::InvalidParams(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(LearnError::InvalidParams("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(LearnError::InvalidParams("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    /// Per-column scale the penalty was applied on (column std when
    /// standardizing, else 1; 0 for constant columns).
    pub penalty_scales: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl ElasticNetModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|a| a.abs()).sum()
    }

    /// Value of the minimized objective on `m`.
    pub fn objective(&self, m: &FeatureMatrix, p: &ElasticNetParams) -> f64 {
        let n = m.n_rows() as f64;
        let loss: f64 = m
            .rows
            .iter()
            .zip(&m.target)
            .map(|(r, y)| 0.5 * (y - self.predict_row(r)).powi(2))
            .sum::<f64>()
            / n;
        let (mut l2, mut l1) = (0.0, 0.0);
        for (a, s) in self.coefficients.iter().zip(&self.penalty_scales) {
            let b = a * s;
            l2 += b * b;
            l1 += b.abs();
        }
        loss + p.lambda * ((1.0 - p.alpha) * l2 / 2.0 + p.alpha * l1)
    }
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

/// Centered (and optionally scaled) design in column-major order.
struct Design {
    n: usize,
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// mean of squared entries per column (1 when standardized, 0 if constant)
    sq_means: Vec<f64>,
    y_mean: f64,
    y_centered: Vec<f64>,
}

impl Design {
    fn new(m: &FeatureMatrix, standardize: bool) -> Self {
        let n = m.n_rows();
        let nf = n as f64;
        let p = m.n_features();
        let y_mean = m.target.iter().sum::<f64>() / nf;
        let mut cols = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut sq_means = Vec::with_capacity(p);
        for j in 0..p {
            let mut c = m.column(j);
            let mu = c.iter().sum::<f64>() / nf;
            c.iter_mut().for_each(|v| *v -= mu);
            let var = c.iter().map(|v| v * v).sum::<f64>() / nf;
            let s = if var <= 1e-300 {
                0.0
            } else if standardize {
                var.sqrt()
            } else {
                1.0
            };
            if s > 0.0 {
                c.iter_mut().for_each(|v| *v /= s);
            } else {
                c.iter_mut().for_each(|v| *v = 0.0);
            }
            sq_means.push(if s > 0.0 { var / (s * s) } else { 0.0 });
            cols.push(c);
            means.push(mu);
            scales.push(s);
        }
        Self {
            n,
            cols,
            means,
            scales,
            sq_means,
            y_mean,
            y_centered: m.target.iter().map(|y| y - y_mean).collect(),
        }
    }

    /// Gram matrix `XᵀX/n` (row-major) and `Xᵀy/n` of the centered design.
    fn gram(&self) -> (Vec<f64>, Vec<f64>) {
        let nf = self.n as f64;
        let p = self.cols.len();
        let mut g = vec![0.0; p * p];
        for j in 0..p {
            for k in j..p {
                let v = if j == k {
                    self.sq_means[j]
                } else {
                    self.cols[j].iter().zip(&self.cols[k]).map(|(a, b)| a * b).sum::<f64>() / nf
                };
                g[j * p + k] = v;
                g[k * p + j] = v;
            }
        }
        let xty = self
            .cols
            .iter()
            .map(|c| c.iter().zip(&self.y_centered).map(|(a, b)| a * b).sum::<f64>() / nf)
            .collect();
        (g, xty)
    }

    /// Ridge solution of `(G + λI)β = Xᵀy/n` by Cholesky; `None` if the
    /// system is not numerically positive definite.
    fn ridge(&self, lambda: f64) -> Option<Vec<f64>> {
        let np = self.cols.len();
        let (g, xty) = self.gram();
        let mut a = DMatrix::from_row_slice(np, np, &g);
        for j in 0..np {
            // constant columns stay at zero
            a[(j, j)] += if self.sq_means[j] == 0.0 { 1.0 } else { lambda };
        }
        let chol = a.cholesky()?;
        let beta = chol.solve(&DVector::from_vec(xty));
        beta.iter().all(|b| b.is_finite()).then(|| beta.iter().copied().collect())
    }

    /// Runs sweeps from `beta` in place using covariance updates.
    /// Returns (converged, sweeps).
    fn descend(
        &self,
        beta: &mut [f64],
        p: &ElasticNetParams,
        mut on_sweep: impl FnMut(f64),
        trace: bool,
    ) -> (bool, usize) {
        let np = self.cols.len();
        let l1 = p.lambda * p.alpha;
        let l2 = p.lambda * (1.0 - p.alpha);
        let (g, xty) = self.gram();
        // gb = G·beta
        let mut gb = vec![0.0; np];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                gb.iter_mut().zip(&g[j * np..(j + 1) * np]).for_each(|(v, gj)| *v += b * gj);
            }
        }
        let yy = self.y_centered.iter().map(|v| v * v).sum::<f64>() / self.n as f64;
        for sweep in 1..=p.max_iter {
            let mut max_delta: f64 = 0.0;
            for j in 0..np {
                let d = self.sq_means[j];
                if d == 0.0 {
                    continue;
                }
                let grad = xty[j] - gb[j] + d * beta[j];
                let new = soft_threshold(grad, l1) / (d + l2);
                let delta = new - beta[j];
                if delta != 0.0 {
                    gb.iter_mut().zip(&g[j * np..(j + 1) * np]).for_each(|(v, gj)| *v += delta * gj);
                    beta[j] = new;
                    max_delta = max_delta.max(delta.abs() * d.sqrt());
                }
            }
            if trace {
                let fit: f64 = beta.iter().zip(&xty).map(|(b, c)| b * c).sum();
                let quad: f64 = beta.iter().zip(&gb).map(|(b, v)| b * v).sum();
                let loss = 0.5 * (yy - 2.0 * fit + quad);
                let l2n = beta.iter().map(|b| b * b).sum::<f64>();
                let l1n = beta.iter().map(|b| b.abs()).sum::<f64>();
                on_sweep(loss + p.lambda * ((1.0 - p.alpha) * l2n / 2.0 + p.alpha * l1n));
            }
            if max_delta < p.tol {
                return (true, sweep);
            }
        }
        (false, p.max_iter)
    }

    fn model(&self, beta: &[f64], names: &[String], converged: bool, sweeps: usize) -> ElasticNetModel {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept =
            self.y_mean - coefficients.iter().zip(&self.means).map(|(a, m)| a * m).sum::<f64>();
        ElasticNetModel {
            intercept,
            coefficients,
            column_names: names.to_vec(),
            penalty_scales: self.scales.clone(),
            converged,
            sweeps,
        }
    }
}

fn intercept_only(m: &FeatureMatrix) -> ElasticNetModel {
    let p = m.n_features();
    ElasticNetModel {
        intercept: m.target.iter().sum::<f64>() / m.n_rows() as f64,
        coefficients: vec![0.0; p],
        column_names: m.column_names.clone(),
        penalty_scales: vec![0.0; p],
        converged: true,
        sweeps: 0,
    }
}

fn prepare(m: &FeatureMatrix, p: &ElasticNetParams) -> Result<(), LearnError> {
    p.validate()?;
    if m.n_rows() == 0 {
        return Err(LearnError::TooFewRows { needed: 1, got: 0 });
    }
    check_finite(m)
}

pub fn fit_elastic_net(m: &FeatureMatrix, p: &ElasticNetParams) -> Result<ElasticNetModel, LearnError> {
    fit_traced(m, p, |_| {}, false)
}

/// Like [`fit_elastic_net`] but reports the objective after every sweep.
pub fn fit_elastic_net_traced(
    m: &FeatureMatrix,
    p: &ElasticNetParams,
) -> Result<(ElasticNetModel, Vec<f64>), LearnError> {
    let mut trace = Vec::new();
    let model = fit_traced(m, p, |o| trace.push(o), true)?;
    Ok((model, trace))
}

fn fit_traced(
    m: &FeatureMatrix,
    p: &ElasticNetParams,
    on_sweep: impl FnMut(f64),
    trace: bool,
) -> Result<ElasticNetModel, LearnError> {
    prepare(m, p)?;
    if m.n_rows() == 1 {
        return Ok(intercept_only(m));
    }
    let design = Design::new(m, p.standardize);
    if p.alpha == 0.0 && p.lambda > 0.0 && !trace {
        if let Some(beta) = design.ridge(p.lambda) {
            return Ok(design.model(&beta, &m.column_names, true, 0));
        }
    }
    let mut beta = vec![0.0; m.n_features()];
    let (converged, sweeps) = design.descend(&mut beta, p, on_sweep, trace);
    if !converged {
        log::debug!(
            "elastic net did not converge in {} sweeps (alpha={}, lambda={})",
            p.max_iter,
            p.alpha,
            p.lambda
        );
    }
    Ok(design.model(&beta, &m.column_names, converged, sweeps))
}

/// Smallest λ at which every coefficient is zero. Ridge (`alpha == 0`) uses
/// `alpha = 0.001` as the reference mixing, as glmnet does.
pub fn lambda_max(m: &FeatureMatrix, alpha: f64, standardize: bool) -> f64 {
    if m.n_rows() < 2 {
        return 0.0;
    }
    let d = Design::new(m, standardize);
    let nf = d.n as f64;
    let g = d
        .cols
        .iter()
        .map(|c| (c.iter().zip(&d.y_centered).map(|(a, b)| a * b).sum::<f64>() / nf).abs())
        .fold(0.0, f64::max);
    g / alpha.max(1e-3)
}

/// `count` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_path(m: &FeatureMatrix, alpha: f64, standardize: bool, count: usize, ratio: f64) -> Vec<f64> {
    let hi = lambda_max(m, alpha, standardize);
    if count <= 1 || hi <= 0.0 {
        return vec![hi];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count).map(|k| hi * (step * k as f64).exp()).collect()
}

/// Fits a decreasing λ sequence, warm-starting each fit from the previous one.
pub fn fit_path(
    m: &FeatureMatrix,
    p: &ElasticNetParams,
    lambdas: &[f64],
) -> Result<Vec<ElasticNetModel>, LearnError> {
    prepare(m, p)?;
    if m.n_rows() == 1 {
        return Ok(lambdas.iter().map(|_| intercept_only(m)).collect());
    }
    let design = Design::new(m, p.standardize);
    let mut beta = vec![0.0; m.n_features()];
    lambdas
        .iter()
        .map(|&lambda| {
            let q = ElasticNetParams { lambda, ..p.clone() };
            q.validate()?;
            let (converged, sweeps) = design.descend(&mut beta, &q, |_| {}, false);
            Ok(design.model(&beta, &m.column_names, converged, sweeps))
        })
        .collect()
}
