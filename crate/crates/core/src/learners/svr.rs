//! Linear epsilon-insensitive support vector regression.
//!
//! Solves the dual of
//!
//! ```text
//! min ½‖v‖² + C Σ (ξ_i + ξ_i*)
//! s.t. y_i − vᵀx_i − b ≤ ε + ξ_i,  vᵀx_i + b − y_i ≤ ε + ξ_i*,  ξ, ξ* ≥ 0
//! ```
//!
//! by sequential minimal optimization over the 2N box-constrained dual
//! variables, choosing each working pair by the second-order rule of
//! Fan, Chen & Lin (2005). The kernel is the plain inner product, so the
//! primal weight vector is maintained directly.

use serde::{Deserialize, Serialize};

use super::{check_finite, LearnError};
use crate::features::FeatureMatrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    pub cost: f64,
    pub epsilon: f64,
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    /// Iteration cap, in passes over the training rows.
    pub max_passes: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            cost: 0.07,
            epsilon: 0.1,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.cost > 0.0) || !self.cost.is_finite() {
            return Err(LearnError::InvalidParams(format!("cost {} must be > 0", self.cost)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(LearnError::InvalidParams(format!("epsilon {} must be >= 0", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(LearnError::InvalidParams("tol must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(LearnError::InvalidParams("max_passes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `α_i* − α_i` per training row; `weights = Σ dual_coef_i x_i`.
    pub dual_coef: Vec<f64>,
    pub support: Vec<usize>,
    pub column_names: Vec<String>,
    pub cost: f64,
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Primal minus dual objective at termination.
    pub duality_gap: f64,
}

impl SvrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    /// `α_i*` (upper-tube multipliers).
    pub fn alpha_star(&self) -> Vec<f64> {
        self.dual_coef.iter().map(|b| b.max(0.0)).collect()
    }

    /// `α_i` (lower-tube multipliers).
    pub fn alpha(&self) -> Vec<f64> {
        self.dual_coef.iter().map(|b| (-b).max(0.0)).collect()
    }

    /// `½‖v‖² + C Σ max(0, |y − h(x)| − ε)` on `m`.
    pub fn primal_objective(&self, m: &FeatureMatrix) -> f64 {
        primal(&self.weights, self.bias, &m.rows, &m.target, self.cost, self.epsilon)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn primal(w: &[f64], b: f64, rows: &[Vec<f64>], y: &[f64], cost: f64, eps: f64) -> f64 {
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, t)| ((t - dot(w, x) - b).abs() - eps).max(0.0))
        .sum();
    0.5 * dot(w, w) + cost * loss
}

/// Dual state over `2n` variables: index `t < n` is `α_t*` (sign +1),
/// index `t >= n` is `α_{t-n}` (sign −1).
struct Smo<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    n: usize,
    cost: f64,
    eps: f64,
    a: Vec<f64>,
    w: Vec<f64>,
    /// f_r = wᵀx_r
    f: Vec<f64>,
    diag: Vec<f64>,
}

impl Smo<'_> {
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn row(&self, t: usize) -> usize {
        t % self.n
    }

    /// Gradient of `½aᵀQa + pᵀa` for variable `t`.
    fn grad(&self, t: usize) -> f64 {
        let r = self.row(t);
        if t < self.n {
            self.f[r] + self.eps - self.y[r]
        } else {
            -self.f[r] + self.eps + self.y[r]
        }
    }

    fn can_increase_along_sign(&self, t: usize) -> bool {
        // I_up
        if t < self.n {
            self.a[t] < self.cost
        } else {
            self.a[t] > 0.0
        }
    }

    fn can_decrease_along_sign(&self, t: usize) -> bool {
        // I_low
        if t < self.n {
            self.a[t] > 0.0
        } else {
            self.a[t] < self.cost
        }
    }

    /// Second-order working set; `None` once the violation is below `tol`.
    fn select(&self, tol: f64) -> Option<(usize, usize)> {
        let m = 2 * self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if self.can_increase_along_sign(t) {
                let v = -self.sign(t) * self.grad(t);
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            return None;
        }
        let ri = self.row(i);
        let xi = &self.x[ri];
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..m {
            if !self.can_decrease_along_sign(t) {
                continue;
            }
            let yg = self.sign(t) * self.grad(t);
            gmax2 = gmax2.max(yg);
            let diff = gmax + yg;
            if diff > 0.0 {
                let rt = self.row(t);
                let quad = self.diag[ri] + self.diag[rt] - 2.0 * dot(xi, &self.x[rt]);
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            return None;
        }
        Some((i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.cost;
        let (ri, rj) = (self.row(i), self.row(j));
        let quad = {
            let q = self.diag[ri] + self.diag[rj] - 2.0 * dot(&self.x[ri], &self.x[rj]);
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };
        let (gi, gj) = (self.grad(i), self.grad(j));
        let (old_i, old_j) = (self.a[i], self.a[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.sign(i) != self.sign(j) {
            let delta = (-gi - gj) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (gi - gj) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.a[i] = ai;
        self.a[j] = aj;
        let di = self.sign(i) * (ai - old_i);
        let dj = self.sign(j) * (aj - old_j);
        if di == 0.0 && dj == 0.0 {
            return;
        }
        let dw: Vec<f64> = self.x[ri]
            .iter()
            .zip(&self.x[rj])
            .map(|(a, b)| di * a + dj * b)
            .collect();
        self.w.iter_mut().zip(&dw).for_each(|(w, d)| *w += d);
        for (fr, xr) in self.f.iter_mut().zip(self.x) {
            *fr += dot(xr, &dw);
        }
    }

    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free_sum, mut free) = (0.0, 0usize);
        for t in 0..2 * self.n {
            let s = self.sign(t);
            let yg = s * self.grad(t);
            let at_upper = self.a[t] >= self.cost;
            let at_lower = self.a[t] <= 0.0;
            if at_upper {
                if s < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower {
                if s > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            0.5 * (ub + lb)
        };
        -rho
    }
}

pub fn fit_svr(m: &FeatureMatrix, p: &SvrParams) -> Result<SvrModel, LearnError> {
    p.validate()?;
    let n = m.n_rows();
    if n == 0 {
        return Err(LearnError::TooFewRows { needed: 1, got: 0 });
    }
    check_finite(m)?;
    let d = m.n_features();
    if n == 1 {
        return Ok(SvrModel {
            weights: vec![0.0; d],
            bias: m.target[0],
            dual_coef: vec![0.0],
            support: Vec::new(),
            column_names: m.column_names.clone(),
            cost: p.cost,
            epsilon: p.epsilon,
            converged: true,
            iterations: 0,
            duality_gap: 0.0,
        });
    }

    let mut smo = Smo {
        x: &m.rows,
        y: &m.target,
        n,
        cost: p.cost,
        eps: p.epsilon,
        a: vec![0.0; 2 * n],
        w: vec![0.0; d],
        f: vec![0.0; n],
        diag: m.rows.iter().map(|r| dot(r, r)).collect(),
    };
    let max_iter = p.max_passes.saturating_mul(n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        match smo.select(p.tol) {
            None => {
                converged = true;
                break;
            }
            Some((i, j)) => smo.update(i, j),
        }
        iterations += 1;
    }
    if !converged {
        log::warn!("SVR stopped at the iteration cap ({max_iter}) before reaching tol {}", p.tol);
    }

    let bias = smo.bias();
    // Collapse each row's pair to α* − α; at most one side stays nonzero.
    let dual_coef: Vec<f64> = (0..n).map(|r| smo.a[r] - smo.a[r + n]).collect();
    let mut weights = vec![0.0; d];
    for (x, b) in m.rows.iter().zip(&dual_coef) {
        if *b != 0.0 {
            weights.iter_mut().zip(x).for_each(|(w, v)| *w += b * v);
        }
    }
    let support = (0..n).filter(|&r| dual_coef[r] != 0.0).collect();
    let primal_value = primal(&weights, bias, &m.rows, &m.target, p.cost, p.epsilon);
    let dual_value = 0.5 * dot(&weights, &weights)
        + dual_coef
            .iter()
            .zip(&m.target)
            .map(|(b, y)| p.epsilon * b.abs() - y * b)
            .sum::<f64>();
    Ok(SvrModel {
        weights,
        bias,
        dual_coef,
        support,
        column_names: m.column_names.clone(),
        cost: p.cost,
        epsilon: p.epsilon,
        converged,
        iterations,
        duality_gap: primal_value + dual_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d(xs: &[f64], ys: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_xy(xs.iter().map(|&x| vec![x]).collect(), ys.to_vec()).unwrap()
    }

    #[test]
    fn constant_target_inside_tube() {
        let m = one_d(&[0.1, 0.4, 0.5, 0.9], &[2.0; 4]);
        let model = fit_svr(&m, &SvrParams { cost: 1.0, epsilon: 0.1, ..Default::default() }).unwrap();
        assert_eq!(model.weights, vec![0.0]);
        assert!(model.support.is_empty());
        assert!((model.predict_row(&[0.3]) - 2.0).abs() <= 0.1);
    }

    #[test]
    fn recovers_exact_line() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let p = SvrParams { cost: 1e4, epsilon: 0.0, tol: 1e-9, max_passes: 100_000 };
        let model = fit_svr(&one_d(&xs, &ys), &p).unwrap();
        assert!(model.converged);
        assert!((model.weights[0] - 2.0).abs() < 1e-3, "{}", model.weights[0]);
        assert!((model.bias - 1.0).abs() < 1e-3, "{}", model.bias);
    }

    #[test]
    fn kkt_conditions_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|r| 0.5 * r[0] - 0.3 * r[1] + 0.2 + 0.05 * rng.gen_range(-1.0..1.0))
            .collect();
        let m = FeatureMatrix::from_xy(rows, target).unwrap();
        let tol = 1e-8;
        let p = SvrParams { cost: 2.0, epsilon: 0.02, tol, max_passes: 100_000 };
        let model = fit_svr(&m, &p).unwrap();
        assert!(model.converged);
        for (r, (a, s)) in model.alpha().iter().zip(model.alpha_star()).enumerate() {
            assert!((0.0..=p.cost).contains(a) && (0.0..=p.cost).contains(&s));
            assert_eq!(a * s, 0.0);
            let resid = m.target[r] - model.predict_row(&m.rows[r]);
            if resid.abs() < p.epsilon - 1e-6 {
                assert!(model.dual_coef[r].abs() < 1e-6, "row {r} inside tube with {}", model.dual_coef[r]);
            }
        }
        let mut v = [0.0; 3];
        for (x, b) in m.rows.iter().zip(&model.dual_coef) {
            for k in 0..3 {
                v[k] += b * x[k];
            }
        }
        for k in 0..3 {
            assert!((v[k] - model.weights[k]).abs() < 1e-10);
        }
        assert!(model.dual_coef.iter().sum::<f64>().abs() < 1e-9);
        assert!(model.duality_gap.abs() < 1e-5 * (1.0 + model.primal_objective(&m)));
    }

    #[test]
    fn predict_arithmetic() {
        let model = SvrModel {
            weights: vec![2.0],
            bias: 1.0,
            dual_coef: vec![],
            support: vec![],
            column_names: vec!["x0".into()],
            cost: 1.0,
            epsilon: 0.0,
            converged: true,
            iterations: 0,
            duality_gap: 0.0,
        };
        assert_eq!(model.predict_row(&[3.0]), 7.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let m = one_d(&[0.0, 1.0], &[0.0, 1.0]);
        for p in [
            SvrParams { cost: 0.0, ..Default::default() },
            SvrParams { epsilon: -0.1, ..Default::default() },
            SvrParams { tol: 0.0, ..Default::default() },
        ] {
            assert!(matches!(fit_svr(&m, &p), Err(LearnError::InvalidParams(_))));
        }
    }

    #[test]
    fn single_row_is_intercept_only() {
        let m = one_d(&[3.0], &[5.0]);
        let model = fit_svr(&m, &SvrParams::default()).unwrap();
        assert_eq!(model.predict_row(&[100.0]), 5.0);
    }

    #[test]
    fn row_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x + 0.1 * rng.gen_range(-1.0..1.0)).collect();
        let m = one_d(&xs, &ys);
        let p = SvrParams { cost: 1.0, epsilon: 0.01, tol: 1e-10, max_passes: 100_000 };
        let a = fit_svr(&m, &p).unwrap();
        let idx: Vec<usize> = (0..30).rev().collect();
        let b = fit_svr(&m.take_rows(&idx), &p).unwrap();
        assert!((a.primal_objective(&m) - b.primal_objective(&m)).abs() < 1e-8);
    }
}
