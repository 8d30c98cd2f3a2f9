//! Comparison arms: uniformly random exchange decisions, and a Gaussian
//! process over next-state prediction error with expected-improvement action
//! selection.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::mdp::{uniform_grid_action, ActionGrid, ActionValue};

/// Most recent samples kept by the surrogate.
pub const GP_CAPACITY: usize = 500;

pub fn random_action(grid: &ActionGrid, rng: &mut dyn RngCore) -> ActionValue {
    uniform_grid_action(grid, rng)
}

/// Squared-exponential kernel hyperparameters, in standardized input units.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyper {
    pub signal_var: f64,
    pub length_scales: Vec<f64>,
    /// Observation noise variance added to the diagonal (standardized target units).
    pub noise_var: f64,
}

impl GpHyper {
    pub fn isotropic(dim: usize, length: f64, signal_var: f64, noise_var: f64) -> Self {
        Self { signal_var, length_scales: vec![length; dim], noise_var }
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        self.signal_var * math::exp(-0.5 * r2)
    }
}

/// How hyperparameters are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperChoice {
    Fixed(GpHyper),
    /// Isotropic grid over length scale, signal variance and noise, scored by
    /// held-out predictive log density (last 20% of samples), falling back
    /// to the log marginal likelihood for small datasets.
    GridSearch { lengths: Vec<f64>, signal_vars: Vec<f64>, noise_vars: Vec<f64> },
}

impl Default for HyperChoice {
    fn default() -> Self {
        HyperChoice::GridSearch {
            lengths: vec![0.5, 1.0, 2.0, 4.0],
            signal_vars: vec![0.5, 1.0, 2.0],
            noise_vars: vec![1e-4, 1e-2, 1e-1],
        }
    }
}

/// Exact GP regression on standardized inputs and targets.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    pub hyper: GpHyper,
    /// Diagonal actually added (noise plus any escalation).
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn standardizer(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    let mut scale = vec![0.0; d];
    for r in rows {
        for ((s, x), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = math::sqrt(*s);
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    (mean, scale)
}

fn factor(x: &[Vec<f64>], hyper: &GpHyper) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| hyper.kernel(&x[i], &x[j]));
    let mut jitter = hyper.noise_var.max(1e-12);
    for _ in 0..8 {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::CholeskyFailed { jitter })
}

impl GpSurrogate {
    fn build(x: Vec<Vec<f64>>, y: &[f64], x_mean: Vec<f64>, x_scale: Vec<f64>, y_mean: f64, y_scale: f64, hyper: GpHyper) -> Result<Self> {
        let (chol, jitter) = factor(&x, &hyper)?;
        let yv = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));
        let alpha = chol.solve(&yv);
        Ok(Self { x, x_mean, x_scale, y_mean, y_scale, hyper, jitter, chol, alpha })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Query mapped into the standardized input space.
    pub fn standardize(&self, query: &[f64]) -> Vec<f64> {
        query.iter().zip(&self.x_mean).zip(&self.x_scale).map(|((q, m), s)| (q - m) / s).collect()
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// `(y_mean, y_scale)` of the target standardization.
    pub fn target_transform(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    /// Posterior mean and variance of the latent function, in target units.
    pub fn predict(&self, query: &[f64]) -> (f64, f64) {
        let q = self.standardize(query);
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|x| self.hyper.kernel(x, &q)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(k.len()));
        let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * self.y_scale * var)
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let l = self.chol.l();
        let logdet: f64 = (0..self.x.len()).map(|i| math::ln(l[(i, i)])).sum::<f64>() * 2.0;
        let yv = self.chol.l() * self.chol.l().transpose() * &self.alpha;
        -0.5 * yv.dot(&self.alpha) - 0.5 * logdet - 0.5 * n * math::LN_2PI
    }

    pub fn expected_improvement(&self, query: &[f64], best: f64) -> f64 {
        let (m, var) = self.predict(query);
        expected_improvement(m, math::sqrt(var), best)
    }
}

/// Fits the surrogate. Inputs and targets are standardized per dimension.
pub fn gp_fit(inputs: &[Vec<f64>], targets: &[f64], hyper: &HyperChoice) -> Result<GpSurrogate> {
    if inputs.len() < 2 || inputs.len() != targets.len() {
        return Err(invalid("GP needs at least two input-target pairs"));
    }
    let d = inputs[0].len();
    if d == 0 || inputs.iter().any(|r| r.len() != d) || inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(invalid("GP inputs must be finite and of equal dimension"));
    }
    let (x_mean, x_scale) = standardizer(inputs);
    let y_mean = math::mean(targets);
    let mut y_scale = math::sqrt(targets.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / targets.len() as f64);
    if !(y_scale > 1e-300) {
        y_scale = 1.0;
    }
    let x: Vec<Vec<f64>> = inputs
        .iter()
        .map(|r| r.iter().zip(&x_mean).zip(&x_scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let chosen = match hyper {
        HyperChoice::Fixed(h) => {
            if h.length_scales.len() != d {
                return Err(invalid("length scales do not match input dimension"));
            }
            h.clone()
        }
        HyperChoice::GridSearch { lengths, signal_vars, noise_vars } => {
            select_hyper(&x, targets, y_mean, y_scale, d, lengths, signal_vars, noise_vars)?
        }
    };
    GpSurrogate::build(x, targets, x_mean, x_scale, y_mean, y_scale, chosen)
}

#[allow(clippy::too_many_arguments)]
fn select_hyper(
    x: &[Vec<f64>],
    y: &[f64],
    y_mean: f64,
    y_scale: f64,
    d: usize,
    lengths: &[f64],
    signal_vars: &[f64],
    noise_vars: &[f64],
) -> Result<GpHyper> {
    let n = x.len();
    let held = n / 5;
    let mut best: Option<(f64, GpHyper)> = None;
    for &l in lengths {
        for &sv in signal_vars {
            for &nv in noise_vars {
                // Length scales grow with sqrt(d) so distances stay O(1).
                let h = GpHyper::isotropic(d, l * math::sqrt(d as f64), sv, nv);
                let score = if held >= 2 {
                    let split = n - held;
                    let Ok(g) = GpSurrogate::build(
                        x[..split].to_vec(),
                        &y[..split],
                        vec![0.0; d],
                        vec![1.0; d],
                        y_mean,
                        y_scale,
                        h.clone(),
                    ) else {
                        continue;
                    };
                    x[split..]
                        .iter()
                        .zip(&y[split..])
                        .map(|(q, t)| {
                            let (m, v) = g.predict(q);
                            let v = v + y_scale * y_scale * g.jitter;
                            -0.5 * (t - m) * (t - m) / v - 0.5 * math::ln(v) - 0.5 * math::LN_2PI
                        })
                        .sum::<f64>()
                } else {
                    match GpSurrogate::build(x.to_vec(), y, vec![0.0; d], vec![1.0; d], y_mean, y_scale, h.clone()) {
                        Ok(g) => g.log_marginal_likelihood(),
                        Err(_) => continue,
                    }
                };
                if score.is_finite() && best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, h));
                }
            }
        }
    }
    best.map(|(_, h)| h).ok_or(Error::CholeskyFailed { jitter: f64::INFINITY })
}

/// `E[max(0, Y - best)]` for `Y ~ N(mean, sd^2)`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let imp = mean - best;
    if !(sd > 0.0) {
        return imp.max(0.0);
    }
    let z = imp / sd;
    (imp * math::normal_cdf(z) + sd * math::normal_pdf(z)).max(0.0)
}

/// Concatenated surrogate input `(s, b)`.
pub fn gp_input(state: &[f64], action: ActionValue) -> Vec<f64> {
    let mut v = state.to_vec();
    v.push(action.b);
    v
}

/// The grid action with the largest expected improvement at `state`; falls
/// back to a random action without a surrogate.
pub fn gp_select_action(
    surrogate: Option<&GpSurrogate>,
    state: &[f64],
    best: f64,
    grid: &ActionGrid,
    rng: &mut dyn RngCore,
) -> Result<ActionValue> {
    let Some(gp) = surrogate else {
        return Ok(random_action(grid, rng));
    };
    if grid.is_empty() {
        return Err(invalid("empty action grid"));
    }
    let ei: Vec<f64> = grid.iter().map(|a| gp.expected_improvement(&gp_input(state, a), best)).collect();
    Ok(grid.get(math::argmax(&ei).ok_or(Error::SelectionFailed)?))
}
