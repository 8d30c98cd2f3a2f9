//! Maximum-likelihood calibration of the mean-function parameters, asymptotic
//! covariance and conditional Fisher information.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::mdp::{ActionValue, Dataset, TransitionSample};
use crate::model::{mean_and_jacobian, GaussianModel, Jacobian, MeanFunction};

/// Gaussian log-likelihood of one transition.
pub fn log_likelihood<M: MeanFunction>(model: &GaussianModel<M>, sample: &TransitionSample, beta: &[f64]) -> Result<f64> {
    model.log_likelihood(sample, beta)
}

/// Mean log-likelihood over a set of transitions.
pub fn mean_log_likelihood<M: MeanFunction>(
    model: &GaussianModel<M>,
    samples: &[TransitionSample],
    beta: &[f64],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    let mut acc = 0.0;
    for s in samples {
        acc += model.log_likelihood(s, beta)?;
    }
    Ok(acc / samples.len() as f64)
}

/// Mean log-likelihood and its gradient with respect to `beta`
/// (forward-mode Jacobians of the mean).
pub fn mean_log_likelihood_grad<M: MeanFunction>(
    model: &GaussianModel<M>,
    samples: &[TransitionSample],
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    let var = model.noise.variances();
    let p = beta.len();
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    for s in samples {
        let (f, jac) = mean_and_jacobian(&model.mean_fn, &s.state, s.action, beta)?;
        ll += model.log_density(&f, &s.next_state)?;
        for (r, (fr, xr)) in f.iter().zip(&s.next_state).enumerate() {
            let w = (xr - fr) / var[r];
            for (j, g) in grad.iter_mut().enumerate() {
                *g += w * jac.data[r * p + j];
            }
        }
    }
    let n = samples.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((ll / n, grad))
}

/// Jacobian `d f(s, a; beta) / d beta`, one column per calibrated parameter.
pub fn jacobian_mean<M: MeanFunction>(state: &[f64], action: ActionValue, beta: &[f64], model: &M) -> Result<Jacobian> {
    if !model.bounds().contains(beta) {
        return Err(invalid("beta lies outside its bounds"));
    }
    Ok(mean_and_jacobian(model, state, action, beta)?.1)
}

/// Conditional Fisher information `J^T Sigma^-1 J` of one state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
}

impl FisherInfo {
    fn from_jacobian(jac: &Jacobian, var: &[f64]) -> Self {
        let j = jac.to_matrix();
        let w = DMatrix::from_fn(jac.rows, jac.cols, |r, c| j[(r, c)] / var[r]);
        let mut m = j.transpose() * w;
        symmetrize(&mut m);
        Self { matrix: m }
    }

    /// `Tr(I C)` for a symmetric `C`.
    pub fn trace_product(&self, c: &DMatrix<f64>) -> f64 {
        self.matrix.component_mul(c).sum()
    }
}

pub fn conditional_fisher_info<M: MeanFunction>(
    state: &[f64],
    action: ActionValue,
    beta: &[f64],
    model: &GaussianModel<M>,
) -> Result<FisherInfo> {
    if !model.noise.is_positive() {
        return Err(invalid("Fisher information needs strictly positive noise variances"));
    }
    let jac = mean_and_jacobian(&model.mean_fn, state, action, beta)?.1;
    Ok(FisherInfo::from_jacobian(&jac, &model.noise.variances()))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Optimizer used by [`mle_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    /// Adaptive-moment gradient ascent with projection onto the bounds.
    Adam,
    /// Damped Gauss-Newton on the whitened residuals.
    LevenbergMarquardt,
}

/// Coordinates the optimizer works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Linear,
    /// `theta = ln(beta)`; steps are relative, suited to positive constants
    /// spanning several orders of magnitude.
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub method: FitMethod,
    pub parameterization: Parameterization,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Fraction of episodes held out for early stopping; 0 disables.
    pub validation_fraction: f64,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::Adam,
            parameterization: Parameterization::Linear,
            learning_rate: 1e-3,
            max_epochs: 2000,
            patience: 50,
            validation_fraction: 0.2,
            grad_tol: 1e-10,
        }
    }
}

impl FitOptions {
    pub fn levenberg_marquardt() -> Self {
        Self {
            method: FitMethod::LevenbergMarquardt,
            parameterization: Parameterization::Log,
            max_epochs: 50,
            patience: 5,
            ..Self::default()
        }
    }
}

/// One row of the fit diagnostics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ll: f64,
    /// NaN when no validation split is used.
    pub validation_ll: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxEpochs,
    EarlyStopping,
    /// The optimizer made no progress (step size collapsed).
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub train_ll: f64,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Splits transitions into training and validation sets by whole episodes:
/// every `round(1 / fraction)`-th episode goes to validation.
pub fn split_by_episode(data: &Dataset, fraction: f64) -> (Vec<TransitionSample>, Vec<TransitionSample>) {
    let episodes = data.episodes();
    let samples = data.samples();
    if !(fraction > 0.0) || episodes.len() < 2 {
        return (samples.to_vec(), Vec::new());
    }
    let stride = ((1.0 / fraction).round() as usize).max(2);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (e, range) in episodes.into_iter().enumerate() {
        let dest = if e % stride == stride - 1 { &mut val } else { &mut train };
        dest.extend_from_slice(&samples[range]);
    }
    if val.is_empty() || train.is_empty() {
        return (samples.to_vec(), Vec::new());
    }
    (train, val)
}

struct Coords {
    param: Parameterization,
}

impl Coords {
    fn to_theta(&self, beta: &[f64]) -> Vec<f64> {
        match self.param {
            Parameterization::Linear => beta.to_vec(),
            Parameterization::Log => beta.iter().map(|&b| math::ln(b)).collect(),
        }
    }

    fn to_beta(&self, theta: &[f64], model_bounds: &crate::model::Bounds) -> Vec<f64> {
        let mut beta: Vec<f64> = match self.param {
            Parameterization::Linear => theta.to_vec(),
            Parameterization::Log => theta.iter().map(|&t| math::exp(t)).collect(),
        };
        model_bounds.clip(&mut beta);
        beta
    }

    /// Chain rule from `d/d beta` to `d/d theta`.
    fn grad(&self, beta: &[f64], g: &mut [f64]) {
        if self.param == Parameterization::Log {
            for (gi, b) in g.iter_mut().zip(beta) {
                *gi *= b;
            }
        }
    }
}

/// Maximum-likelihood estimate of `beta` from a (dependent) transition dataset.
///
/// The returned point never has a lower training mean log-likelihood than
/// `init`.
pub fn mle_fit<M: MeanFunction>(
    data: &Dataset,
    init: &[f64],
    model: &GaussianModel<M>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(invalid("cannot fit an empty dataset"));
    }
    if init.len() != model.param_dim() {
        return Err(invalid("initial beta has the wrong dimension"));
    }
    if !model.noise.is_positive() {
        return Err(invalid("fitting needs strictly positive noise variances"));
    }
    let bounds = model.mean_fn.bounds();
    let mut start = init.to_vec();
    bounds.clip(&mut start);
    if opts.parameterization == Parameterization::Log && start.iter().any(|&b| !(b > 0.0)) {
        return Err(invalid("log parameterization needs positive parameters"));
    }
    let (train, val) = split_by_episode(data, opts.validation_fraction);
    match opts.method {
        FitMethod::Adam => fit_adam(model, &train, &val, &start, opts),
        FitMethod::LevenbergMarquardt => fit_lm(model, &train, &val, &start, opts),
    }
}

/// Tracks the early-stopping state and the best point seen.
struct Tracker {
    best_beta: Vec<f64>,
    best_train: f64,
    best_score: f64,
    since_best: usize,
    init_beta: Vec<f64>,
    init_train: f64,
    history: Vec<EpochRecord>,
}

impl Tracker {
    fn new(beta: &[f64], train_ll: f64) -> Self {
        Self {
            best_beta: beta.to_vec(),
            best_train: train_ll,
            best_score: f64::NEG_INFINITY,
            since_best: 0,
            init_beta: beta.to_vec(),
            init_train: train_ll,
            history: Vec::new(),
        }
    }

    /// Records an epoch; returns true when patience is exhausted.
    fn record(&mut self, rec: EpochRecord, beta: &[f64], patience: usize) -> bool {
        self.history.push(rec);
        let score = if rec.validation_ll.is_nan() { rec.train_ll } else { rec.validation_ll };
        if score > self.best_score {
            self.best_score = score;
            self.best_beta = beta.to_vec();
            self.best_train = rec.train_ll;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        patience > 0 && self.since_best >= patience
    }

    fn finish(self, stop: StopReason) -> FitResult {
        let (beta, train_ll) = if self.best_train >= self.init_train {
            (self.best_beta, self.best_train)
        } else {
            (self.init_beta, self.init_train)
        };
        FitResult { beta, train_ll, history: self.history, stop }
    }
}

fn validation_ll<M: MeanFunction>(model: &GaussianModel<M>, val: &[TransitionSample], beta: &[f64]) -> f64 {
    if val.is_empty() {
        return f64::NAN;
    }
    mean_log_likelihood(model, val, beta).unwrap_or(f64::NEG_INFINITY)
}

fn fit_adam<M: MeanFunction>(
    model: &GaussianModel<M>,
    train: &[TransitionSample],
    val: &[TransitionSample],
    start: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let bounds = model.mean_fn.bounds();
    let coords = Coords { param: opts.parameterization };
    let p = start.len();

    let (ll0, _) = mean_log_likelihood_grad(model, train, start)?;
    let mut tracker = Tracker::new(start, ll0);
    let mut beta = start.to_vec();
    let mut theta = coords.to_theta(&beta);
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut lr = opts.learning_rate;
    let mut t = 0i32;
    let mut prev_ll = f64::NEG_INFINITY;
    let mut diverged = 0usize;

    for epoch in 0..opts.max_epochs {
        let (ll, mut g) = match mean_log_likelihood_grad(model, train, &beta) {
            Ok(x) => x,
            Err(_) => {
                diverged += 1;
                beta = tracker.best_beta.clone();
                theta = coords.to_theta(&beta);
                lr *= 0.5;
                continue;
            }
        };
        coords.grad(&beta, &mut g);
        let gnorm = math::norm2(&g);
        let stop = tracker.record(
            EpochRecord { epoch, train_ll: ll, validation_ll: validation_ll(model, val, &beta), grad_norm: gnorm },
            &beta,
            opts.patience,
        );
        if stop {
            return Ok(tracker.finish(StopReason::EarlyStopping));
        }
        if gnorm < opts.grad_tol {
            return Ok(tracker.finish(StopReason::GradientTolerance));
        }
        // Shrink the step whenever the objective gets worse so the iterates
        // settle instead of orbiting the optimum.
        if ll < prev_ll {
            lr *= 0.5;
        }
        prev_ll = ll;
        if lr < 1e-14 * opts.learning_rate.max(1e-300) {
            return Ok(tracker.finish(StopReason::Stalled));
        }
        t += 1;
        let c1 = 1.0 - math::powi(B1, t);
        let c2 = 1.0 - math::powi(B2, t);
        for j in 0..p {
            m[j] = B1 * m[j] + (1.0 - B1) * g[j];
            v[j] = B2 * v[j] + (1.0 - B2) * g[j] * g[j];
            theta[j] += lr * (m[j] / c1) / (math::sqrt(v[j] / c2) + EPS);
        }
        beta = coords.to_beta(&theta, bounds);
        theta = coords.to_theta(&beta);
    }
    if diverged == opts.max_epochs {
        return Err(Error::FitFailed { iterations: diverged, best: tracker.best_beta });
    }
    Ok(tracker.finish(StopReason::MaxEpochs))
}

/// Whitened residuals and Jacobian of the residuals in optimizer coordinates.
fn residual_system<M: MeanFunction>(
    model: &GaussianModel<M>,
    samples: &[TransitionSample],
    beta: &[f64],
    coords: &Coords,
) -> Result<(f64, DMatrix<f64>, DVector<f64>)> {
    let std = model.noise.std();
    let p = beta.len();
    let mut jtj = DMatrix::zeros(p, p);
    let mut jtr = DVector::zeros(p);
    let mut ll = 0.0;
    let mut row = vec![0.0; p];
    for s in samples {
        let (f, jac) = mean_and_jacobian(&model.mean_fn, &s.state, s.action, beta)?;
        ll += model.log_density(&f, &s.next_state)?;
        for r in 0..f.len() {
            let res = (s.next_state[r] - f[r]) / std[r];
            for j in 0..p {
                row[j] = jac.data[r * p + j] / std[r];
            }
            coords.grad(beta, &mut row);
            for i in 0..p {
                jtr[i] += row[i] * res;
                for j in 0..=i {
                    jtj[(i, j)] += row[i] * row[j];
                }
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            jtj[(j, i)] = jtj[(i, j)];
        }
    }
    Ok((ll / samples.len() as f64, jtj, jtr))
}

fn fit_lm<M: MeanFunction>(
    model: &GaussianModel<M>,
    train: &[TransitionSample],
    val: &[TransitionSample],
    start: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let bounds = model.mean_fn.bounds();
    let coords = Coords { param: opts.parameterization };
    let p = start.len();
    let mut beta = start.to_vec();
    let (mut ll, mut jtj, mut jtr) = residual_system(model, train, &beta, &coords)?;
    let mut tracker = Tracker::new(&beta, ll);
    let mut damping = 1e-3;

    for epoch in 0..opts.max_epochs {
        let gnorm = jtr.norm() / train.len() as f64;
        let stop = tracker.record(
            EpochRecord { epoch, train_ll: ll, validation_ll: validation_ll(model, val, &beta), grad_norm: gnorm },
            &beta,
            opts.patience,
        );
        if stop {
            return Ok(tracker.finish(StopReason::EarlyStopping));
        }
        if gnorm < opts.grad_tol {
            return Ok(tracker.finish(StopReason::GradientTolerance));
        }
        let theta = coords.to_theta(&beta);
        let mut accepted = false;
        while damping < 1e12 {
            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&jtr)) else {
                damping *= 10.0;
                continue;
            };
            let cand_theta: Vec<f64> = (0..p).map(|i| theta[i] + delta[i]).collect();
            let cand = coords.to_beta(&cand_theta, bounds);
            match mean_log_likelihood(model, train, &cand) {
                Ok(cll) if cll > ll => {
                    beta = cand;
                    damping = (damping * 0.3).max(1e-9);
                    accepted = true;
                    break;
                }
                _ => damping *= 10.0,
            }
        }
        if !accepted {
            return Ok(tracker.finish(StopReason::Stalled));
        }
        (ll, jtj, jtr) = residual_system(model, train, &beta, &coords)?;
    }
    Ok(tracker.finish(StopReason::MaxEpochs))
}

/// How the average negative Hessian is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// `J^T Sigma^-1 J` per sample.
    GaussNewton,
    /// Central differences of the forward-mode gradient.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceOptions {
    pub mode: HessianMode,
    /// Ridge is `ridge_scale * trace / d`, but at least `min_ridge`.
    pub ridge_scale: f64,
    pub min_ridge: f64,
    /// Larger condition numbers of the regularized matrix are rejected.
    pub max_condition: f64,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self { mode: HessianMode::GaussNewton, ridge_scale: 1e-6, min_ridge: 1e-12, max_condition: 1e15 }
    }
}

/// Asymptotic covariance `Sigma(beta_hat)` of the estimator: the inverse of
/// the average negative Hessian. The covariance of `beta_hat` itself is
/// approximately `matrix / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub n: usize,
    pub mode: HessianMode,
    pub ridge: f64,
}

impl CovarianceEstimate {
    /// Plug-in covariance of the estimate, `matrix / n`.
    pub fn estimator_covariance(&self) -> DMatrix<f64> {
        &self.matrix / self.n.max(1) as f64
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// A fixed covariance, not tied to any dataset (`n = 1`).
    pub fn fixed(matrix: DMatrix<f64>) -> Self {
        Self { matrix, n: 1, mode: HessianMode::GaussNewton, ridge: 0.0 }
    }
}

/// Average negative Hessian of the log-likelihood over `samples`.
pub fn average_information<M: MeanFunction>(
    samples: &[TransitionSample],
    beta: &[f64],
    model: &GaussianModel<M>,
    mode: HessianMode,
) -> Result<DMatrix<f64>> {
    let p = beta.len();
    let n = samples.len() as f64;
    let mut h = DMatrix::zeros(p, p);
    match mode {
        HessianMode::GaussNewton => {
            let var = model.noise.variances();
            for s in samples {
                let jac = mean_and_jacobian(&model.mean_fn, &s.state, s.action, beta)?.1;
                h += FisherInfo::from_jacobian(&jac, &var).matrix;
            }
            h /= n;
        }
        HessianMode::Exact => {
            let mut work = beta.to_vec();
            for j in 0..p {
                let step = 1e-5 * beta[j].abs().max(1e-8);
                work[j] = beta[j] + step;
                let (_, gp) = mean_log_likelihood_grad(model, samples, &work)?;
                work[j] = beta[j] - step;
                let (_, gm) = mean_log_likelihood_grad(model, samples, &work)?;
                work[j] = beta[j];
                for i in 0..p {
                    h[(i, j)] = -(gp[i] - gm[i]) / (2.0 * step);
                }
            }
            symmetrize(&mut h);
        }
    }
    Ok(h)
}

pub fn estimate_covariance<M: MeanFunction>(
    data: &Dataset,
    beta_hat: &[f64],
    model: &GaussianModel<M>,
    opts: &CovarianceOptions,
) -> Result<CovarianceEstimate> {
    let p = beta_hat.len();
    if data.len() < p {
        return Err(invalid("covariance estimation needs at least as many samples as parameters"));
    }
    if !model.noise.is_positive() {
        return Err(invalid("covariance estimation needs strictly positive noise variances"));
    }
    let mut h = average_information(data.samples(), beta_hat, model, opts.mode)?;
    let ridge = (opts.ridge_scale * h.trace() / p.max(1) as f64).max(opts.min_ridge);
    for i in 0..p {
        h[(i, i)] += ridge;
    }
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= opts.max_condition) {
        return Err(Error::IllConditioned { condition });
    }
    let mut inv = match h.clone().cholesky() {
        Some(c) => c.inverse(),
        None => h.try_inverse().ok_or(Error::IllConditioned { condition })?,
    };
    symmetrize(&mut inv);
    Ok(CovarianceEstimate { matrix: inv, n: data.len(), mode: opts.mode, ridge })
}
