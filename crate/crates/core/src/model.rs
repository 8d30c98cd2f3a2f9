//! Parametric Gaussian transition models `s' = f(s, a; beta) + eps`.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::dual::{Dual, Scalar};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::mdp::{ActionValue, Dynamics, State, TransitionSample};

/// Diagonal noise standard deviations, one per state entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    std: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(std: Vec<f64>) -> Result<Self> {
        if std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("noise standard deviations must be finite and non-negative"));
        }
        Ok(Self { std })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { std: vec![0.0; dim] }
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn variances(&self) -> Vec<f64> {
        self.std.iter().map(|s| s * s).collect()
    }

    pub fn dim(&self) -> usize {
        self.std.len()
    }

    pub fn is_positive(&self) -> bool {
        self.std.iter().all(|&s| s > 0.0)
    }
}

/// Per-entry box constraints for a parameter vector, `0 < lower <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("bound vectors differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(*l > 0.0 && l <= u)) {
            return Err(invalid("bounds need 0 < lower <= upper"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clip(&self, beta: &mut [f64]) {
        for ((b, l), u) in beta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *b = b.clamp(*l, *u);
        }
    }

    pub fn contains(&self, beta: &[f64]) -> bool {
        beta.len() == self.dim() && beta.iter().zip(&self.lower).zip(&self.upper).all(|((b, l), u)| l <= b && b <= u)
    }
}

/// A deterministic mean function `f(s, a; beta)` that can be evaluated with
/// any [`Scalar`], so forward-mode derivatives come for free.
pub trait MeanFunction {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn bounds(&self) -> &Bounds;

    fn mean_generic<T: Scalar>(&self, state: &[f64], action: ActionValue, beta: &[T]) -> Result<Vec<T>>;

    fn mean(&self, state: &[f64], action: ActionValue, beta: &[f64]) -> Result<Vec<f64>> {
        self.mean_generic(state, action, beta)
    }

    /// Whether sampled states are projected onto the non-negative orthant.
    fn nonnegative_states(&self) -> bool {
        false
    }
}

/// `d_state x d_beta` Jacobian stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Mean and its Jacobian in one call, by forward-mode differentiation
/// (one dual pass per parameter).
pub fn mean_and_jacobian<M: MeanFunction + ?Sized>(
    model: &M,
    state: &[f64],
    action: ActionValue,
    beta: &[f64],
) -> Result<(Vec<f64>, Jacobian)> {
    let p = beta.len();
    let mut duals: Vec<Dual> = beta.iter().map(|&b| Dual::constant(b)).collect();
    let mut mean = Vec::new();
    let mut data = Vec::new();
    let mut rows = 0;
    for j in 0..p {
        duals[j].du = 1.0;
        let out = model.mean_generic(state, action, &duals)?;
        duals[j].du = 0.0;
        if j == 0 {
            rows = out.len();
            mean = out.iter().map(|d| d.re).collect();
            data = vec![0.0; rows * p];
        }
        for (r, d) in out.iter().enumerate() {
            data[r * p + j] = d.du;
        }
    }
    if p == 0 {
        mean = model.mean(state, action, beta)?;
        rows = mean.len();
    }
    if data.iter().chain(mean.iter()).any(|x| !x.is_finite()) {
        return Err(Error::DivergedModel);
    }
    Ok((mean, Jacobian { rows, cols: p, data }))
}

/// Central finite-difference Jacobian with relative step `rel_step`.
pub fn jacobian_central_fd<M: MeanFunction + ?Sized>(
    model: &M,
    state: &[f64],
    action: ActionValue,
    beta: &[f64],
    rel_step: f64,
) -> Result<Jacobian> {
    let p = beta.len();
    let mut work = beta.to_vec();
    let mut data = Vec::new();
    let mut rows = 0;
    for j in 0..p {
        let h = rel_step * beta[j].abs().max(1e-8);
        work[j] = beta[j] + h;
        let plus = model.mean(state, action, &work)?;
        work[j] = beta[j] - h;
        let minus = model.mean(state, action, &work)?;
        work[j] = beta[j];
        if j == 0 {
            rows = plus.len();
            data = vec![0.0; rows * p];
        }
        for r in 0..rows {
            data[r * p + j] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::DivergedModel);
    }
    Ok(Jacobian { rows, cols: p, data })
}

/// `f(s, a; beta)` plus diagonal Gaussian noise.
#[derive(Debug, Clone)]
pub struct GaussianModel<M> {
    pub mean_fn: M,
    pub noise: NoiseSpec,
}

impl<M: MeanFunction> GaussianModel<M> {
    pub fn new(mean_fn: M, noise: NoiseSpec) -> Result<Self> {
        if noise.dim() != mean_fn.state_dim() {
            return Err(invalid("noise dimension does not match state dimension"));
        }
        Ok(Self { mean_fn, noise })
    }

    pub fn param_dim(&self) -> usize {
        self.mean_fn.param_dim()
    }

    /// Gaussian log-density of `s'` given `f(s, a; beta)`.
    pub fn log_likelihood(&self, sample: &TransitionSample, beta: &[f64]) -> Result<f64> {
        let f = self.mean_fn.mean(&sample.state, sample.action, beta)?;
        self.log_density(&f, &sample.next_state)
    }

    pub fn log_density(&self, mean: &[f64], next: &[f64]) -> Result<f64> {
        if !self.noise.is_positive() {
            return Err(invalid("log-likelihood needs strictly positive noise variances"));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::DivergedModel);
        }
        let mut ll = 0.0;
        for ((m, x), s) in mean.iter().zip(next).zip(self.noise.std()) {
            let var = s * s;
            let r = x - m;
            ll += -0.5 * r * r / var - 0.5 * (math::LN_2PI + math::ln(var));
        }
        Ok(ll)
    }

    /// One draw of `s'`.
    pub fn sample_next(
        &self,
        state: &[f64],
        action: ActionValue,
        beta: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<State> {
        let mut next = self.mean_fn.mean(state, action, beta)?;
        self.add_noise(&mut next, rng);
        Ok(next)
    }

    pub fn add_noise(&self, state: &mut [f64], rng: &mut dyn RngCore) {
        let clamp = self.mean_fn.nonnegative_states();
        for (x, s) in state.iter_mut().zip(self.noise.std()) {
            if *s > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *x += s * z;
            }
            if clamp && *x < 0.0 {
                *x = 0.0;
            }
        }
    }

    /// The model with its parameters fixed, usable as [`Dynamics`].
    pub fn at<'a>(&'a self, beta: &[f64]) -> Bound<'a, M> {
        Bound { model: self, beta: beta.to_vec() }
    }
}

/// A [`GaussianModel`] pinned at one parameter vector.
#[derive(Debug, Clone)]
pub struct Bound<'a, M> {
    pub model: &'a GaussianModel<M>,
    pub beta: Vec<f64>,
}

impl<M: MeanFunction> Dynamics for Bound<'_, M> {
    fn state_dim(&self) -> usize {
        self.model.mean_fn.state_dim()
    }

    fn step(&self, state: &[f64], action: ActionValue, rng: &mut dyn RngCore) -> Result<State> {
        self.model.sample_next(state, action, &self.beta, rng)
    }
}

/// Linear-in-parameters testbed: `f_i = beta_i * g(b) * s_i` with action gain
/// `g(b) = gain_offset + gain_slope * b`. With the default gain the model is
/// `s' = beta * s + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTestbed {
    dim: usize,
    pub gain_offset: f64,
    pub gain_slope: f64,
    bounds: Bounds,
}

impl LinearTestbed {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gain_offset: 1.0,
            gain_slope: 0.0,
            bounds: Bounds { lower: vec![1e-6; dim], upper: vec![10.0; dim] },
        }
    }

    pub fn with_gain(mut self, offset: f64, slope: f64) -> Self {
        self.gain_offset = offset;
        self.gain_slope = slope;
        self
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        assert_eq!(bounds.dim(), self.dim);
        self.bounds = bounds;
        self
    }

    pub fn gain(&self, action: ActionValue) -> f64 {
        self.gain_offset + self.gain_slope * action.b
    }

    /// Regressors `x_i = g(b) s_i`.
    pub fn features(&self, state: &[f64], action: ActionValue) -> Vec<f64> {
        let g = self.gain(action);
        state.iter().map(|s| g * s).collect()
    }
}

impl MeanFunction for LinearTestbed {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn mean_generic<T: Scalar>(&self, state: &[f64], action: ActionValue, beta: &[T]) -> Result<Vec<T>> {
        if state.len() != self.dim || beta.len() != self.dim {
            return Err(invalid("linear testbed dimension mismatch"));
        }
        let g = self.gain(action);
        Ok(state.iter().zip(beta).map(|(&s, &b)| b * T::from_f64(g * s)).collect())
    }
}
